use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{pca, ActivationRecord, PCAResult, RecordKind};
use crate::cachesim::SimResult;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::trace::{LineId, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    /// `None` for the unseen-line row, which collects every line of the trace
    /// missing from the vocabulary.
    pub line: Option<LineId>,
    /// Projection of the line's embedding onto the top components.
    pub projections: Vec<f64>,
    pub accesses: u64,
    pub hits: u64,
    pub hit_rate: f64,
}

/// Address-embedding PCA joined with per-line hit statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    /// Fitted on the embeddings of the vocabulary lines.
    pub pca: PCAResult,
    /// One row per line touched by the trace, ascending, then the unseen row
    /// if any line fell back to it.
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingReport {
    /// `line,accesses,hits,hit_rate,pc0,...`; the unseen row is labeled `oov`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        use std::fmt::Write as _;
        let mut buf = String::from("line,accesses,hits,hit_rate");
        for c in 0..self.pca.k {
            let _ = write!(buf, ",pc{c}");
        }
        buf.push('\n');
        for row in &self.rows {
            match row.line {
                Some(l) => {
                    let _ = write!(buf, "{l:#x}");
                }
                None => buf.push_str("oov"),
            }
            let _ = write!(buf, ",{},{},{}", row.accesses, row.hits, row.hit_rate);
            for p in &row.projections {
                let _ = write!(buf, ",{p}");
            }
            buf.push('\n');
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }
}

pub fn embedding_report(model: &Model, trace: &Trace, sim: &SimResult, k: usize) -> Result<EmbeddingReport> {
    if sim.outcomes.len() != trace.len() {
        return Err(Error::InvalidInput(format!(
            "simulation covers {} accesses, trace has {}",
            sim.outcomes.len(),
            trace.len()
        )));
    }
    if trace.line_size() != model.line_size() {
        return Err(Error::InvalidInput(format!(
            "model uses {}-byte lines, trace uses {}",
            model.line_size(),
            trace.line_size()
        )));
    }
    let d = model.dims();
    let emb = model.address_embeddings();
    let vocab_rows = d.addr_rows - 1;
    let fit = ActivationRecord::new(
        RecordKind::AddressEmbedding,
        vocab_rows,
        d.embed,
        emb[d.embed..].to_vec(),
    )?;
    let result = pca(&fit, k)?;
    let all = ActivationRecord::new(RecordKind::AddressEmbedding, d.addr_rows, d.embed, emb.to_vec())?;
    let projected = result.project(&all)?;

    // embedding row -> (line, accesses, hits)
    let mut stats: BTreeMap<usize, (Option<LineId>, u64, u64)> = BTreeMap::new();
    for (line, &hit) in trace.lines().zip(&sim.outcomes) {
        let row = model.vocab().line_row(line);
        let e = stats
            .entry(row)
            .or_insert((if row == 0 { None } else { Some(line) }, 0, 0));
        e.1 += 1;
        e.2 += hit as u64;
    }

    let rows: Vec<EmbeddingRow> = stats
        .iter()
        .filter(|(&r, _)| r != 0)
        .chain(stats.iter().filter(|(&r, _)| r == 0))
        .map(|(&r, &(line, accesses, hits))| EmbeddingRow {
            line,
            projections: projected.row(r).to_vec(),
            accesses,
            hits,
            hit_rate: hits as f64 / accesses as f64,
        })
        .collect();
    Ok(EmbeddingReport { pca: result, rows })
}
