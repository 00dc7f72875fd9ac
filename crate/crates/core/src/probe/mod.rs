//! Inspection of model internals: PCA of recorded activations, correlation
//! of principal components with phases, and before/after-edit comparison.

mod embedding;
mod pca;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phases::PhaseLabeling;
use crate::streams::IndexMap;

pub use embedding::{embedding_report, EmbeddingReport, EmbeddingRow};
pub use pca::{pca, PCAResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordKind {
    HiddenState,
    AddressEmbedding,
    AttentionWeights,
    /// Projections onto principal components.
    Projection,
}

/// A `rows x cols` matrix of recorded activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationRecord {
    kind: RecordKind,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    /// Old-to-new index map when the record comes from an edited trace.
    pub alignment: Option<IndexMap>,
}

impl ActivationRecord {
    pub fn new(kind: RecordKind, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::InvalidInput("activation record needs at least one column".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{rows} x {cols} record given {} values",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite activation at row {}, column {}",
                i / cols,
                i % cols
            )));
        }
        Ok(Self {
            kind,
            rows,
            cols,
            data,
            alignment: None,
        })
    }

    pub fn with_alignment(mut self, map: IndexMap) -> Self {
        self.alignment = Some(map);
        self
    }

    pub fn kind(&self) -> RecordKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Keeps only the rows for which `keep` holds.
    pub fn select_rows(&self, keep: impl Fn(usize) -> bool) -> Self {
        let data: Vec<f64> = (0..self.rows)
            .filter(|&r| keep(r))
            .flat_map(|r| self.row(r).iter().copied())
            .collect();
        Self {
            kind: self.kind,
            rows: data.len() / self.cols,
            cols: self.cols,
            data,
            alignment: None,
        }
    }

    /// `row,column,value`
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        use std::fmt::Write as _;
        let mut buf = String::from("row,column,value\n");
        for r in 0..self.rows {
            for c in 0..self.cols {
                let _ = writeln!(buf, "{r},{c},{}", self.get(r, c));
            }
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }
}

/// Pearson r of each component's projection series against each phase's
/// 0/1 indicator. `None` where either series is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub components: usize,
    pub phases: usize,
    /// `components x phases`
    pub r: Vec<Option<f64>>,
}

impl CorrelationReport {
    pub fn get(&self, component: usize, phase: usize) -> Option<f64> {
        self.r[component * self.phases + phase]
    }

    /// Largest `|r|` over all pairs, with its component and phase.
    pub fn strongest(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for c in 0..self.components {
            for p in 0..self.phases {
                if let Some(r) = self.get(c, p) {
                    if best.is_none_or(|(_, _, b)| r.abs() > b.abs()) {
                        best = Some((c, p, r));
                    }
                }
            }
        }
        best
    }

    /// `component,phase,r`; missing values are left empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        use std::fmt::Write as _;
        let mut buf = String::from("component,phase,r\n");
        for c in 0..self.components {
            for p in 0..self.phases {
                match self.get(c, p) {
                    Some(r) => {
                        let _ = writeln!(buf, "{c},{p},{r}");
                    }
                    None => {
                        let _ = writeln!(buf, "{c},{p},");
                    }
                }
            }
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }
}

/// Pearson correlation; `None` when either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn correlate_with_phases(result: &PCAResult, labeling: &PhaseLabeling) -> Result<CorrelationReport> {
    if result.rows != labeling.len() {
        return Err(Error::InvalidInput(format!(
            "{} projection rows but {} phase labels",
            result.rows,
            labeling.len()
        )));
    }
    let phases = labeling.num_phases();
    let indicators: Vec<Vec<f64>> = (0..phases).map(|p| labeling.indicator(p)).collect();
    let mut r = Vec::with_capacity(result.k * phases);
    for c in 0..result.k {
        let series = result.series(c);
        for ind in &indicators {
            r.push(pearson(&series, ind));
        }
    }
    Ok(CorrelationReport {
        components: result.k,
        phases,
        r,
    })
}

/// Mean absolute difference between two aligned records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub mean_abs_diff: f64,
    /// Mean absolute difference of each column.
    pub per_component: Vec<f64>,
    /// Columns of `b` that were negated before differencing.
    pub flipped: Vec<bool>,
    pub rows_compared: usize,
}

/// Compares row `i` of `a` with row `alignment[i]` of `b`; rows of `a`
/// without a counterpart are skipped. Columns of projection records are
/// sign-aligned first: a column of `b` is negated when its dot product with
/// the matching column of `a` is negative.
pub fn compare_records(a: &ActivationRecord, b: &ActivationRecord, alignment: &IndexMap) -> Result<Comparison> {
    if a.cols != b.cols {
        return Err(Error::InvalidInput(format!(
            "records have {} and {} columns",
            a.cols, b.cols
        )));
    }
    if alignment.old_len() != a.rows {
        return Err(Error::InvalidInput(format!(
            "alignment covers {} rows, first record has {}",
            alignment.old_len(),
            a.rows
        )));
    }
    let pairs: Vec<(usize, usize)> = alignment.pairs().collect();
    if pairs.is_empty() {
        return Err(Error::InvalidInput("alignment has no surviving rows".into()));
    }
    if let Some(&(_, j)) = pairs.iter().find(|&&(_, j)| j >= b.rows) {
        return Err(Error::InvalidInput(format!(
            "alignment points to row {j} of a {}-row record",
            b.rows
        )));
    }

    let projection = a.kind == RecordKind::Projection && b.kind == RecordKind::Projection;
    let flipped: Vec<bool> = (0..a.cols)
        .map(|c| {
            projection && pairs.iter().map(|&(i, j)| a.get(i, c) * b.get(j, c)).sum::<f64>() < 0.0
        })
        .collect();

    let mut per_component = vec![0.0; a.cols];
    for &(i, j) in &pairs {
        for c in 0..a.cols {
            let bv = if flipped[c] { -b.get(j, c) } else { b.get(j, c) };
            per_component[c] += (a.get(i, c) - bv).abs();
        }
    }
    let total: f64 = per_component.iter().sum();
    let n = pairs.len() as f64;
    per_component.iter_mut().for_each(|s| *s /= n);
    Ok(Comparison {
        mean_abs_diff: total / (n * a.cols as f64),
        per_component,
        flipped,
        rows_compared: pairs.len(),
    })
}

#[cfg(test)]
mod tests;
