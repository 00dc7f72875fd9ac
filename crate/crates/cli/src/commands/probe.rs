use anyhow::{bail, Result};
use serde::Serialize;

use cacheprobe::cachesim::simulate;
use cacheprobe::model::{model_policy, record_activations, train_imitation};
use cacheprobe::probe::{compare_records, correlate_with_phases, embedding_report, pca, PCAResult};

use super::edit::apply_edit;
use super::{select_streams, Ctx, PHASES_FILE};
use crate::{ActivationKind, ProbeCommand};

pub fn run(ctx: Ctx, cmd: ProbeCommand) -> Result<()> {
    match cmd {
        ProbeCommand::Pca { kind } => pca_cmd(ctx, kind),
        ProbeCommand::Correlate { labels, planted } => correlate(ctx, labels, planted),
        ProbeCommand::Compare {
            select,
            suffix,
            retrain,
        } => compare(ctx, select, suffix, retrain),
        ProbeCommand::Embeddings => embeddings(ctx),
    }
}

#[derive(Serialize)]
struct PcaSummary {
    kind: ActivationKind,
    rows: usize,
    dims: usize,
    k: usize,
    explained_variance_ratio: Vec<f64>,
    variances: Vec<f64>,
}

impl PcaSummary {
    fn new(kind: ActivationKind, p: &PCAResult) -> Self {
        Self {
            kind,
            rows: p.rows,
            dims: p.dims,
            k: p.k,
            explained_variance_ratio: p.explained_variance_ratio.clone(),
            variances: p.variances.clone(),
        }
    }
}

fn fit(record: &cacheprobe::probe::ActivationRecord, wanted: usize) -> Result<PCAResult> {
    let k = wanted.min(record.rows()).min(record.cols());
    if record.rows() < 2 {
        bail!(
            "only {} activation rows recorded; PCA needs at least 2",
            record.rows()
        );
    }
    Ok(pca(record, k)?)
}

fn csv_bytes(p: &PCAResult) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    p.write_csv(&mut buf)?;
    Ok(buf)
}

fn pca_cmd(mut ctx: Ctx, kind: ActivationKind) -> Result<()> {
    let src = ctx.load_trace()?;
    let cache = ctx.cache()?;
    let model = ctx.load_model(&src.trace)?;
    let set = record_activations(&model, &src.trace, &cache)?;
    let record = match kind {
        ActivationKind::Hidden => &set.hidden,
        ActivationKind::Embedding => &set.embeddings,
        ActivationKind::Attention => &set.attention,
    };
    let p = fit(record, ctx.config.pca_components)?;
    let name = format!("{kind:?}").to_lowercase();
    ctx.rec.write(&format!("pca_{name}.csv"), &csv_bytes(&p)?)?;
    ctx.rec
        .write_json(&format!("pca_{name}.json"), &PcaSummary::new(kind, &p))?;
    let ratios: Vec<String> = p
        .explained_variance_ratio
        .iter()
        .map(|r| format!("{r:.3}"))
        .collect();
    println!(
        "{name}: {} rows, explained variance {}",
        p.rows,
        ratios.join(" ")
    );
    ctx.finish(
        &format!("probe-pca-{name}"),
        serde_json::json!({ "kind": kind }),
    )
}

#[derive(Serialize)]
struct Strongest {
    component: usize,
    phase: usize,
    r: f64,
}

#[derive(Serialize)]
struct CorrelationSummary {
    labels: String,
    strongest: Option<Strongest>,
    report: cacheprobe::probe::CorrelationReport,
}

fn correlate(mut ctx: Ctx, labels: Option<std::path::PathBuf>, planted: bool) -> Result<()> {
    let src = ctx.load_trace()?;
    let cache = ctx.cache()?;
    let (labeling, source) = if planted {
        match &src.planted {
            Some(p) => (p.phases.clone(), "planted".to_string()),
            None => bail!("--planted needs a synthetic trace source"),
        }
    } else {
        match labels {
            Some(path) => (ctx.load_labels(&path)?, path.display().to_string()),
            None => {
                ctx.require(PHASES_FILE, "phases")?;
                let path = ctx.rec.path(PHASES_FILE);
                (ctx.load_labels(&path)?, PHASES_FILE.to_string())
            }
        }
    };
    let model = ctx.load_model(&src.trace)?;
    let set = record_activations(&model, &src.trace, &cache)?;
    let p = fit(&set.hidden, ctx.config.pca_components)?;
    let report = correlate_with_phases(&p, &labeling)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let strongest = report.strongest().map(|(component, phase, r)| Strongest {
        component,
        phase,
        r,
    });
    match &strongest {
        Some(s) => println!(
            "strongest: PC{} vs phase {}: r = {:.4}",
            s.component, s.phase, s.r
        ),
        None => println!("no defined correlation (every phase indicator or PC is constant)"),
    }
    ctx.rec.write("correlation.csv", &csv)?;
    ctx.rec.write_json(
        "correlation.json",
        &CorrelationSummary {
            labels: source.clone(),
            strongest,
            report,
        },
    )?;
    ctx.finish("probe-correlate", serde_json::json!({ "labels": source }))
}

#[derive(Serialize)]
struct CompareSummary {
    edit: &'static str,
    mode: &'static str,
    streams: Vec<String>,
    accesses_before: usize,
    accesses_after: usize,
    #[serde(flatten)]
    comparison: cacheprobe::probe::Comparison,
}

fn compare(
    mut ctx: Ctx,
    select: crate::StreamSelection,
    suffix: Option<f64>,
    retrain: bool,
) -> Result<()> {
    let src = ctx.load_trace()?;
    let cache = ctx.cache()?;
    let all = ctx.load_streams(&src.trace)?;
    let chosen = select_streams(&all, &select)?;
    let edited = apply_edit(&src.trace, &chosen, suffix)?;
    let model = ctx.load_model(&src.trace)?;
    let after_model = if retrain {
        train_imitation(&edited.trace, &cache, &ctx.config.model())?.0
    } else {
        model.clone()
    };

    let before = record_activations(&model, &src.trace, &cache)?;
    let after = record_activations(&after_model, &edited.trace, &cache)?;
    let k = ctx.config.pca_components;
    let pre = fit(&before.hidden, k)?;
    let post = fit(&after.hidden, k)?;
    let cmp = compare_records(
        &pre.projection_record(),
        &post.projection_record(),
        &edited.index_map,
    )?;
    println!(
        "mean abs difference {:.6} over {} aligned timesteps",
        cmp.mean_abs_diff, cmp.rows_compared
    );
    let summary = CompareSummary {
        edit: if suffix.is_some() {
            "keep-suffix"
        } else {
            "remove"
        },
        mode: if retrain { "retrain" } else { "rerun" },
        streams: chosen.iter().map(|s| s.to_sidecar_line()).collect(),
        accesses_before: src.trace.len(),
        accesses_after: edited.trace.len(),
        comparison: cmp,
    };
    ctx.rec.write("pca_before.csv", &csv_bytes(&pre)?)?;
    ctx.rec.write("pca_after.csv", &csv_bytes(&post)?)?;
    ctx.rec.write_json("compare.json", &summary)?;
    ctx.finish(
        "probe-compare",
        serde_json::json!({ "select": select, "suffix": suffix, "retrain": retrain }),
    )
}

fn embeddings(mut ctx: Ctx) -> Result<()> {
    let src = ctx.load_trace()?;
    let cache = ctx.cache()?;
    let model = ctx.load_model(&src.trace)?;
    let sim = simulate(&src.trace, &cache, &mut model_policy(&model))?;
    let k = ctx
        .config
        .pca_components
        .min(model.dims().embed)
        .min(model.vocab().lines().len());
    let report = embedding_report(&model, &src.trace, &sim, k)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    ctx.rec.write("embeddings.csv", &csv)?;
    println!("{} lines, {} components", report.rows.len(), report.pca.k);
    ctx.finish("probe-embeddings", serde_json::json!({ "k": k }))
}
