use anyhow::Result;

use cacheprobe::cachesim::{
    policy_belady, policy_lru, policy_phase_freq, simulate, CacheConfig, SimResult,
};
use cacheprobe::model::{model_policy, train_imitation, Model};
use cacheprobe::phases::{find_phases, phase_frequency_table, PhaseParams};
use cacheprobe::trace::Trace;

use super::{Ctx, CHECKPOINT_FILE};

/// Configured policies with Bélády moved (or added) to the front.
pub fn policy_order(policies: &[String]) -> Vec<String> {
    let mut out = vec!["belady".to_string()];
    for p in policies {
        if !out.contains(p) {
            out.push(p.clone());
        }
    }
    out
}

pub fn run_policy(
    name: &str,
    trace: &Trace,
    cache: &CacheConfig,
    phases: &PhaseParams,
    model: Option<&Model>,
) -> Result<SimResult> {
    let result = match name {
        "belady" => simulate(trace, cache, &mut policy_belady(trace))?,
        "lru" => simulate(trace, cache, &mut policy_lru())?,
        "phase-freq" => {
            let labels = find_phases(trace, phases)?.labeling;
            let table = phase_frequency_table(trace, &labels)?;
            simulate(trace, cache, &mut policy_phase_freq(labels, table))?
        }
        "model" => {
            let model = model.expect("model loaded for the model policy");
            simulate(trace, cache, &mut model_policy(model))?
        }
        other => unreachable!("policy {other} passed validation"),
    };
    Ok(result)
}

/// Hit-rate table: one row per trace, one column per policy.
pub fn hit_rate_table(policies: &[String], rows: &[(&str, Vec<f64>)]) -> String {
    let mut s = String::from("trace");
    for p in policies {
        s.push(',');
        s.push_str(p);
    }
    s.push('\n');
    for (name, rates) in rows {
        s.push_str(name);
        for r in rates {
            s.push_str(&format!(",{r}"));
        }
        s.push('\n');
    }
    s
}

pub fn run(mut ctx: Ctx) -> Result<()> {
    let src = ctx.load_trace()?;
    let cache = ctx.cache()?;
    let policies = policy_order(&ctx.config.policies);
    let model = if policies.iter().any(|p| p == "model") {
        Some(ctx.load_model(&src.trace)?)
    } else {
        None
    };
    let params = ctx.config.phases();
    let mut rates = Vec::new();
    for p in &policies {
        let result = run_policy(p, &src.trace, &cache, &params, model.as_ref())?;
        let mut csv = Vec::new();
        result.write_csv(&src.trace, &mut csv)?;
        ctx.rec.write(&format!("sim_{p}.csv"), &csv)?;
        ctx.rec
            .write_json(&format!("sim_{p}.json"), &result.summary())?;
        println!("{p:>10}: {:.4}", result.hit_rate());
        rates.push(result.hit_rate());
    }
    let table = hit_rate_table(&policies, &[("original", rates)]);
    ctx.rec.write("hit_rates.csv", table.as_bytes())?;
    ctx.finish("simulate", serde_json::json!({ "policies": policies }))
}

#[derive(serde::Serialize)]
struct TrainSummary {
    decisions: usize,
    final_loss: f64,
    final_accuracy: f64,
    model_hit_rate: f64,
    belady_hit_rate: f64,
}

pub fn train(mut ctx: Ctx) -> Result<()> {
    let src = ctx.load_trace()?;
    let cache = ctx.cache()?;
    let (model, curve) = train_imitation(&src.trace, &cache, &ctx.config.model())?;
    let mut csv = String::from("epoch,loss,accuracy\n");
    for e in &curve.epochs {
        csv.push_str(&format!("{},{},{}\n", e.epoch, e.loss, e.accuracy));
    }
    let m = simulate(&src.trace, &cache, &mut model_policy(&model))?;
    let b = simulate(&src.trace, &cache, &mut policy_belady(&src.trace))?;
    let last = curve.epochs.last().expect("epoch 0 is always recorded");
    let summary = TrainSummary {
        decisions: curve.decisions,
        final_loss: last.loss,
        final_accuracy: last.accuracy,
        model_hit_rate: m.hit_rate(),
        belady_hit_rate: b.hit_rate(),
    };
    ctx.rec.write(CHECKPOINT_FILE, &model.to_bytes())?;
    ctx.rec.write("training_curve.csv", csv.as_bytes())?;
    ctx.rec.write_json("training.json", &summary)?;
    println!(
        "{} decisions, loss {:.4}, accuracy {:.3}; hit rate {:.4} (Bélády {:.4})",
        summary.decisions,
        summary.final_loss,
        summary.final_accuracy,
        summary.model_hit_rate,
        summary.belady_hit_rate
    );
    ctx.finish("train", serde_json::json!({}))
}
