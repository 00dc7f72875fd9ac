use std::collections::HashSet;

use anyhow::Result;

use cacheprobe::streams::{delete_accesses, keep_stream_suffix, EditedTrace, Stream};
use cacheprobe::trace::Trace;

use super::simulate::{hit_rate_table, policy_order, run_policy};
use super::{select_streams, Ctx};
use crate::{StreamSelection, Usage};

/// Removes every selected stream, or keeps the final `suffix` fraction of a
/// single one.
pub fn apply_edit(trace: &Trace, streams: &[Stream], suffix: Option<f64>) -> Result<EditedTrace> {
    match suffix {
        Some(f) => {
            let [one] = streams else {
                return Err(Usage(format!(
                    "a suffix edit takes exactly one stream, {} selected",
                    streams.len()
                ))
                .into());
            };
            Ok(keep_stream_suffix(trace, one, f)?)
        }
        None => {
            let mut delete = HashSet::new();
            for s in streams {
                s.validate(trace)?;
                delete.extend(s.member_indices().iter().copied());
            }
            Ok(delete_accesses(trace, &delete)?)
        }
    }
}

pub fn remove(ctx: Ctx, select: StreamSelection) -> Result<()> {
    edit(ctx, select, None)
}

pub fn keep_suffix(ctx: Ctx, select: StreamSelection, fraction: f64) -> Result<()> {
    edit(ctx, select, Some(fraction))
}

fn edit(mut ctx: Ctx, select: StreamSelection, suffix: Option<f64>) -> Result<()> {
    let src = ctx.load_trace()?;
    let all = ctx.load_streams(&src.trace)?;
    let chosen = select_streams(&all, &select)?;
    let edited = apply_edit(&src.trace, &chosen, suffix)?;

    let cache = ctx.cache()?;
    let policies = policy_order(&ctx.config.policies);
    let model = if policies.iter().any(|p| p == "model") {
        Some(ctx.load_model(&src.trace)?)
    } else {
        None
    };
    let params = ctx.config.phases();
    let (mut before, mut after) = (Vec::new(), Vec::new());
    for p in &policies {
        before.push(run_policy(p, &src.trace, &cache, &params, model.as_ref())?.hit_rate());
        after.push(run_policy(p, &edited.trace, &cache, &params, model.as_ref())?.hit_rate());
    }
    let table = hit_rate_table(&policies, &[("original", before), ("edited", after)]);

    ctx.rec
        .write("edited.csv", edited.trace.to_text().as_bytes())?;
    ctx.rec.write(
        "edited.index_map.csv",
        edited.index_map.to_sidecar().as_bytes(),
    )?;
    ctx.rec.write("edit_hit_rates.csv", table.as_bytes())?;
    print!("{table}");
    println!(
        "removed {} of {} accesses",
        src.trace.len() - edited.trace.len(),
        src.trace.len()
    );
    let (name, params) = match suffix {
        Some(f) => (
            "streams-keep-suffix",
            serde_json::json!({ "select": select, "fraction": f }),
        ),
        None => ("streams-remove", serde_json::json!({ "select": select })),
    };
    ctx.finish(name, params)
}
