use anyhow::{bail, Context, Result};

use cacheprobe::cachesim::{rolling_hit_rate, CacheConfig, SimResult};
use cacheprobe::phases::PhaseLabeling;

use super::simulate::policy_order;
use super::{Ctx, PHASES_FILE};
use crate::svg::{Scale, Svg, PALETTE};
use crate::PlotKind;

const WIDTH: f64 = 960.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = WIDTH - 20.0;
const HIT: &str = "#2ca02c";
const MISS: &str = "#d62728";

/// Rows of a CSV file whose header must match `header` exactly.
fn read_csv(bytes: &[u8], name: &str, header: &str) -> Result<Vec<Vec<String>>> {
    let text = std::str::from_utf8(bytes).with_context(|| format!("{name} is not UTF-8"))?;
    let mut lines = text.lines();
    let found = lines.next().unwrap_or("").trim();
    if found != header {
        bail!("column mismatch in {name}: expected header `{header}`, found `{found}`");
    }
    let cols = header.split(',').count();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != cols {
            bail!(
                "column mismatch in {name} line {}: expected {cols} fields, found {}",
                n + 2,
                fields.len()
            );
        }
        rows.push(fields);
    }
    Ok(rows)
}

fn number(s: &str, name: &str) -> Result<f64> {
    let v = match s.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16).map(|v| v as f64).ok(),
        None => s.parse::<f64>().ok(),
    };
    v.with_context(|| format!("bad number `{s}` in {name}"))
}

/// Addresses and hit flags from a `sim_<policy>.csv`.
struct SimCsv {
    addresses: Vec<f64>,
    hits: Vec<bool>,
}

impl SimCsv {
    fn parse(bytes: &[u8], name: &str) -> Result<Self> {
        let rows = read_csv(bytes, name, "index,pc,address,hit")?;
        let mut out = Self {
            addresses: Vec::with_capacity(rows.len()),
            hits: Vec::with_capacity(rows.len()),
        };
        for (i, r) in rows.iter().enumerate() {
            if number(&r[0], name)? != i as f64 {
                bail!("{name}: row {i} has index {}", r[0]);
            }
            out.addresses.push(number(&r[2], name)?);
            out.hits.push(match r[3].as_str() {
                "1" => true,
                "0" => false,
                other => bail!("{name}: hit flag `{other}` is not 0 or 1"),
            });
        }
        Ok(out)
    }

    fn rolling(&self, window: usize) -> Result<Vec<f64>> {
        let result = SimResult {
            policy: String::new(),
            config: CacheConfig::fully_associative(1, 64)?,
            outcomes: self.hits.clone(),
            evictions: Vec::new(),
        };
        Ok(rolling_hit_rate(&result, window)?)
    }
}

/// Per-component projection series from a `component,timestep,value` CSV.
fn parse_pca(bytes: &[u8], name: &str) -> Result<Vec<Vec<f64>>> {
    let rows = read_csv(bytes, name, "component,timestep,value")?;
    let mut series: Vec<Vec<f64>> = Vec::new();
    for r in &rows {
        let c = number(&r[0], name)? as usize;
        let t = number(&r[1], name)? as usize;
        if c == series.len() {
            series.push(Vec::new());
        }
        if c + 1 != series.len() || t != series[c].len() {
            bail!("{name}: rows must be ordered by component, then timestep");
        }
        series[c].push(number(&r[2], name)?);
    }
    if series.windows(2).any(|w| w[0].len() != w[1].len()) {
        bail!("{name}: components have different lengths");
    }
    Ok(series)
}

fn time_axis(n: usize) -> Scale {
    Scale::new(0.0, n.saturating_sub(1) as f64, LEFT, RIGHT)
}

fn polyline(svg: &mut Svg, xs: Scale, ys: Scale, values: &[f64], stroke: &str, class: &str) {
    let pts: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| (xs.map(i as f64), ys.map(v)))
        .collect();
    svg.polyline(&pts, stroke, class);
}

/// Access scatter (address over time, colored by outcome) under a rolling
/// hit-rate strip.
pub fn scatter(sim: &[u8], policy: &str, window: usize) -> Result<String> {
    let name = format!("sim_{policy}.csv");
    let sim = SimCsv::parse(sim, &name)?;
    let n = sim.hits.len();
    let mut svg = Svg::new(WIDTH, 480.0);
    let xs = time_axis(n);

    svg.text(
        LEFT,
        14.0,
        12.0,
        &format!("{policy}: rolling hit rate (window {window})"),
    );
    svg.frame(LEFT, 20.0, RIGHT - LEFT, 100.0);
    polyline(
        &mut svg,
        xs,
        Scale::new(0.0, 1.0, 120.0, 20.0),
        &sim.rolling(window)?,
        "#1f77b4",
        "rolling",
    );

    svg.text(LEFT, 136.0, 12.0, "address (green hit, red miss)");
    svg.frame(LEFT, 140.0, RIGHT - LEFT, 320.0);
    let ys = Scale::fit(&sim.addresses, 455.0, 145.0);
    for (i, (&a, &hit)) in sim.addresses.iter().zip(&sim.hits).enumerate() {
        svg.circle(
            xs.map(i as f64),
            ys.map(a),
            1.0,
            if hit { HIT } else { MISS },
        );
    }
    svg.text(LEFT, 475.0, 10.0, &format!("timestep 0..{n}"));
    Ok(svg.finish())
}

/// Trace on top, principal-component series in the middle, per-policy
/// rolling hit rates at the bottom.
pub fn stacked(
    trace: &[u8],
    pcs: &[u8],
    sims: &[(String, Vec<u8>)],
    window: usize,
) -> Result<String> {
    let first = SimCsv::parse(trace, "trace")?;
    let series = parse_pca(pcs, "pca_hidden.csv")?;
    let n = first.addresses.len();
    if let Some(s) = series.first() {
        if s.len() != n {
            bail!(
                "pca_hidden.csv covers {} timesteps but the trace has {n}; rerun `cacheprobe probe pca`",
                s.len()
            );
        }
    }
    let xs = time_axis(n);
    let mut svg = Svg::new(WIDTH, 620.0);

    svg.text(LEFT, 14.0, 12.0, "memory trace");
    svg.frame(LEFT, 20.0, RIGHT - LEFT, 160.0);
    let ys = Scale::fit(&first.addresses, 175.0, 25.0);
    for (i, &a) in first.addresses.iter().enumerate() {
        svg.circle(xs.map(i as f64), ys.map(a), 0.8, "#555555");
    }

    svg.text(
        LEFT,
        204.0,
        12.0,
        &format!("top {} principal components", series.len()),
    );
    svg.frame(LEFT, 210.0, RIGHT - LEFT, 180.0);
    let ys = Scale::fit(series.iter().flatten(), 385.0, 215.0);
    for (c, s) in series.iter().enumerate() {
        polyline(&mut svg, xs, ys, s, PALETTE[c % PALETTE.len()], "pc");
        svg.text(
            RIGHT - 40.0,
            224.0 + 12.0 * c as f64,
            10.0,
            &format!("PC{c}"),
        );
    }

    svg.text(
        LEFT,
        414.0,
        12.0,
        &format!("rolling hit rate (window {window})"),
    );
    svg.frame(LEFT, 420.0, RIGHT - LEFT, 180.0);
    let ys = Scale::new(0.0, 1.0, 600.0, 420.0);
    for (i, (policy, bytes)) in sims.iter().enumerate() {
        let sim = SimCsv::parse(bytes, &format!("sim_{policy}.csv"))?;
        if sim.hits.len() != n {
            bail!(
                "sim_{policy}.csv covers {} accesses, the trace {n}",
                sim.hits.len()
            );
        }
        let color = PALETTE[i % PALETTE.len()];
        polyline(&mut svg, xs, ys, &sim.rolling(window)?, color, "rate");
        svg.text(RIGHT - 80.0, 434.0 + 12.0 * i as f64, 10.0, policy);
    }
    Ok(svg.finish())
}

/// One colored band per run of equal phase labels.
pub fn phase_bands(labels: &PhaseLabeling) -> String {
    let l = labels.labels();
    let mut svg = Svg::new(WIDTH, 90.0);
    svg.text(LEFT, 14.0, 12.0, &format!("{} phases", labels.num_phases()));
    let xs = Scale::new(0.0, l.len() as f64, LEFT, RIGHT);
    let mut start = 0;
    while start < l.len() {
        let end = (start..l.len())
            .find(|&i| l[i] != l[start])
            .unwrap_or(l.len());
        let x = xs.map(start as f64);
        svg.rect(
            x,
            20.0,
            xs.map(end as f64) - x,
            50.0,
            PALETTE[l[start] % PALETTE.len()],
        );
        start = end;
    }
    for p in 0..labels.num_phases() {
        let x = LEFT + 70.0 * p as f64;
        svg.text(x, 85.0, 10.0, &format!("phase {p}"));
    }
    svg.finish()
}

pub fn run(mut ctx: Ctx, kind: PlotKind, policy: Option<String>) -> Result<()> {
    let window = ctx.config.rolling_window;
    let policies = policy_order(&ctx.config.policies);
    let all = kind == PlotKind::All;
    let mut drawn = Vec::new();

    if matches!(kind, PlotKind::Scatter | PlotKind::All) {
        let p = match &policy {
            Some(p) => p.clone(),
            None if ctx.rec.path("sim_model.csv").is_file() => "model".to_string(),
            None => "belady".to_string(),
        };
        let name = format!("sim_{p}.csv");
        if !all || ctx.rec.path(&name).is_file() {
            let bytes = ctx.require(&name, "simulate")?;
            let svg = scatter(&bytes, &p, window)?;
            let out = format!("scatter_{p}.svg");
            ctx.rec.write(&out, svg.as_bytes())?;
            drawn.push(out);
        }
    }

    if matches!(kind, PlotKind::Stacked | PlotKind::All) {
        let ready = ctx.rec.path("pca_hidden.csv").is_file()
            && policies
                .iter()
                .any(|p| ctx.rec.path(&format!("sim_{p}.csv")).is_file());
        if !all || ready {
            let pcs = ctx.require("pca_hidden.csv", "probe pca")?;
            let mut sims = Vec::new();
            for p in &policies {
                let name = format!("sim_{p}.csv");
                if ctx.rec.path(&name).is_file() {
                    sims.push((p.clone(), ctx.require(&name, "simulate")?));
                }
            }
            if sims.is_empty() {
                ctx.require("sim_belady.csv", "simulate")?;
            }
            let svg = stacked(&sims[0].1, &pcs, &sims, window)?;
            ctx.rec.write("stacked.svg", svg.as_bytes())?;
            drawn.push("stacked.svg".to_string());
        }
    }

    if matches!(kind, PlotKind::Phases | PlotKind::All)
        && (!all || ctx.rec.path(PHASES_FILE).is_file())
    {
        ctx.require(PHASES_FILE, "phases")?;
        let labels = ctx.load_labels(&ctx.rec.path(PHASES_FILE))?;
        ctx.rec
            .write("phases.svg", phase_bands(&labels).as_bytes())?;
        drawn.push("phases.svg".to_string());
    }

    if drawn.is_empty() {
        bail!(
            "nothing to plot in {}; run `cacheprobe simulate` first",
            ctx.rec.out().display()
        );
    }
    println!("wrote {}", drawn.join(", "));
    let kind = format!("{kind:?}").to_lowercase();
    ctx.finish(
        &format!("plot-{kind}"),
        serde_json::json!({ "kind": kind, "policy": policy }),
    )
}
