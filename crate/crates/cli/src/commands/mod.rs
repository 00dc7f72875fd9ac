mod edit;
mod plot;
mod probe;
mod simulate;

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use cacheprobe::cachesim::CacheConfig;
use cacheprobe::model::Model;
use cacheprobe::phases::{find_phases, labeling_agreement, write_histograms_csv, PhaseLabeling};
use cacheprobe::streams::{detect_streams, parse_streams_sidecar, streams_to_sidecar, Stream};
use cacheprobe::trace::{generate_synthetic, parse_trace, SyntheticTrace, Trace};

use crate::config::ExperimentConfig;
use crate::manifest::Recorder;
use crate::{Cli, Command, StreamSelection, StreamsCommand, Usage};

pub const TRACE_FILE: &str = "trace.csv";
pub const PHASES_FILE: &str = "phases.phases";
pub const STREAMS_FILE: &str = "streams.streams";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

/// State shared by one command execution.
pub struct Ctx {
    pub config: ExperimentConfig,
    pub rec: Recorder,
}

/// The trace a command works on, with planted ground truth when synthetic.
pub struct Source {
    pub trace: Trace,
    pub planted: Option<SyntheticTrace>,
}

impl Ctx {
    pub fn cache(&self) -> Result<CacheConfig> {
        self.config.cache().map_err(|e| Usage(e.to_string()).into())
    }

    pub fn load_trace(&mut self) -> Result<Source> {
        if let Some(path) = self.config.trace.clone() {
            let bytes = self.rec.read(&path)?;
            let trace = parse_trace(&bytes, self.config.line_size)
                .with_context(|| format!("in trace {}", path.display()))?;
            return Ok(Source {
                trace,
                planted: None,
            });
        }
        let (spec, text) = self.config.synthetic_spec()?.expect("no trace file");
        let label = match &self.config.synthetic {
            Some(p) => p.display().to_string(),
            None => "(built-in synthetic spec)".to_string(),
        };
        self.rec.input_bytes(&label, text.as_bytes());
        let out = generate_synthetic(&spec).context("in synthetic spec")?;
        Ok(Source {
            trace: out.trace.clone(),
            planted: Some(out),
        })
    }

    /// Reads an artifact produced by an earlier command.
    pub fn require(&mut self, name: &str, producer: &str) -> Result<Vec<u8>> {
        let path = self.rec.path(name);
        if !path.is_file() {
            bail!(
                "missing {}; run `cacheprobe {producer}` first",
                path.display()
            );
        }
        self.rec.read(&path)
    }

    pub fn load_model(&mut self, trace: &Trace) -> Result<Model> {
        let bytes = self.require(CHECKPOINT_FILE, "train")?;
        let model = Model::from_bytes(&bytes).context("in model.ckpt")?;
        if model.line_size() != trace.line_size() {
            bail!(
                "model.ckpt was trained with line size {}, the trace uses {}",
                model.line_size(),
                trace.line_size()
            );
        }
        Ok(model)
    }

    pub fn load_streams(&mut self, trace: &Trace) -> Result<Vec<Stream>> {
        let bytes = self.require(STREAMS_FILE, "streams detect")?;
        let text = String::from_utf8(bytes).context("streams.streams is not UTF-8")?;
        parse_streams_sidecar(&text, trace).context("in streams.streams")
    }

    pub fn load_labels(&mut self, path: &Path) -> Result<PhaseLabeling> {
        let bytes = self.rec.read(path)?;
        let text = String::from_utf8(bytes).context("phase sidecar is not UTF-8")?;
        PhaseLabeling::parse_sidecar(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn finish(self, command: &str, params: serde_json::Value) -> Result<()> {
        let config = serde_json::to_value(&self.config)?;
        self.rec.finish(command, params, config)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = cli.out {
        config.out = out;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(trace) = cli.trace {
        config.trace = Some(trace);
        config.synthetic = None;
    }
    config.validate()?;
    let rec = Recorder::new(&config.out)?;
    let ctx = Ctx { config, rec };

    match cli.command {
        Command::Synth => synth(ctx),
        Command::Simulate => simulate::run(ctx),
        Command::Phases => phases(ctx),
        Command::Streams(StreamsCommand::Detect) => streams_detect(ctx),
        Command::Streams(StreamsCommand::Remove(select)) => edit::remove(ctx, select),
        Command::Streams(StreamsCommand::KeepSuffix { select, fraction }) => {
            edit::keep_suffix(ctx, select, fraction)
        }
        Command::Train => simulate::train(ctx),
        Command::Probe(cmd) => probe::run(ctx, cmd),
        Command::Plot { kind, policy } => plot::run(ctx, kind, policy),
    }
}

fn synth(mut ctx: Ctx) -> Result<()> {
    if ctx.config.trace.is_some() {
        return Err(
            Usage("`synth` needs a synthetic spec, but a trace file is configured".into()).into(),
        );
    }
    let src = ctx.load_trace()?;
    let planted = src.planted.expect("synthetic source");
    ctx.rec
        .write(TRACE_FILE, planted.trace.to_text().as_bytes())?;
    ctx.rec
        .write("trace.phases", planted.phases.to_sidecar().as_bytes())?;
    ctx.rec.write(
        "trace.streams",
        streams_to_sidecar(&planted.streams).as_bytes(),
    )?;
    println!(
        "{} accesses, {} planted phases, {} planted streams",
        planted.trace.len(),
        planted.phases.num_phases(),
        planted.streams.len()
    );
    ctx.finish("synth", serde_json::json!({}))
}

#[derive(serde::Serialize)]
struct PhaseSummary {
    num_phases: usize,
    slices: usize,
    segments: usize,
    /// Agreement with the planted labels when the trace is synthetic.
    planted_agreement: Option<f64>,
}

fn phases(mut ctx: Ctx) -> Result<()> {
    let src = ctx.load_trace()?;
    let analysis = find_phases(&src.trace, &ctx.config.phases())?;
    let labels = &analysis.labeling;

    let mut hist = Vec::new();
    write_histograms_csv(&analysis.slices, &mut hist)?;
    let mut segs = String::from("start,end,phase\n");
    for s in &analysis.segments {
        segs.push_str(&format!(
            "{},{},{}\n",
            s.start,
            s.end,
            labels.labels()[s.start]
        ));
    }
    let planted_agreement = match &src.planted {
        Some(p) => Some(labeling_agreement(labels, &p.phases)?),
        None => None,
    };
    ctx.rec.write(PHASES_FILE, labels.to_sidecar().as_bytes())?;
    ctx.rec.write("phase_histograms.csv", &hist)?;
    ctx.rec.write("phase_segments.csv", segs.as_bytes())?;
    let summary = PhaseSummary {
        num_phases: labels.num_phases(),
        slices: analysis.slices.len(),
        segments: analysis.segments.len(),
        planted_agreement,
    };
    ctx.rec.write_json("phases.json", &summary)?;
    print!(
        "{} phases over {} segments",
        summary.num_phases, summary.segments
    );
    match planted_agreement {
        Some(a) => println!(", {:.1}% agreement with planted phases", 100.0 * a),
        None => println!(),
    }
    ctx.finish("phases", serde_json::json!({}))
}

fn streams_detect(mut ctx: Ctx) -> Result<()> {
    let src = ctx.load_trace()?;
    let found = detect_streams(&src.trace, ctx.config.min_length, ctx.config.max_gap)?;
    ctx.rec
        .write(STREAMS_FILE, streams_to_sidecar(&found).as_bytes())?;
    for (id, s) in found.iter().enumerate() {
        println!(
            "{id}: base {:#x} stride {} length {}",
            s.base(),
            s.stride(),
            s.len()
        );
    }
    let params = serde_json::json!({
        "min_length": ctx.config.min_length,
        "max_gap": ctx.config.max_gap,
    });
    ctx.finish("streams-detect", params)
}

/// Resolves a selection against the detected streams.
pub fn select_streams(all: &[Stream], select: &StreamSelection) -> Result<Vec<Stream>> {
    let mut out = Vec::new();
    for &id in &select.ids {
        let s = all.get(id).ok_or_else(|| {
            anyhow!(
                "stream id {id} is out of range; streams.streams lists {}",
                all.len()
            )
        })?;
        out.push(s.clone());
    }
    if let (Some(base), Some(stride)) = (select.base, select.stride) {
        let m: Vec<&Stream> = all
            .iter()
            .filter(|s| s.base() == base && s.stride() == stride)
            .collect();
        if m.is_empty() {
            bail!("no detected stream has base {base:#x} and stride {stride}");
        }
        out.extend(m.into_iter().cloned());
    }
    if out.is_empty() {
        return Err(Usage("select a stream with --id or --base/--stride".into()).into());
    }
    out.sort_by_key(|s| s.span());
    out.dedup();
    Ok(out)
}
