//! `cacheprobe` command-line driver.

mod commands;
mod config;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// A usage or configuration error (exit code 1).
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug, Parser)]
#[command(
    name = "cacheprobe",
    version,
    about = "Cache replacement analysis and model probing"
)]
pub struct Cli {
    /// Experiment config (flat TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Experiment seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trace file; overrides the config's trace source.
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic trace with its planted phases and streams.
    Synth,
    /// Run every configured policy and tabulate hit rates.
    Simulate,
    /// Segment the trace into phases.
    Phases,
    /// Detect and edit strided streams.
    #[command(subcommand)]
    Streams(StreamsCommand),
    /// Train the eviction model by imitating Bélády.
    Train,
    /// Inspect a trained model.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Render SVG figures from earlier outputs.
    Plot {
        #[arg(value_enum, default_value = "all")]
        kind: PlotKind,
        /// Policy whose per-access CSV feeds the scatter plot.
        #[arg(long)]
        policy: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum StreamsCommand {
    /// Find strided streams and write `streams.streams`.
    Detect,
    /// Delete every access of the selected streams.
    Remove(#[command(flatten)] StreamSelection),
    /// Keep only the final fraction of one selected stream.
    KeepSuffix {
        #[command(flatten)]
        select: StreamSelection,
        #[arg(long)]
        fraction: f64,
    },
}

/// Streams are picked by position in `streams.streams` or by base and stride.
#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct StreamSelection {
    /// Index into `streams.streams` (repeatable).
    #[arg(long = "id")]
    pub ids: Vec<usize>,
    /// Base address of the stream, decimal or 0x-prefixed hex.
    #[arg(long, value_parser = parse_u64, requires = "stride")]
    pub base: Option<u64>,
    /// Stride in bytes.
    #[arg(long, allow_hyphen_values = true, requires = "base")]
    pub stride: Option<i64>,
}

#[derive(Debug, Subcommand)]
pub enum ProbeCommand {
    /// PCA of recorded activations.
    Pca {
        #[arg(long, value_enum, default_value = "hidden")]
        kind: ActivationKind,
    },
    /// Correlate hidden-state components with phase indicators.
    Correlate {
        /// Phase sidecar to correlate against; defaults to `phases.phases`.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Use the synthetic trace's planted phases.
        #[arg(long, conflicts_with = "labels")]
        planted: bool,
    },
    /// Compare hidden-state components before and after a stream edit.
    Compare {
        #[command(flatten)]
        select: StreamSelection,
        /// Keep this final fraction of the stream instead of removing it.
        #[arg(long)]
        suffix: Option<f64>,
        /// Train a fresh model on the edited trace instead of re-running the
        /// original one.
        #[arg(long)]
        retrain: bool,
    },
    /// Per-line address-embedding projections with hit rates.
    Embeddings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Hidden,
    Embedding,
    Attention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Scatter,
    Stacked,
    Phases,
    All,
}

fn parse_u64(s: &str) -> Result<u64, String> {
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    r.map_err(|e| e.to_string())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<cacheprobe::Error>() {
            return match e {
                e if e.is_contract_violation() => 3,
                cacheprobe::Error::InvalidConfig(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
