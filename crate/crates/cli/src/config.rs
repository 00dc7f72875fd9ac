//! Experiment configuration.
//!
//! A config file is flat TOML; every key is optional and falls back to the
//! value in [`ExperimentConfig::default`]. Relative paths are resolved
//! against the directory holding the config file.
//!
//! ```toml
//! # trace source: a trace file, a synthetic spec, or neither (built-in spec)
//! trace = "traces/run.csv"
//! synthetic = "specs/two_phase.toml"
//! line_size = 64
//! seed = 0
//! out = "out"
//!
//! cache_lines = 8
//! associativity = 4
//! policies = ["belady", "lru", "phase-freq"]
//!
//! slice_len = 100
//! merge_threshold = 0.4
//! global_threshold = 0.4
//! dpc_weight = 1.0
//!
//! min_length = 8
//! max_gap = 16
//!
//! embed_dim = 32
//! hidden_dim = 64
//! window = 32
//! learning_rate = 0.05
//! momentum = 0.9
//! epochs = 20
//! batch_size = 16
//! grad_clip = 5.0
//!
//! pca_components = 5
//! rolling_window = 100
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use cacheprobe::cachesim::CacheConfig;
use cacheprobe::model::ModelConfig;
use cacheprobe::phases::{BinSpec, PhaseParams};
use cacheprobe::trace::SyntheticSpec;

use crate::Usage;

/// Synthetic spec used when the config names no trace source.
pub const DEFAULT_SPEC: &str = include_str!("../assets/default_spec.toml");

pub const POLICIES: [&str; 4] = ["belady", "lru", "phase-freq", "model"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trace: Option<PathBuf>,
    pub synthetic: Option<PathBuf>,
    pub line_size: u64,
    pub seed: u64,
    #[serde(skip_serializing)]
    pub out: PathBuf,

    pub cache_lines: usize,
    pub associativity: usize,
    pub policies: Vec<String>,

    pub slice_len: usize,
    pub merge_threshold: f64,
    pub global_threshold: f64,
    pub dpc_weight: f64,

    pub min_length: usize,
    pub max_gap: usize,

    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub window: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_clip: f64,

    pub pca_components: usize,
    pub rolling_window: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        Self {
            trace: None,
            synthetic: None,
            line_size: 64,
            seed: 0,
            out: PathBuf::from("out"),
            cache_lines: 8,
            associativity: 4,
            policies: vec!["belady".into(), "lru".into(), "phase-freq".into()],
            slice_len: 100,
            merge_threshold: 0.4,
            global_threshold: 0.4,
            dpc_weight: 1.0,
            min_length: 8,
            max_gap: 16,
            embed_dim: model.embed_dim,
            hidden_dim: model.hidden_dim,
            window: model.window,
            learning_rate: model.learning_rate,
            momentum: model.momentum,
            epochs: model.epochs,
            batch_size: model.batch_size,
            grad_clip: model.grad_clip,
            pca_components: 5,
            rolling_window: 100,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: Self = toml::from_str(&text)
            .map_err(|e| Usage(format!("invalid config {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.trace, &mut config.synthetic]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trace.is_some() && self.synthetic.is_some() {
            return Err(Usage("config sets both `trace` and `synthetic`; pick one".into()).into());
        }
        for p in [&self.trace, &self.synthetic].into_iter().flatten() {
            if !p.is_file() {
                return Err(
                    Usage(format!("config references missing file {}", p.display())).into(),
                );
            }
        }
        for p in &self.policies {
            if !POLICIES.contains(&p.as_str()) {
                return Err(Usage(format!(
                    "unknown policy `{p}`; expected one of {}",
                    POLICIES.join(", ")
                ))
                .into());
            }
        }
        if self.pca_components == 0 || self.rolling_window == 0 {
            return Err(Usage("pca_components and rolling_window must be positive".into()).into());
        }
        self.cache().map_err(|e| Usage(e.to_string()))?;
        self.model().validate().map_err(|e| Usage(e.to_string()))?;
        Ok(())
    }

    pub fn cache(&self) -> cacheprobe::Result<CacheConfig> {
        CacheConfig::new(self.cache_lines, self.associativity, self.line_size)
    }

    pub fn phases(&self) -> PhaseParams {
        PhaseParams {
            slice_len: self.slice_len,
            bins: BinSpec::default(),
            merge_threshold: self.merge_threshold,
            global_threshold: self.global_threshold,
            dpc_weight: self.dpc_weight,
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            window: self.window,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            epochs: self.epochs,
            batch_size: self.batch_size,
            grad_clip: self.grad_clip,
            seed: self.seed,
        }
    }

    /// The synthetic spec to generate from, with the experiment seed and
    /// line size applied. `None` when the config names a trace file.
    pub fn synthetic_spec(&self) -> Result<Option<(SyntheticSpec, String)>> {
        if self.trace.is_some() {
            return Ok(None);
        }
        let text = match &self.synthetic {
            Some(p) => std::fs::read_to_string(p)
                .with_context(|| format!("cannot read synthetic spec {}", p.display()))?,
            None => DEFAULT_SPEC.to_string(),
        };
        let mut spec: SyntheticSpec = toml::from_str(&text).map_err(|e| {
            Usage(format!(
                "invalid synthetic spec {}: {e}",
                self.synthetic
                    .as_deref()
                    .map_or("(built-in)".into(), |p| p.display().to_string())
            ))
        })?;
        spec.seed = self.seed;
        spec.line_size = self.line_size;
        Ok(Some((spec, text)))
    }
}
