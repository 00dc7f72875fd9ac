//! Learned eviction model.
//!
//! Each access is encoded as the concatenation of a PC embedding and a
//! cache-line embedding and fed to a single-layer LSTM. To score a resident
//! line, the line's embedding is projected to an attention key; the hidden
//! states of the recent history window are projected to queries and values
//! (values also get a learned embedding of their offset from the current
//! access). The attention output and the key go through a linear layer that
//! yields the line's eviction score. The highest score is evicted.
//!
//! Training clones Bélády's decisions with a cross-entropy loss over the
//! softmax of the victim set's scores.

mod checkpoint;
mod network;
mod params;
mod policy;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{line_of, LineId, MemoryAccess, Trace};

pub use network::{DecisionExample, EvictionScores, RecurrentState};
pub use params::{Dims, Params, GROUP_NAMES};
pub use policy::{model_policy, record_activations, ActivationSet, ModelPolicy};
pub use train::{collect_decisions, train_imitation, EpochStats, TrainingCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Number of most recent accesses (including the current one) attended over.
    pub window: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Global gradient-norm clip per update; non-positive disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            hidden_dim: 64,
            window: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 20,
            batch_size: 16,
            grad_clip: 5.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0
            || self.hidden_dim == 0
            || self.window == 0
            || self.batch_size == 0
            || !(self.learning_rate > 0.0)
            || !(0.0..1.0).contains(&self.momentum)
        {
            return Err(Error::InvalidConfig(format!(
                "model dimensions, window, batch size and learning rate must be positive \
                 and momentum in [0, 1): {self:?}"
            )));
        }
        Ok(())
    }
}

/// Sorted id tables. Row 0 of each embedding is reserved for unseen ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    pcs: Vec<u64>,
    lines: Vec<LineId>,
}

impl Vocab {
    pub fn from_trace(trace: &Trace) -> Self {
        let mut pcs: Vec<u64> = trace.accesses().iter().map(|a| a.pc).collect();
        pcs.sort_unstable();
        pcs.dedup();
        let mut lines: Vec<LineId> = trace.lines().collect();
        lines.sort_unstable();
        lines.dedup();
        Self { pcs, lines }
    }

    pub fn new(mut pcs: Vec<u64>, mut lines: Vec<LineId>) -> Self {
        pcs.sort_unstable();
        pcs.dedup();
        lines.sort_unstable();
        lines.dedup();
        Self { pcs, lines }
    }

    pub fn pcs(&self) -> &[u64] {
        &self.pcs
    }

    pub fn lines(&self) -> &[LineId] {
        &self.lines
    }

    /// Embedding row of a PC; 0 when unseen.
    pub fn pc_row(&self, pc: u64) -> usize {
        self.pcs.binary_search(&pc).map_or(0, |i| i + 1)
    }

    /// Embedding row of a cache line; 0 when unseen.
    pub fn line_row(&self, line: LineId) -> usize {
        self.lines.binary_search(&line).map_or(0, |i| i + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    line_size: u64,
    vocab: Vocab,
    dims: Dims,
    params: Params,
}

impl Model {
    /// A randomly initialized model over the ids of `trace`.
    pub fn new(config: ModelConfig, trace: &Trace) -> Result<Self> {
        Self::with_vocab(config, Vocab::from_trace(trace), trace.line_size())
    }

    pub fn with_vocab(config: ModelConfig, vocab: Vocab, line_size: u64) -> Result<Self> {
        use rand::SeedableRng;
        config.validate()?;
        crate::trace::check_line_size(line_size)?;
        let dims = Dims {
            embed: config.embed_dim,
            hidden: config.hidden_dim,
            window: config.window,
            pc_rows: vocab.pcs.len() + 1,
            addr_rows: vocab.lines.len() + 1,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
        let params = Params::init(&dims, &mut rng);
        Ok(Self {
            config,
            line_size,
            vocab,
            dims,
            params,
        })
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        line_size: u64,
        vocab: Vocab,
        params: Params,
    ) -> Result<Self> {
        let dims = Dims {
            embed: config.embed_dim,
            hidden: config.hidden_dim,
            window: config.window,
            pc_rows: vocab.pcs.len() + 1,
            addr_rows: vocab.lines.len() + 1,
        };
        let expect = Params::zeros(&dims);
        for ((name, a), (_, b)) in params.groups().iter().zip(expect.groups().iter()) {
            if a.len() != b.len() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has {} values, expected {}",
                    a.len(),
                    b.len()
                )));
            }
        }
        Ok(Self {
            config,
            line_size,
            vocab,
            dims,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn line_size(&self) -> u64 {
        self.line_size
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// Embedding matrix of cache lines, `(lines + 1) x embed`; row 0 is the
    /// unseen-line row.
    pub fn address_embeddings(&self) -> &[f64] {
        &self.params.addr_emb
    }

    pub(crate) fn rows_of(&self, access: &MemoryAccess) -> (usize, usize) {
        (
            self.vocab.pc_row(access.pc),
            self.vocab.line_row(line_of(access.address, self.line_size)),
        )
    }

    /// Scores `residents` given the recent `history`, whose last element is
    /// the current access. The LSTM starts from `init` (zeros if `None`).
    /// Returns the scores and the recurrent state after every history step.
    pub fn forward(
        &self,
        history: &[MemoryAccess],
        residents: &[LineId],
        init: Option<&RecurrentState>,
    ) -> Result<(EvictionScores, Vec<RecurrentState>)> {
        if history.is_empty() {
            return Err(Error::InvalidInput("history window is empty".into()));
        }
        if residents.is_empty() {
            return Err(Error::InvalidInput("no resident lines to score".into()));
        }
        let start = history.len().saturating_sub(self.dims.window);
        let steps: Vec<(usize, usize)> = history[start..].iter().map(|a| self.rows_of(a)).collect();
        let cands: Vec<usize> = residents.iter().map(|&l| self.vocab.line_row(l)).collect();
        let zero = RecurrentState::zeros(self.dims.hidden);
        let init = init.unwrap_or(&zero);
        let fwd = self.forward_window(init, &steps, &cands);
        let states = fwd.states();
        Ok((
            EvictionScores {
                lines: residents.to_vec(),
                scores: fwd.scores.clone(),
            },
            states,
        ))
    }
}
