use std::collections::VecDeque;

use super::network::{argmax, RecurrentState};
use super::Model;
use crate::cachesim::{simulate, CacheConfig, EvictionPolicy, SimResult, VictimContext};
use crate::error::{Error, Result};
use crate::probe::{ActivationRecord, RecordKind};
use crate::trace::{LineId, MemoryAccess, Trace};

/// Runs a model online inside the simulator.
///
/// The LSTM state is carried across the whole rollout; each decision attends
/// over the hidden states of the last `window` accesses.
pub struct ModelPolicy<'m> {
    model: &'m Model,
    state: RecurrentState,
    recent: VecDeque<Vec<f64>>,
    record: bool,
    hidden_rows: Vec<f64>,
    attention_rows: Vec<f64>,
    decision_indices: Vec<usize>,
    index: usize,
}

pub fn model_policy(model: &Model) -> ModelPolicy<'_> {
    ModelPolicy {
        model,
        state: RecurrentState::zeros(model.dims.hidden),
        recent: VecDeque::with_capacity(model.dims.window),
        record: false,
        hidden_rows: Vec::new(),
        attention_rows: Vec::new(),
        decision_indices: Vec::new(),
        index: 0,
    }
}

impl<'m> ModelPolicy<'m> {
    /// Also keep every hidden state and each victim's attention weights.
    pub fn recording(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn state(&self) -> &RecurrentState {
        &self.state
    }

    fn reset(&mut self) {
        self.state = RecurrentState::zeros(self.model.dims.hidden);
        self.recent.clear();
        self.hidden_rows.clear();
        self.attention_rows.clear();
        self.decision_indices.clear();
    }
}

impl EvictionPolicy for ModelPolicy<'_> {
    fn name(&self) -> String {
        "model".into()
    }

    fn prepare(&mut self, trace: &Trace) -> Result<()> {
        if trace.line_size() != self.model.line_size {
            return Err(Error::InvalidConfig(format!(
                "model was trained with {}-byte lines, trace uses {}",
                self.model.line_size,
                trace.line_size()
            )));
        }
        self.reset();
        Ok(())
    }

    fn observe(&mut self, index: usize, access: &MemoryAccess, _line: LineId) {
        let rows = self.model.rows_of(access);
        let step = self
            .model
            .lstm_step(rows, &self.state.hidden, &self.state.cell);
        if self.recent.len() == self.model.dims.window {
            self.recent.pop_front();
        }
        self.recent.push_back(step.h.clone());
        if self.record {
            self.hidden_rows.extend_from_slice(&step.h);
        }
        self.state = RecurrentState {
            hidden: step.h,
            cell: step.c,
        };
        self.index = index;
    }

    fn choose_victim(&mut self, ctx: &VictimContext<'_>) -> LineId {
        let cands: Vec<usize> = ctx
            .residents
            .iter()
            .map(|r| self.model.vocab.line_row(r.line))
            .collect();
        let hiddens: Vec<&[f64]> = self.recent.iter().map(|h| &h[..]).collect();
        let att = self.model.attend(&hiddens, &cands);
        let best = argmax(&att.scores);
        if self.record {
            let w = self.model.dims.window;
            let len = hiddens.len();
            let mut row = vec![0.0; w];
            for (t, a) in att.alpha[best].iter().enumerate() {
                row[len - 1 - t] = *a;
            }
            self.attention_rows.extend(row);
            self.decision_indices.push(ctx.index);
        }
        ctx.residents[best].line
    }
}

/// Everything recorded from one model rollout.
#[derive(Debug, Clone)]
pub struct ActivationSet {
    /// One row per access.
    pub hidden: ActivationRecord,
    /// One row per eviction: the victim's attention weights by offset from
    /// the current access (column 0 is the current access).
    pub attention: ActivationRecord,
    /// Trace index of each attention row.
    pub decision_indices: Vec<usize>,
    /// The address-embedding matrix; row 0 is the unseen-line row.
    pub embeddings: ActivationRecord,
    pub sim: SimResult,
}

/// Rolls the model over `trace` as the cache's policy and records its
/// internals.
pub fn record_activations(model: &Model, trace: &Trace, cache: &CacheConfig) -> Result<ActivationSet> {
    let mut policy = model_policy(model).recording();
    let sim = simulate(trace, cache, &mut policy)?;
    let d = model.dims;
    let hidden = ActivationRecord::new(
        RecordKind::HiddenState,
        trace.len(),
        d.hidden,
        std::mem::take(&mut policy.hidden_rows),
    )?;
    let attention = ActivationRecord::new(
        RecordKind::AttentionWeights,
        policy.decision_indices.len(),
        d.window,
        std::mem::take(&mut policy.attention_rows),
    )?;
    let embeddings = ActivationRecord::new(
        RecordKind::AddressEmbedding,
        d.addr_rows,
        d.embed,
        model.params.addr_emb.clone(),
    )?;
    Ok(ActivationSet {
        hidden,
        attention,
        decision_indices: std::mem::take(&mut policy.decision_indices),
        embeddings,
        sim,
    })
}
