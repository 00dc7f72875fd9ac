use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{argmax, RecurrentState, RowExample};
use super::params::{softmax, Params};
use super::{Model, ModelConfig};
use crate::cachesim::{policy_belady, simulate, CacheConfig, Eviction};
use crate::error::{Error, Result};
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub loss: f64,
    /// Fraction of decisions where the model's argmax equals Bélády's victim.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub decisions: usize,
    pub epochs: Vec<EpochStats>,
}

/// Bélády's eviction decisions on `trace`.
pub fn collect_decisions(trace: &Trace, cache: &CacheConfig) -> Result<Vec<Eviction>> {
    let result = simulate(trace, cache, &mut policy_belady(trace))?;
    Ok(result.evictions)
}

struct Decision {
    index: usize,
    cands: Vec<usize>,
    label: usize,
}

/// Behavioral cloning of Bélády on `trace`.
///
/// Every epoch first rolls the LSTM over the whole trace with the current
/// parameters; each decision's window then starts from the stored state just
/// before it, treated as a constant.
pub fn train_imitation(
    trace: &Trace,
    cache: &CacheConfig,
    config: &ModelConfig,
) -> Result<(Model, TrainingCurve)> {
    config.validate()?;
    let evictions = collect_decisions(trace, cache)?;
    if evictions.is_empty() {
        return Err(Error::InvalidInput(
            "the trace fits in the cache: Bélády makes no eviction decisions to imitate".into(),
        ));
    }

    let mut model = Model::new(config.clone(), trace)?;
    let rows: Vec<(usize, usize)> = trace.accesses().iter().map(|a| model.rows_of(a)).collect();
    let decisions: Vec<Decision> = evictions
        .iter()
        .map(|ev| Decision {
            index: ev.index,
            cands: ev
                .candidates
                .iter()
                .map(|&l| model.vocab.line_row(l))
                .collect(),
            label: ev
                .candidates
                .iter()
                .position(|&l| l == ev.victim)
                .expect("victim is a candidate"),
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_7a1e);
    let mut velocity = Params::zeros(&model.dims);
    let mut grads = Params::zeros(&model.dims);
    let mut order: Vec<usize> = (0..decisions.len()).collect();

    let mut states = model.run_states(&rows);
    let mut curve = vec![evaluate(&model, &rows, &states, &decisions, 0)];

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grads.fill_zero();
            for &k in batch {
                let ex = window_example(&model, &rows, &decisions[k]);
                let init = state_before(&model, &states, &ex);
                let fwd = model.forward_window(&init, &ex.steps, &ex.cands);
                model.backward(&fwd, &ex.cands, ex.label, &mut grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            if config.grad_clip > 0.0 {
                let n = grads.norm();
                if n > config.grad_clip {
                    grads.scale(config.grad_clip / n);
                }
            }
            sgd_momentum(model.params_mut(), &mut velocity, &grads, config);
        }
        if !model.params.is_finite() {
            return Err(Error::Contract(format!(
                "training diverged in epoch {epoch}: non-finite parameters"
            )));
        }
        states = model.run_states(&rows);
        curve.push(evaluate(&model, &rows, &states, &decisions, epoch));
    }

    Ok((
        model,
        TrainingCurve {
            decisions: decisions.len(),
            epochs: curve,
        },
    ))
}

/// Index of the first window step, stashed in the example so the initial
/// state can be looked up.
fn window_example(model: &Model, rows: &[(usize, usize)], d: &Decision) -> WindowExample {
    let start = (d.index + 1).saturating_sub(model.dims.window);
    WindowExample {
        start,
        inner: RowExample {
            steps: rows[start..=d.index].to_vec(),
            cands: d.cands.clone(),
            label: d.label,
        },
    }
}

struct WindowExample {
    start: usize,
    inner: RowExample,
}

impl std::ops::Deref for WindowExample {
    type Target = RowExample;
    fn deref(&self) -> &RowExample {
        &self.inner
    }
}

fn state_before(model: &Model, states: &(Vec<f64>, Vec<f64>), ex: &WindowExample) -> RecurrentState {
    let h = model.dims.hidden;
    if ex.start == 0 {
        return RecurrentState::zeros(h);
    }
    let at = (ex.start - 1) * h;
    RecurrentState {
        hidden: states.0[at..at + h].to_vec(),
        cell: states.1[at..at + h].to_vec(),
    }
}

fn evaluate(
    model: &Model,
    rows: &[(usize, usize)],
    states: &(Vec<f64>, Vec<f64>),
    decisions: &[Decision],
    epoch: usize,
) -> EpochStats {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for d in decisions {
        let ex = window_example(model, rows, d);
        let init = state_before(model, states, &ex);
        let fwd = model.forward_window(&init, &ex.steps, &ex.cands);
        let p = softmax(&fwd.scores);
        loss -= p[ex.label].max(f64::MIN_POSITIVE).ln();
        correct += (argmax(&fwd.scores) == ex.label) as usize;
    }
    let n = decisions.len() as f64;
    EpochStats {
        epoch,
        loss: loss / n,
        accuracy: correct as f64 / n,
    }
}

fn sgd_momentum(params: &mut Params, velocity: &mut Params, grads: &Params, config: &ModelConfig) {
    let lr = config.learning_rate;
    let mu = config.momentum;
    for (((_, p), (_, v)), (_, g)) in params
        .groups_mut()
        .into_iter()
        .zip(velocity.groups_mut())
        .zip(grads.groups())
    {
        for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
            *vi = mu * *vi + gi;
            *pi -= lr * *vi;
        }
    }
}
