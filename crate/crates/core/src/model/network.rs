use super::params::{axpy, dot, matvec, matvec_add, matvec_t_add, outer_add, sigmoid, softmax, Params};
use super::Model;
use crate::trace::{LineId, MemoryAccess};

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(dim: usize) -> Self {
        Self {
            hidden: vec![0.0; dim],
            cell: vec![0.0; dim],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.hidden.iter().chain(&self.cell).all(|x| x.is_finite())
    }
}

/// Per-line eviction scores for one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct EvictionScores {
    pub lines: Vec<LineId>,
    pub scores: Vec<f64>,
}

impl EvictionScores {
    pub fn softmax(&self) -> Vec<f64> {
        softmax(&self.scores)
    }

    /// Position of the highest score; the first one on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.scores)
    }

    pub fn victim(&self) -> LineId {
        self.lines[self.argmax()]
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// One supervised eviction decision.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionExample {
    /// Recent accesses, oldest first; the last one is the access being filled.
    pub history: Vec<MemoryAccess>,
    /// LSTM state before the first history step.
    pub init: RecurrentState,
    pub candidates: Vec<LineId>,
    /// Position of the expert's victim in `candidates`.
    pub label: usize,
}

/// A decision expressed in embedding rows.
#[derive(Debug, Clone)]
pub(crate) struct RowExample {
    pub steps: Vec<(usize, usize)>,
    pub cands: Vec<usize>,
    pub label: usize,
}

pub(crate) struct StepCache {
    rows: (usize, usize),
    x: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    pub c: Vec<f64>,
    tc: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) struct Attention {
    keys: Vec<Vec<f64>>,
    queries: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    /// `alpha[j][t]`: weight of history step `t` for candidate `j`.
    pub alpha: Vec<Vec<f64>>,
    outs: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
}

pub(crate) struct Forward {
    init: RecurrentState,
    pub steps: Vec<StepCache>,
    att: Attention,
    pub scores: Vec<f64>,
}

impl Forward {
    pub fn states(&self) -> Vec<RecurrentState> {
        self.steps
            .iter()
            .map(|s| RecurrentState {
                hidden: s.h.clone(),
                cell: s.c.clone(),
            })
            .collect()
    }
}

impl Model {
    /// One LSTM step. Returns the step cache holding the new state.
    pub(crate) fn lstm_step(&self, rows: (usize, usize), h_prev: &[f64], c_prev: &[f64]) -> StepCache {
        let d = &self.dims;
        let p = &self.params;
        let (e, h) = (d.embed, d.hidden);
        let mut x = Vec::with_capacity(2 * e);
        x.extend_from_slice(&p.pc_emb[rows.0 * e..(rows.0 + 1) * e]);
        x.extend_from_slice(&p.addr_emb[rows.1 * e..(rows.1 + 1) * e]);

        let mut z = p.lstm_b.clone();
        matvec_add(&p.lstm_w, 2 * e, &x, &mut z);
        matvec_add(&p.lstm_u, h, h_prev, &mut z);

        let i: Vec<f64> = z[..h].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = z[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
        let o: Vec<f64> = z[3 * h..].iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tc: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let hn: Vec<f64> = (0..h).map(|k| o[k] * tc[k]).collect();
        StepCache {
            rows,
            x,
            i,
            f,
            g,
            o,
            c,
            tc,
            h: hn,
        }
    }

    /// Attention of each candidate over `hiddens` (oldest first, the last
    /// being the current access) and the resulting scores.
    pub(crate) fn attend(&self, hiddens: &[&[f64]], cands: &[usize]) -> Attention {
        let d = &self.dims;
        let p = &self.params;
        let (e, h) = (d.embed, d.hidden);
        let len = hiddens.len();
        debug_assert!(len >= 1 && len <= d.window);
        let scale = 1.0 / (h as f64).sqrt();

        let queries: Vec<Vec<f64>> = hiddens
            .iter()
            .map(|hs| {
                let mut q = vec![0.0; h];
                matvec(&p.query, h, hs, &mut q);
                q
            })
            .collect();
        let values: Vec<Vec<f64>> = hiddens
            .iter()
            .enumerate()
            .map(|(t, hs)| {
                let off = len - 1 - t;
                let mut v = p.position[off * h..(off + 1) * h].to_vec();
                matvec_add(&p.value, h, hs, &mut v);
                v
            })
            .collect();

        let mut keys = Vec::with_capacity(cands.len());
        let mut alpha = Vec::with_capacity(cands.len());
        let mut outs = Vec::with_capacity(cands.len());
        let mut scores = Vec::with_capacity(cands.len());
        for &row in cands {
            let mut k = vec![0.0; h];
            matvec(&p.key, e, &p.addr_emb[row * e..(row + 1) * e], &mut k);
            let logits: Vec<f64> = queries.iter().map(|q| scale * dot(&k, q)).collect();
            let a = softmax(&logits);
            let mut out = vec![0.0; h];
            for (w, v) in a.iter().zip(&values) {
                axpy(*w, v, &mut out);
            }
            scores.push(dot(&p.score_out, &out) + dot(&p.score_key, &k));
            keys.push(k);
            alpha.push(a);
            outs.push(out);
        }
        Attention {
            keys,
            queries,
            values,
            alpha,
            outs,
            scores,
        }
    }

    pub(crate) fn forward_window(
        &self,
        init: &RecurrentState,
        steps: &[(usize, usize)],
        cands: &[usize],
    ) -> Forward {
        let mut caches: Vec<StepCache> = Vec::with_capacity(steps.len());
        for &rows in steps {
            let (hp, cp) = match caches.last() {
                Some(s) => (&s.h[..], &s.c[..]),
                None => (&init.hidden[..], &init.cell[..]),
            };
            let s = self.lstm_step(rows, hp, cp);
            caches.push(s);
        }
        let hiddens: Vec<&[f64]> = caches.iter().map(|s| &s.h[..]).collect();
        let att = self.attend(&hiddens, cands);
        Forward {
            init: init.clone(),
            steps: caches,
            scores: att.scores.clone(),
            att,
        }
    }

    /// Cross-entropy of the softmax over `fwd.scores` against `label`;
    /// accumulates parameter gradients into `grads`.
    pub(crate) fn backward(&self, fwd: &Forward, cands: &[usize], label: usize, grads: &mut Params) -> f64 {
        let d = &self.dims;
        let p = &self.params;
        let (e, h) = (d.embed, d.hidden);
        let len = fwd.steps.len();
        let scale = 1.0 / (h as f64).sqrt();
        let att = &fwd.att;

        let probs = softmax(&fwd.scores);
        let loss = -probs[label].max(f64::MIN_POSITIVE).ln();

        let mut dq = vec![vec![0.0; h]; len];
        let mut dv = vec![vec![0.0; h]; len];
        for (j, &row) in cands.iter().enumerate() {
            let ds = probs[j] - if j == label { 1.0 } else { 0.0 };
            if ds == 0.0 {
                continue;
            }
            axpy(ds, &att.outs[j], &mut grads.score_out);
            axpy(ds, &att.keys[j], &mut grads.score_key);

            let dout: Vec<f64> = p.score_out.iter().map(|w| ds * w).collect();
            let mut dk: Vec<f64> = p.score_key.iter().map(|w| ds * w).collect();

            let a = &att.alpha[j];
            let da: Vec<f64> = att.values.iter().map(|v| dot(&dout, v)).collect();
            let mean: f64 = a.iter().zip(&da).map(|(x, y)| x * y).sum();
            for t in 0..len {
                axpy(a[t], &dout, &mut dv[t]);
                let dlogit = a[t] * (da[t] - mean) * scale;
                if dlogit != 0.0 {
                    axpy(dlogit, &att.queries[t], &mut dk);
                    axpy(dlogit, &att.keys[j], &mut dq[t]);
                }
            }

            let emb = &p.addr_emb[row * e..(row + 1) * e];
            outer_add(&mut grads.key, e, &dk, emb);
            matvec_t_add(&p.key, e, &dk, &mut grads.addr_emb[row * e..(row + 1) * e]);
        }

        let mut dh_att = vec![vec![0.0; h]; len];
        for t in 0..len {
            let hs = &fwd.steps[t].h;
            outer_add(&mut grads.query, h, &dq[t], hs);
            matvec_t_add(&p.query, h, &dq[t], &mut dh_att[t]);
            outer_add(&mut grads.value, h, &dv[t], hs);
            matvec_t_add(&p.value, h, &dv[t], &mut dh_att[t]);
            let off = len - 1 - t;
            axpy(1.0, &dv[t], &mut grads.position[off * h..(off + 1) * h]);
        }

        // Backpropagation through time. The initial state is a constant.
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..len).rev() {
            let s = &fwd.steps[t];
            let (h_prev, c_prev) = if t == 0 {
                (&fwd.init.hidden[..], &fwd.init.cell[..])
            } else {
                (&fwd.steps[t - 1].h[..], &fwd.steps[t - 1].c[..])
            };
            for k in 0..h {
                let dh = dh_att[t][k] + dh_next[k];
                let d_o = dh * s.tc[k];
                let dc = dc_next[k] + dh * s.o[k] * (1.0 - s.tc[k] * s.tc[k]);
                let d_i = dc * s.g[k];
                let d_f = dc * c_prev[k];
                let d_g = dc * s.i[k];
                dc_next[k] = dc * s.f[k];
                dz[k] = d_i * s.i[k] * (1.0 - s.i[k]);
                dz[h + k] = d_f * s.f[k] * (1.0 - s.f[k]);
                dz[2 * h + k] = d_g * (1.0 - s.g[k] * s.g[k]);
                dz[3 * h + k] = d_o * s.o[k] * (1.0 - s.o[k]);
            }
            outer_add(&mut grads.lstm_w, 2 * e, &dz, &s.x);
            outer_add(&mut grads.lstm_u, h, &dz, h_prev);
            axpy(1.0, &dz, &mut grads.lstm_b);

            let mut dx = vec![0.0; 2 * e];
            matvec_t_add(&p.lstm_w, 2 * e, &dz, &mut dx);
            let (pr, ar) = s.rows;
            axpy(1.0, &dx[..e], &mut grads.pc_emb[pr * e..(pr + 1) * e]);
            axpy(1.0, &dx[e..], &mut grads.addr_emb[ar * e..(ar + 1) * e]);

            dh_next.fill(0.0);
            matvec_t_add(&p.lstm_u, h, &dz, &mut dh_next);
        }
        loss
    }

    pub(crate) fn rows_example(&self, ex: &DecisionExample) -> RowExample {
        let start = ex.history.len().saturating_sub(self.dims.window);
        RowExample {
            steps: ex.history[start..].iter().map(|a| self.rows_of(a)).collect(),
            cands: ex
                .candidates
                .iter()
                .map(|&l| self.vocab.line_row(l))
                .collect(),
            label: ex.label,
        }
    }

    /// Loss of a single decision.
    pub fn loss(&self, ex: &DecisionExample) -> f64 {
        let r = self.rows_example(ex);
        let fwd = self.forward_window(&ex.init, &r.steps, &r.cands);
        let probs = softmax(&fwd.scores);
        -probs[r.label].ln()
    }

    /// Loss of a single decision and its gradient with respect to every
    /// parameter.
    pub fn loss_and_gradient(&self, ex: &DecisionExample) -> (f64, Params) {
        let r = self.rows_example(ex);
        let fwd = self.forward_window(&ex.init, &r.steps, &r.cands);
        let mut grads = Params::zeros(&self.dims);
        let loss = self.backward(&fwd, &r.cands, r.label, &mut grads);
        (loss, grads)
    }

    /// Runs the LSTM over `rows` from a zero state; returns the hidden and
    /// cell state after each step, flattened.
    pub(crate) fn run_states(&self, rows: &[(usize, usize)]) -> (Vec<f64>, Vec<f64>) {
        let h = self.dims.hidden;
        let mut hs = Vec::with_capacity(rows.len() * h);
        let mut cs = Vec::with_capacity(rows.len() * h);
        let mut hp = vec![0.0; h];
        let mut cp = vec![0.0; h];
        for &r in rows {
            let s = self.lstm_step(r, &hp, &cp);
            hs.extend_from_slice(&s.h);
            cs.extend_from_slice(&s.c);
            hp = s.h;
            cp = s.c;
        }
        (hs, cs)
    }
}
