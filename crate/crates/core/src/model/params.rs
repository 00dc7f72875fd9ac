use rand::Rng;

/// Model shape. Embedding tables carry one extra row (index 0) for ids that
/// were not seen in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub embed: usize,
    pub hidden: usize,
    pub window: usize,
    pub pc_rows: usize,
    pub addr_rows: usize,
}

impl Dims {
    pub fn input(&self) -> usize {
        2 * self.embed
    }

    pub fn gates(&self) -> usize {
        4 * self.hidden
    }
}

/// All trainable parameters, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `pc_rows x embed`
    pub pc_emb: Vec<f64>,
    /// `addr_rows x embed`
    pub addr_emb: Vec<f64>,
    /// `4 hidden x 2 embed`, gate blocks in order input, forget, cell, output.
    pub lstm_w: Vec<f64>,
    /// `4 hidden x hidden`
    pub lstm_u: Vec<f64>,
    pub lstm_b: Vec<f64>,
    /// `hidden x hidden`
    pub query: Vec<f64>,
    /// `hidden x embed`
    pub key: Vec<f64>,
    /// `hidden x hidden`
    pub value: Vec<f64>,
    /// `window x hidden`, added to the value at each offset from the current access.
    pub position: Vec<f64>,
    pub score_out: Vec<f64>,
    pub score_key: Vec<f64>,
}

pub const GROUP_NAMES: [&str; 11] = [
    "pc_emb",
    "addr_emb",
    "lstm_w",
    "lstm_u",
    "lstm_b",
    "query",
    "key",
    "value",
    "position",
    "score_out",
    "score_key",
];

impl Params {
    pub fn zeros(d: &Dims) -> Self {
        Self {
            pc_emb: vec![0.0; d.pc_rows * d.embed],
            addr_emb: vec![0.0; d.addr_rows * d.embed],
            lstm_w: vec![0.0; d.gates() * d.input()],
            lstm_u: vec![0.0; d.gates() * d.hidden],
            lstm_b: vec![0.0; d.gates()],
            query: vec![0.0; d.hidden * d.hidden],
            key: vec![0.0; d.hidden * d.embed],
            value: vec![0.0; d.hidden * d.hidden],
            position: vec![0.0; d.window * d.hidden],
            score_out: vec![0.0; d.hidden],
            score_key: vec![0.0; d.hidden],
        }
    }

    pub fn init<R: Rng>(d: &Dims, rng: &mut R) -> Self {
        let mut p = Self::zeros(d);
        let mut fill = |v: &mut Vec<f64>, scale: f64| {
            for x in v.iter_mut() {
                *x = rng.gen_range(-scale..scale);
            }
        };
        let inv_sqrt = |n: usize| 1.0 / (n as f64).sqrt();
        // unit variance
        let unit = 3f64.sqrt();
        fill(&mut p.pc_emb, unit);
        fill(&mut p.addr_emb, unit);
        fill(&mut p.lstm_w, inv_sqrt(d.input()));
        fill(&mut p.lstm_u, inv_sqrt(d.hidden));
        fill(&mut p.query, inv_sqrt(d.hidden));
        fill(&mut p.key, inv_sqrt(d.embed));
        fill(&mut p.value, inv_sqrt(d.hidden));
        fill(&mut p.position, unit);
        fill(&mut p.score_out, inv_sqrt(2 * d.hidden));
        fill(&mut p.score_key, inv_sqrt(2 * d.hidden));
        // forget gate bias
        p.lstm_b[d.hidden..2 * d.hidden].fill(1.0);
        p
    }

    pub fn groups(&self) -> [(&'static str, &Vec<f64>); 11] {
        [
            (GROUP_NAMES[0], &self.pc_emb),
            (GROUP_NAMES[1], &self.addr_emb),
            (GROUP_NAMES[2], &self.lstm_w),
            (GROUP_NAMES[3], &self.lstm_u),
            (GROUP_NAMES[4], &self.lstm_b),
            (GROUP_NAMES[5], &self.query),
            (GROUP_NAMES[6], &self.key),
            (GROUP_NAMES[7], &self.value),
            (GROUP_NAMES[8], &self.position),
            (GROUP_NAMES[9], &self.score_out),
            (GROUP_NAMES[10], &self.score_key),
        ]
    }

    pub fn groups_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 11] {
        [
            (GROUP_NAMES[0], &mut self.pc_emb),
            (GROUP_NAMES[1], &mut self.addr_emb),
            (GROUP_NAMES[2], &mut self.lstm_w),
            (GROUP_NAMES[3], &mut self.lstm_u),
            (GROUP_NAMES[4], &mut self.lstm_b),
            (GROUP_NAMES[5], &mut self.query),
            (GROUP_NAMES[6], &mut self.key),
            (GROUP_NAMES[7], &mut self.value),
            (GROUP_NAMES[8], &mut self.position),
            (GROUP_NAMES[9], &mut self.score_out),
            (GROUP_NAMES[10], &mut self.score_key),
        ]
    }

    pub fn fill_zero(&mut self) {
        for (_, g) in self.groups_mut() {
            g.fill(0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, g) in self.groups_mut() {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.groups()
            .iter()
            .flat_map(|(_, g)| g.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.groups()
            .iter()
            .all(|(_, g)| g.iter().all(|x| x.is_finite()))
    }
}

/// `out = m x` for a `rows x cols` matrix.
#[inline]
pub(crate) fn matvec(m: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), cols);
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o = dot(row, x);
    }
}

/// `out += m x`
#[inline]
pub(crate) fn matvec_add(m: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += m^T y`
#[inline]
pub(crate) fn matvec_t_add(m: &[f64], cols: usize, y: &[f64], out: &mut [f64]) {
    for (row, &yi) in m.chunks_exact(cols).zip(y) {
        if yi != 0.0 {
            axpy(yi, row, out);
        }
    }
}

/// `m += a b^T`
#[inline]
pub(crate) fn outer_add(m: &mut [f64], cols: usize, a: &[f64], b: &[f64]) {
    for (row, &ai) in m.chunks_exact_mut(cols).zip(a) {
        if ai != 0.0 {
            axpy(ai, b, row);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax.
pub(crate) fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
