//! Phase extraction.
//!
//! The trace is cut into fixed-length slices, each described by a normalized
//! histogram of forward reuse distances and one of delta-PCs. Adjacent slices
//! are merged while they are close under the combined L1 metric, then the
//! resulting segments are grouped into phases by complete-linkage clustering
//! with the same metric.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{line_of, reuse_profile, LineId, ReuseProfile, Trace};

/// Per-timestep phase ids, canonicalized so that ids appear in order of first
/// occurrence and form the range `0..num_phases`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PhaseLabeling {
    labels: Vec<usize>,
    num_phases: usize,
}

impl PhaseLabeling {
    /// Relabels arbitrary ids by first occurrence.
    pub fn from_raw(raw: Vec<usize>) -> Self {
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let labels: Vec<usize> = raw
            .into_iter()
            .map(|id| {
                let next = remap.len();
                *remap.entry(id).or_insert(next)
            })
            .collect();
        Self {
            num_phases: remap.len(),
            labels,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_phases(&self) -> usize {
        self.num_phases
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// 0/1 indicator series of `phase`.
    pub fn indicator(&self, phase: usize) -> Vec<f64> {
        self.labels
            .iter()
            .map(|&l| if l == phase { 1.0 } else { 0.0 })
            .collect()
    }

    /// `.phases` sidecar: one id per line.
    pub fn to_sidecar(&self) -> String {
        let mut s = String::with_capacity(self.labels.len() * 2);
        for l in &self.labels {
            s.push_str(&l.to_string());
            s.push('\n');
        }
        s
    }

    pub fn parse_sidecar(text: &str) -> Result<Self> {
        let raw = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.trim().parse::<usize>().map_err(|e| Error::Parse {
                    record: i + 1,
                    line: i + 1,
                    message: format!("bad phase id `{l}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_raw(raw))
    }
}

/// Histogram bin layout shared by every slice of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    /// Reuse distances fall in bin `floor(log2 d)`, capped at this power.
    pub reuse_max_pow: u32,
    /// Inclusive upper bounds of the delta-PC magnitude bins. Magnitudes
    /// above the last bound fall in a final "beyond" bin.
    pub dpc_bounds: Vec<u64>,
}

impl Default for BinSpec {
    fn default() -> Self {
        Self {
            reuse_max_pow: 20,
            dpc_bounds: vec![1, 2, 3, 4, 5, 6, 7, 8, 64, 4096],
        }
    }
}

impl BinSpec {
    /// Finite bins plus one for "never reused".
    pub fn reuse_bins(&self) -> usize {
        self.reuse_max_pow as usize + 2
    }

    pub fn reuse_bin(&self, distance: Option<usize>) -> usize {
        match distance {
            None => self.reuse_max_pow as usize + 1,
            Some(d) => {
                debug_assert!(d >= 1);
                (usize::BITS - 1 - d.leading_zeros()).min(self.reuse_max_pow) as usize
            }
        }
    }

    /// Zero, then positive magnitude bins, then negative magnitude bins.
    pub fn dpc_bins(&self) -> usize {
        1 + 2 * (self.dpc_bounds.len() + 1)
    }

    pub fn dpc_bin(&self, delta: i64) -> usize {
        if delta == 0 {
            return 0;
        }
        let mag = delta.unsigned_abs();
        let k = self
            .dpc_bounds
            .iter()
            .position(|&b| mag <= b)
            .unwrap_or(self.dpc_bounds.len());
        if delta > 0 {
            1 + k
        } else {
            2 + self.dpc_bounds.len() + k
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dpc_bounds.windows(2).any(|w| w[0] >= w[1])
            || self.dpc_bounds.first().is_some_and(|&b| b == 0)
        {
            return Err(Error::InvalidConfig(
                "delta-PC bounds must be positive and strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Histogram features of a span `[start, end)` of the trace.
///
/// The weights are the number of samples behind each histogram, so merging
/// two spans by weighted mean gives the histogram of their union.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceFeatures {
    pub start: usize,
    pub end: usize,
    pub reuse_hist: Vec<f64>,
    pub dpc_hist: Vec<f64>,
    pub reuse_weight: f64,
    pub dpc_weight: f64,
}

impl SliceFeatures {
    pub fn span(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// Combined metric: reuse L1 plus `dpc_weight` times delta-PC L1.
    pub fn distance(&self, other: &Self, dpc_weight: f64) -> f64 {
        l1(&self.reuse_hist, &other.reuse_hist) + dpc_weight * l1(&self.dpc_hist, &other.dpc_hist)
    }

    fn merged(&self, other: &Self) -> Self {
        Self {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
            reuse_hist: weighted_mean(
                &self.reuse_hist,
                self.reuse_weight,
                &other.reuse_hist,
                other.reuse_weight,
            ),
            dpc_hist: weighted_mean(
                &self.dpc_hist,
                self.dpc_weight,
                &other.dpc_hist,
                other.dpc_weight,
            ),
            reuse_weight: self.reuse_weight + other.reuse_weight,
            dpc_weight: self.dpc_weight + other.dpc_weight,
        }
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn weighted_mean(a: &[f64], wa: f64, b: &[f64], wb: f64) -> Vec<f64> {
    let total = wa + wb;
    if total == 0.0 {
        return a.to_vec();
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x * wa + y * wb) / total)
        .collect()
}

fn normalize(counts: Vec<f64>) -> (Vec<f64>, f64) {
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return (counts, 0.0);
    }
    (counts.into_iter().map(|c| c / total).collect(), total)
}

/// Featurizes consecutive non-overlapping slices of `slice_len` accesses.
///
/// A final partial slice is kept when it holds at least `slice_len / 2`
/// accesses, otherwise it is folded into its predecessor. The delta-PC at
/// index `i` is `pc[i] - pc[i-1]`; index 0 contributes none.
pub fn slice_features(
    trace: &Trace,
    profile: &ReuseProfile,
    slice_len: usize,
    bins: &BinSpec,
) -> Result<Vec<SliceFeatures>> {
    bins.validate()?;
    if slice_len < 2 {
        return Err(Error::InvalidConfig("slice length must be at least 2".into()));
    }
    if trace.len() < slice_len {
        return Err(Error::InvalidInput(format!(
            "trace of {} accesses is shorter than one slice of {slice_len}",
            trace.len()
        )));
    }
    if profile.len() != trace.len() {
        return Err(Error::InvalidInput(
            "reuse profile does not match the trace".into(),
        ));
    }

    let mut bounds: Vec<(usize, usize)> = (0..trace.len() / slice_len)
        .map(|k| (k * slice_len, (k + 1) * slice_len))
        .collect();
    let tail = trace.len() % slice_len;
    if tail > 0 {
        if tail >= slice_len / 2 {
            bounds.push((trace.len() - tail, trace.len()));
        } else {
            bounds.last_mut().expect("at least one full slice").1 = trace.len();
        }
    }

    let pcs: Vec<u64> = trace.accesses().iter().map(|a| a.pc).collect();
    Ok(bounds
        .into_iter()
        .map(|(start, end)| {
            let mut reuse = vec![0.0; bins.reuse_bins()];
            let mut dpc = vec![0.0; bins.dpc_bins()];
            for i in start..end {
                reuse[bins.reuse_bin(profile.get(i))] += 1.0;
                if i > 0 {
                    let delta = pcs[i].wrapping_sub(pcs[i - 1]) as i64;
                    dpc[bins.dpc_bin(delta)] += 1.0;
                }
            }
            let (reuse_hist, reuse_weight) = normalize(reuse);
            let (dpc_hist, dpc_weight) = normalize(dpc);
            SliceFeatures {
                start,
                end,
                reuse_hist,
                dpc_hist,
                reuse_weight,
                dpc_weight,
            }
        })
        .collect())
}

/// Repeatedly merges the closest adjacent pair while its distance is below
/// `threshold`.
pub fn merge_neighbors(
    features: &[SliceFeatures],
    threshold: f64,
    dpc_weight: f64,
) -> Result<Vec<SliceFeatures>> {
    if features.is_empty() {
        return Err(Error::InvalidInput("no slices to merge".into()));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidConfig("merge threshold must be positive".into()));
    }
    let mut segs = features.to_vec();
    let mut gaps: Vec<f64> = segs
        .windows(2)
        .map(|w| w[0].distance(&w[1], dpc_weight))
        .collect();
    loop {
        let best = gaps
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &d)| (i, d));
        let Some((i, d)) = best else { break };
        if d >= threshold {
            break;
        }
        let merged = segs[i].merged(&segs[i + 1]);
        segs[i] = merged;
        segs.remove(i + 1);
        gaps.remove(i);
        if i > 0 {
            gaps[i - 1] = segs[i - 1].distance(&segs[i], dpc_weight);
        }
        if i < gaps.len() {
            gaps[i] = segs[i].distance(&segs[i + 1], dpc_weight);
        }
    }
    Ok(segs)
}

/// Complete-linkage agglomerative clustering of segments, cut at `threshold`.
/// Phase ids follow first occurrence along the trace.
pub fn global_cluster(
    segments: &[SliceFeatures],
    threshold: f64,
    dpc_weight: f64,
) -> Result<PhaseLabeling> {
    if segments.is_empty() {
        return Err(Error::InvalidInput("no segments to cluster".into()));
    }
    if segments[0].start != 0 || segments.windows(2).any(|w| w[0].end != w[1].start) {
        return Err(Error::InvalidInput(
            "segments must tile the trace contiguously from index 0".into(),
        ));
    }
    let n = segments.len();
    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = segments[i].distance(&segments[j], dpc_weight);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    // cluster id per segment; active cluster representatives
    let mut owner: Vec<usize> = (0..n).collect();
    let mut active: Vec<usize> = (0..n).collect();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let d = dist[a][b];
                if d < threshold && best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((a, b, d));
                }
            }
        }
        let Some((a, b, _)) = best else { break };
        for &c in &active {
            let d = dist[a][c].max(dist[b][c]);
            dist[a][c] = d;
            dist[c][a] = d;
        }
        dist[a][a] = 0.0;
        active.retain(|&c| c != b);
        for o in owner.iter_mut() {
            if *o == b {
                *o = a;
            }
        }
    }

    let mut raw = Vec::with_capacity(segments.last().unwrap().end);
    for (seg, &cluster) in segments.iter().zip(&owner) {
        raw.extend(std::iter::repeat_n(cluster, seg.len()));
    }
    Ok(PhaseLabeling::from_raw(raw))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseParams {
    pub slice_len: usize,
    pub bins: BinSpec,
    pub merge_threshold: f64,
    pub global_threshold: f64,
    /// Weight of the delta-PC term in the combined metric.
    pub dpc_weight: f64,
}

impl Default for PhaseParams {
    fn default() -> Self {
        Self {
            slice_len: 1000,
            bins: BinSpec::default(),
            merge_threshold: 0.4,
            global_threshold: 0.4,
            dpc_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhaseAnalysis {
    pub slices: Vec<SliceFeatures>,
    pub segments: Vec<SliceFeatures>,
    pub labeling: PhaseLabeling,
}

/// Slices, merges and clusters a trace in one go.
pub fn find_phases(trace: &Trace, params: &PhaseParams) -> Result<PhaseAnalysis> {
    let profile = reuse_profile(trace);
    let slices = slice_features(trace, &profile, params.slice_len, &params.bins)?;
    let segments = merge_neighbors(&slices, params.merge_threshold, params.dpc_weight)?;
    let labeling = global_cluster(&segments, params.global_threshold, params.dpc_weight)?;
    Ok(PhaseAnalysis {
        slices,
        segments,
        labeling,
    })
}

/// Writes `start,end,kind,bin,value` rows for every histogram entry.
pub fn write_histograms_csv<W: Write>(features: &[SliceFeatures], mut out: W) -> Result<()> {
    use std::fmt::Write as _;
    let mut s = String::from("start,end,kind,bin,value\n");
    for f in features {
        for (kind, hist) in [("reuse", &f.reuse_hist), ("dpc", &f.dpc_hist)] {
            for (b, v) in hist.iter().enumerate() {
                let _ = writeln!(s, "{},{},{kind},{b},{v}", f.start, f.end);
            }
        }
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

/// Fraction of timesteps on which two labelings agree under the best
/// one-to-one matching of their ids.
pub fn labeling_agreement(a: &PhaseLabeling, b: &PhaseLabeling) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "labelings differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Ok(1.0);
    }
    let (big, small) = if a.num_phases() >= b.num_phases() {
        (a, b)
    } else {
        (b, a)
    };
    let (nb, ns) = (big.num_phases(), small.num_phases());
    let mut table = vec![vec![0usize; ns]; nb];
    for (&x, &y) in big.labels().iter().zip(small.labels()) {
        table[x][y] += 1;
    }

    let matched = if ns <= 16 {
        let mut dp = vec![0usize; 1 << ns];
        for row in &table {
            let mut next = dp.clone();
            for mask in 0..(1usize << ns) {
                for (j, &c) in row.iter().enumerate() {
                    if mask & (1 << j) == 0 {
                        let m = mask | (1 << j);
                        next[m] = next[m].max(dp[mask] + c);
                    }
                }
            }
            dp = next;
        }
        dp.into_iter().max().unwrap_or(0)
    } else {
        // Greedy on the largest cells; only reached with many phases.
        let mut cells: Vec<(usize, usize, usize)> = table
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &c)| (c, i, j)))
            .collect();
        cells.sort_unstable_by(|x, y| y.cmp(x));
        let (mut used_i, mut used_j) = (vec![false; nb], vec![false; ns]);
        let mut total = 0;
        for (c, i, j) in cells {
            if !used_i[i] && !used_j[j] {
                used_i[i] = true;
                used_j[j] = true;
                total += c;
            }
        }
        total
    };
    Ok(matched as f64 / a.len() as f64)
}

/// Occurrence counts per (phase, cache line).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PhaseFrequencyTable {
    counts: HashMap<(usize, LineId), u64>,
}

impl PhaseFrequencyTable {
    pub fn count(&self, phase: usize, line: LineId) -> u64 {
        self.counts.get(&(phase, line)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, LineId, u64)> + '_ {
        self.counts.iter().map(|(&(p, l), &c)| (p, l, c))
    }
}

pub fn phase_frequency_table(
    trace: &Trace,
    labeling: &PhaseLabeling,
) -> Result<PhaseFrequencyTable> {
    if labeling.len() != trace.len() {
        return Err(Error::InvalidInput(format!(
            "labeling covers {} accesses but the trace has {}",
            labeling.len(),
            trace.len()
        )));
    }
    let mut counts = HashMap::new();
    for (a, &phase) in trace.accesses().iter().zip(labeling.labels()) {
        *counts
            .entry((phase, line_of(a.address, trace.line_size())))
            .or_insert(0) += 1;
    }
    Ok(PhaseFrequencyTable { counts })
}
