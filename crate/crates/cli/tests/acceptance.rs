//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the report prints in order
//! and reads as a checklist. Exits non-zero if any criterion fails.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cacheprobe::cachesim::{
    policy_belady, policy_lru, policy_phase_freq, simulate, CacheConfig, SimResult,
};
use cacheprobe::model::{
    model_policy, record_activations, train_imitation, DecisionExample, Model, ModelConfig,
    RecurrentState, Vocab,
};
use cacheprobe::phases::{
    find_phases, labeling_agreement, phase_frequency_table, slice_features, BinSpec, PhaseLabeling,
    PhaseParams, SliceFeatures,
};
use cacheprobe::probe::{
    compare_records, correlate_with_phases, pca, pearson, ActivationRecord, RecordKind,
};
use cacheprobe::streams::{detect_streams, keep_stream_suffix, remove_stream, IndexMap};
use cacheprobe::trace::{
    generate_synthetic, parse_trace, reuse_profile, AccessPattern, MemoryAccess, PcBehavior,
    PlantedStream, Segment, SyntheticSpec, Trace, WorkingSet,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("Bélády matches the exhaustive optimum", belady_optimality),
        ("Bélády dominates every other policy", policy_dominance),
        ("learned policy escapes the LRU pathology", lru_pathology),
        ("planted phases are recovered", phase_recovery),
        (
            "planted streams are recovered and edits close",
            stream_recovery,
        ),
        ("PCA matches a dense eigendecomposition", pca_oracle),
        ("model gradients match finite differences", gradient_check),
        ("correlation report is exact on fixtures", probe_sanity),
        ("counterfactual comparison metric", comparison_metric),
        ("determinism and round trips", determinism),
    ];
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} - {name}: {} [{:.1}s]",
            n + 1,
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- criterion 1

/// Best achievable hit count for a fully associative cache that must insert
/// every missing line, by dynamic programming over resident sets.
fn optimal_hits(lines: &[u64], capacity: usize) -> usize {
    let mut ids: HashMap<u64, u32> = HashMap::new();
    for &l in lines {
        let n = ids.len() as u32;
        ids.entry(l).or_insert(n);
    }
    let mut states: HashMap<u32, usize> = HashMap::from([(0, 0)]);
    for &l in lines {
        let bit = 1u32 << ids[&l];
        let mut next: HashMap<u32, usize> = HashMap::new();
        let mut offer = |mask: u32, hits: usize| {
            let e = next.entry(mask).or_insert(hits);
            *e = (*e).max(hits);
        };
        for (&mask, &hits) in &states {
            if mask & bit != 0 {
                offer(mask, hits + 1);
            } else if (mask.count_ones() as usize) < capacity {
                offer(mask | bit, hits);
            } else {
                let mut rest = mask;
                while rest != 0 {
                    let victim = rest & rest.wrapping_neg();
                    offer((mask & !victim) | bit, hits);
                    rest &= !victim;
                }
            }
        }
        states = next;
    }
    states.into_values().max().unwrap_or(0)
}

fn belady_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..200 {
        let len = rng.gen_range(1..=40);
        let distinct = rng.gen_range(1..=12u64);
        let capacity = rng.gen_range(2..=4);
        let lines: Vec<u64> = (0..len).map(|_| rng.gen_range(0..distinct)).collect();
        let trace = Trace::from_lines(&lines, 64).unwrap();
        let cache = CacheConfig::fully_associative(capacity, 64).unwrap();
        let b = simulate(&trace, &cache, &mut policy_belady(&trace)).unwrap();
        if b.hits() != optimal_hits(&lines, capacity) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!(
            "200 traces, {mismatches} mismatches, {:.2}s (limit 10s)",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- criterion 2

fn random_trace(rng: &mut ChaCha8Rng) -> Trace {
    let len = rng.gen_range(200..800);
    let lines = rng.gen_range(4..48u64);
    let pcs = [0x400, 0x404, 0x408, 0x40c, 0x500];
    let mut cursor = 0u64;
    let accesses = (0..len)
        .map(|_| {
            let line = match rng.gen_range(0..3) {
                0 => rng.gen_range(0..lines),
                1 => {
                    cursor = (cursor + 1) % lines;
                    cursor
                }
                _ => rng.gen_range(0..lines.min(6)),
            };
            MemoryAccess::new(*pcs.choose(rng).unwrap(), line * 64 + rng.gen_range(0..64))
        })
        .collect();
    Trace::new(accesses, 64).unwrap()
}

fn tiny_model_config(seed: u64) -> ModelConfig {
    ModelConfig {
        embed_dim: 6,
        hidden_dim: 8,
        window: 8,
        epochs: 2,
        seed,
        ..ModelConfig::default()
    }
}

fn policy_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let caches = [
        CacheConfig::fully_associative(4, 64).unwrap(),
        CacheConfig::fully_associative(8, 64).unwrap(),
        CacheConfig::new(16, 4, 64).unwrap(),
        CacheConfig::new(16, 2, 64).unwrap(),
        CacheConfig::new(32, 8, 64).unwrap(),
    ];
    let params = PhaseParams {
        slice_len: 50,
        ..PhaseParams::default()
    };
    let (mut runs, mut violations) = (0, Vec::new());
    let mut check = |what: String, b: &SimResult, other: &SimResult| {
        runs += 1;
        if other.hits() > b.hits() {
            violations.push(what);
        }
    };
    for t in 0..60 {
        let trace = random_trace(&mut rng);
        let labels = find_phases(&trace, &params).unwrap().labeling;
        let table = phase_frequency_table(&trace, &labels).unwrap();
        // Untrained models are arbitrary online policies; a few get trained.
        let model = if t % 10 == 0 {
            let cache = &caches[t / 10 % caches.len()];
            match train_imitation(&trace, cache, &tiny_model_config(t as u64)) {
                Ok((m, _)) => m,
                Err(_) => Model::new(tiny_model_config(t as u64), &trace).unwrap(),
            }
        } else {
            Model::new(tiny_model_config(t as u64), &trace).unwrap()
        };
        for (c, cache) in caches.iter().enumerate() {
            let b = simulate(&trace, cache, &mut policy_belady(&trace)).unwrap();
            let l = simulate(&trace, cache, &mut policy_lru()).unwrap();
            let f = simulate(
                &trace,
                cache,
                &mut policy_phase_freq(labels.clone(), table.clone()),
            )
            .unwrap();
            let m = simulate(&trace, cache, &mut model_policy(&model)).unwrap();
            check(format!("trace {t} cache {c} lru"), &b, &l);
            check(format!("trace {t} cache {c} phase-freq"), &b, &f);
            check(format!("trace {t} cache {c} model"), &b, &m);
        }
    }
    Outcome::new(
        violations.is_empty(),
        format!(
            "{runs} comparisons, {} violations {:?}",
            violations.len(),
            violations
        ),
    )
}

// ---------------------------------------------------------------- criterion 3

fn lru_pathology() -> Outcome {
    let w = 8u64;
    let lines: Vec<u64> = (0..5000).map(|i| i % (w + 1)).collect();
    let trace = Trace::from_lines(&lines, 64).unwrap();
    let cache = CacheConfig::fully_associative(w as usize, 64).unwrap();
    let start = Instant::now();
    let (model, curve) = train_imitation(&trace, &cache, &ModelConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let l = simulate(&trace, &cache, &mut policy_lru()).unwrap();
    let b = simulate(&trace, &cache, &mut policy_belady(&trace)).unwrap();
    let m = simulate(&trace, &cache, &mut model_policy(&model)).unwrap();
    let ratio = m.hit_rate() / b.hit_rate();
    Outcome::new(
        l.hits() == 0 && ratio >= 0.7 && elapsed < Duration::from_secs(300),
        format!(
            "LRU hits {}, model {:.4} vs Bélády {:.4} (ratio {ratio:.3}, need 0.7), \
             {} epochs trained in {:.1}s (limit 300s)",
            l.hits(),
            m.hit_rate(),
            b.hit_rate(),
            curve.epochs.len() - 1,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- criterion 4

/// Regimes with distinct reuse distances and loop strides.
fn palette(id: usize) -> (u64, AccessPattern, i64) {
    [
        (3, AccessPattern::Cyclic, 1),
        (6, AccessPattern::Cyclic, 8),
        (12, AccessPattern::Cyclic, -2),
        (5, AccessPattern::Uniform, 3),
    ][id]
}

fn planted_segment(id: usize, duration: usize) -> Segment {
    let (lines, pattern, step) = palette(id);
    Segment {
        duration,
        phase: id,
        working_set: Some(WorkingSet {
            base: 0x10_0000 * (id as u64 + 1),
            lines,
            pattern,
        }),
        streams: vec![],
        stream_every: 1,
        pc: PcBehavior {
            base: 0x1000 * (id as u64 + 1),
            step,
            body: 16,
        },
    }
}

/// Mean slice histogram of each planted phase.
fn phase_profiles(trace: &Trace, truth: &PhaseLabeling, slice_len: usize) -> Vec<SliceFeatures> {
    let profile = reuse_profile(trace);
    let slices = slice_features(trace, &profile, slice_len, &BinSpec::default()).unwrap();
    let mut out: Vec<Option<SliceFeatures>> = vec![None; truth.num_phases()];
    let mut counts = vec![0.0; truth.num_phases()];
    for s in &slices {
        let p = truth.labels()[s.start];
        if truth.labels()[s.start..s.end].iter().any(|&l| l != p) {
            continue;
        }
        counts[p] += 1.0;
        let acc = out[p].get_or_insert_with(|| SliceFeatures {
            reuse_hist: vec![0.0; s.reuse_hist.len()],
            dpc_hist: vec![0.0; s.dpc_hist.len()],
            ..s.clone()
        });
        for (a, v) in acc.reuse_hist.iter_mut().zip(&s.reuse_hist) {
            *a += v;
        }
        for (a, v) in acc.dpc_hist.iter_mut().zip(&s.dpc_hist) {
            *a += v;
        }
    }
    out.into_iter()
        .zip(counts)
        .map(|(f, n)| {
            let mut f = f.expect("every phase has a pure slice");
            f.reuse_hist.iter_mut().for_each(|x| *x /= n);
            f.dpc_hist.iter_mut().for_each(|x| *x /= n);
            f
        })
        .collect()
}

fn phase_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = PhaseParams {
        slice_len: 100,
        ..PhaseParams::default()
    };
    let (mut worst, mut min_gap) = (1.0f64, f64::INFINITY);
    let mut failures = Vec::new();
    for t in 0..20 {
        let regimes = rng.gen_range(2..=4);
        let mut ids: Vec<usize> = (0..4).collect();
        ids.shuffle(&mut rng);
        ids.truncate(regimes);
        let mut order = ids.clone();
        while order.len() < regimes + 2 {
            let next = *ids.choose(&mut rng).unwrap();
            if *order.last().unwrap() != next {
                order.push(next);
            }
        }
        let spec = SyntheticSpec {
            seed: 100 + t,
            line_size: 64,
            disjoint: false,
            segments: order
                .iter()
                .map(|&id| planted_segment(id, 100 * rng.gen_range(8..=15)))
                .collect(),
        };
        let out = generate_synthetic(&spec).unwrap();
        let profiles = phase_profiles(&out.trace, &out.phases, params.slice_len);
        for i in 0..profiles.len() {
            for j in i + 1..profiles.len() {
                min_gap = min_gap.min(profiles[i].distance(&profiles[j], params.dpc_weight));
            }
        }
        let found = find_phases(&out.trace, &params).unwrap().labeling;
        let agreement = labeling_agreement(&found, &out.phases).unwrap();
        worst = worst.min(agreement);
        if agreement < 0.95 {
            failures.push(t);
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        failures.is_empty() && min_gap >= 0.5 && elapsed < Duration::from_secs(30),
        format!(
            "20 traces, worst agreement {:.2}% (need 95%), failing {failures:?}, \
             smallest planted L1 gap {min_gap:.3} (need 0.5), {:.1}s (limit 30s)",
            100.0 * worst,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

fn multi_stream_spec(seed: u64) -> SyntheticSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strides = [64i64, 128, -64, 192, -128, 256];
    let mut streams = Vec::new();
    let mut at = 0;
    for k in 0..4u64 {
        let length = if k == 0 {
            rng.gen_range(300..600)
        } else {
            rng.gen_range(30..120)
        };
        streams.push(PlantedStream {
            base: 0x100_0000 * (k + 1) + 0x80_0000,
            stride: *strides.choose(&mut rng).unwrap(),
            length,
            start: at,
            pc: Some(0x5000 + 0x100 * k),
        });
        at += 2 * length + rng.gen_range(20..200);
    }
    SyntheticSpec {
        seed,
        line_size: 64,
        disjoint: true,
        segments: vec![Segment {
            duration: at + 100,
            phase: 0,
            working_set: Some(WorkingSet {
                base: 0x10_0000,
                lines: 24,
                pattern: AccessPattern::Uniform,
            }),
            streams,
            stream_every: 2,
            pc: PcBehavior::default(),
        }],
    }
}

fn stream_recovery() -> Outcome {
    let (mut planted, mut recovered, mut closed, mut identity) = (0, 0, 0, 0);
    let mut worst = 1.0f64;
    for seed in 0..6 {
        let out = generate_synthetic(&multi_stream_spec(seed)).unwrap();
        let found = detect_streams(&out.trace, 8, 16).unwrap();
        for s in &out.streams {
            planted += 1;
            let best = found
                .iter()
                .filter(|f| f.stride() == s.stride() && f.base() == s.base())
                .map(|f| {
                    s.member_indices()
                        .iter()
                        .filter(|i| f.member_indices().binary_search(i).is_ok())
                        .count() as f64
                        / s.len() as f64
                })
                .fold(0.0, f64::max);
            worst = worst.min(best);
            if best >= 0.95 {
                recovered += 1;
            }
            let edited = remove_stream(&out.trace, s).unwrap();
            let again = detect_streams(&edited.trace, 8, 16).unwrap();
            if !again
                .iter()
                .any(|f| f.base() == s.base() && f.stride() == s.stride())
            {
                closed += 1;
            }
            let same = keep_stream_suffix(&out.trace, s, 1.0).unwrap();
            if same.trace == out.trace && same.index_map == IndexMap::identity(out.trace.len()) {
                identity += 1;
            }
        }
    }
    Outcome::new(
        recovered == planted && closed == planted && identity == planted,
        format!(
            "{planted} planted streams: {recovered} recovered (worst member overlap {:.1}%), \
             {closed} absent after removal, {identity} unchanged by a full suffix",
            100.0 * worst
        ),
    )
}

// ---------------------------------------------------------------- criterion 6

/// Covariance eigenpairs from nalgebra, sorted by descending eigenvalue.
fn dense_eigen(rec: &ActivationRecord) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (n, d) = (rec.rows(), rec.cols());
    let m = nalgebra::DMatrix::from_row_slice(n, d, rec.data());
    let mean = m.row_mean();
    let mut c = m.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    let cov = c.transpose() * &c / (n as f64 - 1.0);
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    (
        idx.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect(),
        idx.iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect(),
    )
}

fn pca_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_vec, mut worst_ratio, mut worst_orth) = (0.0f64, 0.0f64, 0.0f64);
    for t in 0..50 {
        let (rows, cols) = if t == 0 {
            (500, 50)
        } else {
            let cols = rng.gen_range(1..=50);
            (rng.gen_range(cols + 1..=500), cols)
        };
        let scales: Vec<f64> = (0..cols).map(|c| 1.0 + 0.37 * c as f64).collect();
        let data = (0..rows * cols)
            .map(|i| rng.gen_range(-1.0..1.0) * scales[i % cols] + rng.gen_range(-2.0..2.0) * 0.1)
            .collect();
        let rec = ActivationRecord::new(RecordKind::HiddenState, rows, cols, data).unwrap();
        let k = cols.min(10);
        let ours = pca(&rec, k).unwrap();
        let (vals, vecs) = dense_eigen(&rec);
        let total: f64 = vals.iter().sum();
        for c in 0..k {
            let mine = ours.component(c);
            let sign = if mine.iter().zip(&vecs[c]).map(|(a, b)| a * b).sum::<f64>() < 0.0 {
                -1.0
            } else {
                1.0
            };
            for (a, b) in mine.iter().zip(&vecs[c]) {
                worst_vec = worst_vec.max((a - sign * b).abs());
            }
            worst_ratio =
                worst_ratio.max((ours.explained_variance_ratio[c] - vals[c] / total).abs());
        }
        worst_orth = worst_orth.max(ours.orthonormality_error());
    }
    Outcome::new(
        worst_vec <= 1e-8 && worst_ratio <= 1e-8 && worst_orth <= 1e-6,
        format!(
            "50 matrices up to 500x50: component error {worst_vec:.2e}, ratio error \
             {worst_ratio:.2e} (limit 1e-8), orthonormality {worst_orth:.2e} (limit 1e-6)"
        ),
    )
}

// ---------------------------------------------------------------- criterion 7

fn gradient_check() -> Outcome {
    let config = ModelConfig {
        embed_dim: 4,
        hidden_dim: 8,
        window: 6,
        seed: 7,
        ..ModelConfig::default()
    };
    let vocab = Vocab::new(vec![0x400, 0x404, 0x408], (1..=5).collect());
    let mut model = Model::with_vocab(config, vocab, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for (_, g) in model.params_mut().groups_mut() {
        for x in g.iter_mut() {
            *x += rng.gen_range(-0.3..0.3);
        }
    }
    let pcs = [0x400, 0x404, 0x408, 0x999];
    let ex = DecisionExample {
        history: (0..6)
            .map(|i| MemoryAccess::new(pcs[i % 4], (1 + (i as u64 * 3) % 6) * 64))
            .collect(),
        init: RecurrentState {
            hidden: (0..8).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            cell: (0..8).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        },
        candidates: vec![2, 4, 5],
        label: 1,
    };

    let (_, grads) = model.loss_and_gradient(&ex);
    let step = 1e-4;
    let mut report = Vec::new();
    let mut pass = true;
    for (gi, (name, analytic)) in grads.groups().iter().enumerate() {
        let mut diff = 0.0;
        let (mut na, mut nn) = (0.0, 0.0);
        for k in 0..analytic.len() {
            let orig = model.params_mut().groups_mut()[gi].1[k];
            model.params_mut().groups_mut()[gi].1[k] = orig + step;
            let up = model.loss(&ex);
            model.params_mut().groups_mut()[gi].1[k] = orig - step;
            let down = model.loss(&ex);
            model.params_mut().groups_mut()[gi].1[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            diff += (analytic[k] - numeric).powi(2);
            na += analytic[k] * analytic[k];
            nn += numeric * numeric;
        }
        let rel = diff.sqrt() / (na.sqrt() + nn.sqrt());
        pass &= rel <= 1e-5 && na > 0.0;
        report.push(format!("{name} {rel:.1e}"));
    }
    Outcome::new(
        pass,
        format!("relative errors (limit 1e-5): {}", report.join(", ")),
    )
}

// ---------------------------------------------------------------- criterion 8

fn two_phase_regime(phase: usize, lines: u64, step: i64) -> Segment {
    Segment {
        duration: 800,
        phase,
        working_set: Some(WorkingSet {
            base: 0x10_0000 * (phase as u64 + 1),
            lines,
            pattern: AccessPattern::Cyclic,
        }),
        streams: vec![],
        stream_every: 1,
        pc: PcBehavior {
            base: 0x1000 * (phase as u64 + 1),
            step,
            body: 16,
        },
    }
}

fn probe_sanity() -> Outcome {
    let labels = PhaseLabeling::from_raw((0..40).map(|i| (i / 10) % 2).collect());
    let indicator = labels.indicator(0);
    let negated: Vec<f64> = indicator.iter().map(|x| -x).collect();
    let constant = vec![2.5; indicator.len()];

    let exact = |r: Option<f64>, want: f64| r.is_some_and(|r| (r - want).abs() <= 1e-12);
    let mut ok = exact(pearson(&indicator, &indicator), 1.0)
        && exact(pearson(&indicator, &negated), -1.0)
        && pearson(&indicator, &constant).is_none();

    // The same fixtures through the report: a one-column record projects onto
    // itself (centered), so its series correlates exactly with the indicator.
    let rec = ActivationRecord::new(RecordKind::HiddenState, 40, 1, indicator.clone()).unwrap();
    let report = correlate_with_phases(&pca(&rec, 1).unwrap(), &labels).unwrap();
    ok &= exact(report.get(0, 0), 1.0) && exact(report.get(0, 1), -1.0);
    let single = PhaseLabeling::from_raw(vec![0; 40]);
    ok &= correlate_with_phases(&pca(&rec, 1).unwrap(), &single)
        .unwrap()
        .get(0, 0)
        .is_none();

    // Soft check on a trained model: reported, never failed on.
    let spec = SyntheticSpec {
        seed: 5,
        line_size: 64,
        disjoint: false,
        segments: vec![
            two_phase_regime(0, 10, 1),
            two_phase_regime(1, 20, 12),
            two_phase_regime(0, 10, 1),
            two_phase_regime(1, 20, 12),
        ],
    };
    let out = generate_synthetic(&spec).unwrap();
    let cache = CacheConfig::fully_associative(12, 64).unwrap();
    let config = ModelConfig {
        embed_dim: 16,
        hidden_dim: 32,
        window: 16,
        epochs: 3,
        ..ModelConfig::default()
    };
    let (model, _) = train_imitation(&out.trace, &cache, &config).unwrap();
    let rec = record_activations(&model, &out.trace, &cache).unwrap();
    let report = correlate_with_phases(&pca(&rec.hidden, 5).unwrap(), &out.phases).unwrap();
    let soft = match report.strongest() {
        Some((c, p, r)) if r.abs() >= 0.5 => {
            format!("trained model: PC{c} vs phase {p} r = {r:.3}")
        }
        Some((c, p, r)) => {
            format!("WARNING trained model strongest |r| below 0.5: PC{c} vs phase {p} r = {r:.3}")
        }
        None => "WARNING trained model produced no defined correlation".to_string(),
    };
    Outcome::new(ok, format!("fixtures exact to 1e-12: {ok}; {soft}"))
}

// ---------------------------------------------------------------- criterion 9

fn cli(out: &Path, config: &Path, args: &[&str]) -> Result<String, String> {
    let output = Command::new(env!("CARGO_BIN_EXE_cacheprobe"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !output.status.success() {
        return Err(format!(
            "`cacheprobe {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&output.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&output.stdout).into_owned())
}

const MILC_SPEC: &str = r#"
seed = 21
disjoint = true

[[segments]]
duration = 3000
phase = 0
stream_every = 2
working_set = { base = 0x100000, lines = 24, pattern = "uniform" }
streams = [
  { base = 0x800000, stride = 64, length = 600, start = 0, pc = 0x5000 },
  { base = 0x900000, stride = 128, length = 40, start = 1250, pc = 0x5100 },
  { base = 0xa00000, stride = -64, length = 40, start = 1400, pc = 0x5200 },
  { base = 0xb00000, stride = 64, length = 40, start = 1600, pc = 0x5300 },
]
"#;

const SMALL_MODEL: &str = "embed_dim = 8\nhidden_dim = 16\nwindow = 8\nepochs = 2\n";

fn comparison_metric() -> Outcome {
    let rows = 30;
    let data: Vec<f64> = (0..rows * 3).map(|i| (i as f64 * 0.7).sin()).collect();
    let a = ActivationRecord::new(RecordKind::HiddenState, rows, 3, data.clone()).unwrap();
    let shifted = ActivationRecord::new(
        RecordKind::HiddenState,
        rows,
        3,
        data.iter().map(|x| x + 0.25).collect(),
    )
    .unwrap();
    let id = IndexMap::identity(rows);
    let same = compare_records(&a, &a, &id).unwrap().mean_abs_diff;
    let offset = compare_records(&a, &shifted, &id).unwrap().mean_abs_diff;
    let fixtures = same == 0.0 && (offset - 0.25).abs() <= 1e-12;

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("milc.toml"), MILC_SPEC).unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(
        &config,
        format!("synthetic = \"milc.toml\"\ncache_lines = 16\nassociativity = 16\n{SMALL_MODEL}"),
    )
    .unwrap();
    let out = dir.path().join("out");
    let pipeline = (|| {
        cli(&out, &config, &["streams", "detect"])?;
        cli(&out, &config, &["train"])?;
        cli(
            &out,
            &config,
            &["probe", "compare", "--base", "0x800000", "--stride", "64"],
        )?;
        let text = std::fs::read_to_string(out.join("compare.json")).map_err(|e| e.to_string())?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        let diff = v["mean_abs_diff"].as_f64().ok_or("no mean_abs_diff")?;
        let rows = v["rows_compared"].as_u64().ok_or("no rows_compared")?;
        Ok::<_, String>((diff, rows))
    })();
    match pipeline {
        Ok((diff, rows)) => Outcome::new(
            fixtures && diff.is_finite(),
            format!(
                "identical 0 and offset 0.25 fixtures exact: {fixtures}; MILC-style stream \
                 removal: mean abs difference {diff:.4} over {rows} aligned timesteps"
            ),
        ),
        Err(e) => Outcome::new(false, format!("fixtures exact: {fixtures}; pipeline: {e}")),
    }
}

// --------------------------------------------------------------- criterion 10

const RECIPE_SPEC: &str = r#"
seed = 0
disjoint = true

[[segments]]
duration = 600
phase = 0
working_set = { base = 0x100000, lines = 12, pattern = "cyclic" }
pc = { base = 0x401000, step = 1, body = 16 }

[[segments]]
duration = 600
phase = 1
stream_every = 2
working_set = { base = 0x200000, lines = 8, pattern = "uniform" }
pc = { base = 0x402000, step = 4, body = 12 }
streams = [{ base = 0x800000, stride = 64, length = 200, start = 0, pc = 0x403000 }]

[[segments]]
duration = 600
phase = 0
working_set = { base = 0x100000, lines = 12, pattern = "cyclic" }
pc = { base = 0x401000, step = 1, body = 16 }
"#;

const RECIPE: &[&[&str]] = &[
    &["synth"],
    &["phases"],
    &["streams", "detect"],
    &["train"],
    &["simulate"],
    &["probe", "pca"],
    &["probe", "pca", "--kind", "attention"],
    &["probe", "correlate"],
    &["probe", "embeddings"],
    &["probe", "compare", "--id", "0"],
    &["streams", "remove", "--id", "0"],
    &["plot"],
];

fn directory_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("recipe.toml"), RECIPE_SPEC).unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(
        &config,
        format!(
            "synthetic = \"recipe.toml\"\nseed = 3\n\
             policies = [\"belady\", \"lru\", \"phase-freq\", \"model\"]\n{SMALL_MODEL}"
        ),
    )
    .unwrap();
    let run = |out: &Path| -> Result<(), String> {
        for args in RECIPE {
            cli(out, &config, args)?;
        }
        Ok(())
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    if let Err(e) = run(&a).and_then(|_| run(&b)) {
        return Outcome::new(false, e);
    }
    let (fa, fb) = (directory_bytes(&a), directory_bytes(&b));
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let reproducible = fa.len() == fb.len() && differing.is_empty();

    // Round trips: text traces and binary checkpoints.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut trace_ok = true;
    for _ in 0..50 {
        let trace = random_trace(&mut rng);
        let back = parse_trace(trace.to_text().as_bytes(), 64).unwrap();
        trace_ok &= back == trace && back.to_text() == trace.to_text();
    }
    let ckpt = std::fs::read(a.join("model.ckpt")).unwrap();
    let model = Model::from_bytes(&ckpt).unwrap();
    let ckpt_ok =
        model.to_bytes() == ckpt && Model::from_bytes(&model.to_bytes()).unwrap() == model;

    Outcome::new(
        reproducible && trace_ok && ckpt_ok,
        format!(
            "recipe of {} commands run twice: {} files, differing {differing:?}; \
             trace round trip {trace_ok}; checkpoint round trip {ckpt_ok}",
            RECIPE.len(),
            fa.len()
        ),
    )
}
