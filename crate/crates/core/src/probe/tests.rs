use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::phases::PhaseLabeling;
use crate::streams::IndexMap;

fn record(rows: usize, cols: usize, data: Vec<f64>) -> ActivationRecord {
    ActivationRecord::new(RecordKind::HiddenState, rows, cols, data).unwrap()
}

fn random_record(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ActivationRecord {
    // Uneven column scales keep the spectrum well separated.
    let scales: Vec<f64> = (0..cols).map(|c| 1.0 + c as f64 * 0.37).collect();
    let data = (0..rows * cols)
        .map(|i| rng.gen_range(-1.0..1.0) * scales[i % cols] + 3.0)
        .collect();
    record(rows, cols, data)
}

/// Covariance eigendecomposition by nalgebra, sorted descending.
fn oracle(rec: &ActivationRecord) -> (Vec<f64>, Vec<Vec<f64>>) {
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
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = idx
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (vals, vecs)
}

#[test]
fn rank_one_line() {
    let data: Vec<f64> = (0..20)
        .flat_map(|i| {
            let x = i as f64 * 0.3;
            [x + 5.0, 2.0 * x - 1.0]
        })
        .collect();
    let r = pca(&record(20, 2, data), 2).unwrap();
    assert!((r.explained_variance_ratio[0] - 1.0).abs() <= 1e-9);
    assert!(r.explained_variance_ratio[1].abs() <= 1e-9);
    let expect = [1.0 / 5f64.sqrt(), 2.0 / 5f64.sqrt()];
    for (a, b) in r.component(0).iter().zip(expect) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn full_rank_ratios_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rec = random_record(&mut rng, 40, 6);
    let r = pca(&rec, 6).unwrap();
    let sum: f64 = r.explained_variance_ratio.iter().sum();
    assert!((sum - 1.0).abs() <= 1e-9);
}

#[test]
fn matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rec = random_record(&mut rng, 200, 10);
    let r = pca(&rec, 10).unwrap();
    let (vals, vecs) = oracle(&rec);
    let total: f64 = vals.iter().sum();
    for c in 0..10 {
        assert!((r.explained_variance_ratio[c] - vals[c] / total).abs() <= 1e-8);
        let dot: f64 = r.component(c).iter().zip(&vecs[c]).map(|(a, b)| a * b).sum();
        let sign = dot.signum();
        for (a, b) in r.component(c).iter().zip(&vecs[c]) {
            assert!((a - sign * b).abs() <= 1e-8, "component {c}");
        }
    }
    assert!(r.orthonormality_error() <= 1e-6);
}

#[test]
fn sign_convention() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = pca(&random_record(&mut rng, 50, 4), 3).unwrap();
    for c in 0..3 {
        let v = r.component(c);
        let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        assert!(big > 0.0);
    }
}

#[test]
fn degenerate_input() {
    let r = pca(&record(5, 3, vec![2.0; 15]), 2).unwrap();
    assert_eq!(r.explained_variance_ratio, vec![0.0, 0.0]);
    assert!(r.orthonormality_error() <= 1e-12);
    assert!(r.projections.iter().all(|&p| p == 0.0));
}

#[test]
fn bad_k_or_rows() {
    let rec = record(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 7.0]);
    assert!(pca(&rec, 0).is_err());
    assert!(pca(&rec, 3).is_err());
    assert!(pca(&record(1, 2, vec![1.0, 2.0]), 1).is_err());
}

#[test]
fn record_validation() {
    assert!(ActivationRecord::new(RecordKind::HiddenState, 2, 2, vec![0.0; 3]).is_err());
    assert!(ActivationRecord::new(RecordKind::HiddenState, 1, 2, vec![0.0, f64::NAN]).is_err());
    assert!(ActivationRecord::new(RecordKind::HiddenState, 0, 2, vec![]).is_ok());
}

#[test]
fn pearson_fixtures() {
    let labels = PhaseLabeling::from_raw(vec![0, 0, 1, 1, 1, 0, 0, 1]);
    let ind = labels.indicator(0);
    assert_eq!(pearson(&ind, &ind), Some(1.0));
    let neg: Vec<f64> = ind.iter().map(|x| -x).collect();
    assert_eq!(pearson(&neg, &ind), Some(-1.0));
    assert_eq!(pearson(&[3.0; 8], &ind), None);
    let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
    assert!((r - 0.8).abs() < 1e-12);
}

fn report_for(series: Vec<f64>, labels: &PhaseLabeling) -> CorrelationReport {
    let n = series.len();
    let r = PCAResult {
        k: 1,
        dims: 1,
        components: vec![1.0],
        explained_variance_ratio: vec![1.0],
        variances: vec![1.0],
        projections: series,
        rows: n,
        mean: vec![0.0],
    };
    correlate_with_phases(&r, labels).unwrap()
}

#[test]
fn correlation_report() {
    let labels = PhaseLabeling::from_raw(vec![0, 0, 1, 1, 2, 2]);
    let rep = report_for(labels.indicator(1), &labels);
    assert_eq!(rep.get(0, 1), Some(1.0));
    assert!(rep.get(0, 0).unwrap() < 0.0);
    assert_eq!(rep.strongest().unwrap().1, 1);

    let rep = report_for(vec![1.0; 6], &labels);
    assert!(rep.r.iter().all(Option::is_none));
    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().contains("0,2,\n"));

    let short = PhaseLabeling::from_raw(vec![0, 1]);
    let r = PCAResult {
        k: 1,
        dims: 1,
        components: vec![1.0],
        explained_variance_ratio: vec![1.0],
        variances: vec![1.0],
        projections: vec![0.0; 3],
        rows: 3,
        mean: vec![0.0],
    };
    assert!(correlate_with_phases(&r, &short).is_err());
}

#[test]
fn compare_fixtures() {
    let a = record(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
    let id = IndexMap::identity(3);
    assert_eq!(compare_records(&a, &a, &id).unwrap().mean_abs_diff, 0.0);

    let b = record(3, 2, a.data().iter().map(|x| x + 0.5).collect());
    let c = compare_records(&a, &b, &id).unwrap();
    assert!((c.mean_abs_diff - 0.5).abs() < 1e-15);
    assert_eq!(c.per_component.len(), 2);
    assert_eq!(c.rows_compared, 3);
}

#[test]
fn compare_skips_deleted_rows() {
    let a = record(3, 1, vec![1.0, 100.0, 3.0]);
    let b = record(2, 1, vec![1.0, 4.0]);
    let map = IndexMap::from_vec(vec![Some(0), None, Some(1)]);
    let c = compare_records(&a, &b, &map).unwrap();
    assert_eq!(c.rows_compared, 2);
    assert!((c.mean_abs_diff - 0.5).abs() < 1e-15);

    let empty = IndexMap::from_vec(vec![None, None, None]);
    assert!(compare_records(&a, &b, &empty).is_err());
    let wrong = IndexMap::from_vec(vec![Some(0), Some(5), None]);
    assert!(compare_records(&a, &b, &wrong).is_err());
    assert!(compare_records(&a, &b, &IndexMap::identity(2)).is_err());
}

#[test]
fn projections_are_sign_aligned() {
    let a = ActivationRecord::new(RecordKind::Projection, 3, 2, vec![1.0, 2.0, -1.0, 0.5, 0.0, -2.5]).unwrap();
    let b = ActivationRecord::new(
        RecordKind::Projection,
        3,
        2,
        a.data().chunks(2).flat_map(|r| [-r[0], r[1]]).collect(),
    )
    .unwrap();
    let c = compare_records(&a, &b, &IndexMap::identity(3)).unwrap();
    assert_eq!(c.flipped, vec![true, false]);
    assert_eq!(c.mean_abs_diff, 0.0);

    // hidden states are compared as is
    let ah = record(3, 2, a.data().to_vec());
    let bh = record(3, 2, b.data().to_vec());
    assert!(compare_records(&ah, &bh, &IndexMap::identity(3)).unwrap().mean_abs_diff > 0.0);
}

#[test]
fn pca_csv_layout() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let r = pca(&random_record(&mut rng, 4, 3), 2).unwrap();
    let mut out = Vec::new();
    r.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "component,timestep,value");
    assert_eq!(lines.len(), 1 + 2 * 4);
    assert!(lines[5].starts_with("1,0,"));
}

fn matrix_strategy() -> impl Strategy<Value = ActivationRecord> {
    (2usize..30, 1usize..8).prop_flat_map(|(n, d)| {
        prop::collection::vec(-10.0f64..10.0, n * d).prop_map(move |data| record(n, d, data))
    })
}

proptest! {
    #[test]
    fn pca_invariants(rec in matrix_strategy()) {
        let k = rec.rows().min(rec.cols());
        let r = pca(&rec, k).unwrap();
        prop_assert!(r.orthonormality_error() <= 1e-6);
        for w in r.explained_variance_ratio.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        prop_assert!(r.explained_variance_ratio.iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
        prop_assert!(r.explained_variance_ratio.iter().sum::<f64>() <= 1.0 + 1e-9);
    }

    #[test]
    fn reconstruction_of_low_rank(
        n in 5usize..40,
        basis in prop::collection::vec(-3.0f64..3.0, 2 * 6),
        coeffs in prop::collection::vec(-5.0f64..5.0, 80),
    ) {
        // rank <= 2 data in 6 dimensions
        let d = 6;
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            let (u, v) = (coeffs[2 * i], coeffs[2 * i + 1]);
            data.extend((0..d).map(|j| u * basis[j] + v * basis[d + j] + 1.0));
        }
        let rec = record(n, d, data);
        let r = pca(&rec, 3).unwrap();
        let mut err = 0.0;
        let mut norm = 0.0;
        for i in 0..n {
            for j in 0..d {
                let centered = rec.get(i, j) - r.mean[j];
                let recon: f64 = (0..3).map(|c| r.projections[i * 3 + c] * r.component(c)[j]).sum();
                err += (centered - recon).powi(2);
                norm += centered * centered;
            }
        }
        if norm > 1e-12 {
            prop_assert!((err / norm).sqrt() <= 1e-6);
        }
    }

    #[test]
    fn correlation_affine_invariance(
        series in prop::collection::vec(-5.0f64..5.0, 12),
        raw in prop::collection::vec(0usize..3, 12),
        a in 0.1f64..10.0,
        b in -10.0f64..10.0,
    ) {
        let labels = PhaseLabeling::from_raw(raw);
        let base = report_for(series.clone(), &labels);
        let moved = report_for(series.iter().map(|x| a * x + b).collect(), &labels);
        let neg = report_for(series.iter().map(|x| -x).collect(), &labels);
        for p in 0..labels.num_phases() {
            match (base.get(0, p), moved.get(0, p), neg.get(0, p)) {
                (Some(x), Some(y), Some(z)) => {
                    prop_assert!((x - y).abs() <= 1e-9);
                    prop_assert!((x + z).abs() <= 1e-12);
                }
                (None, None, None) => {}
                other => prop_assert!(false, "inconsistent missing values {other:?}"),
            }
        }
    }

    #[test]
    fn compare_symmetry(
        a in prop::collection::vec(-3.0f64..3.0, 10 * 3),
        b in prop::collection::vec(-3.0f64..3.0, 10 * 3),
        keep in prop::collection::vec(any::<bool>(), 10),
        projection in any::<bool>(),
    ) {
        prop_assume!(keep.iter().any(|&k| k));
        let kind = if projection { RecordKind::Projection } else { RecordKind::HiddenState };
        let ra = ActivationRecord::new(kind, 10, 3, a).unwrap();
        let kept = keep.iter().filter(|&&k| k).count();
        let rb = ActivationRecord::new(kind, kept, 3, b[..kept * 3].to_vec()).unwrap();
        let mut next = 0;
        let map = IndexMap::from_vec(keep.iter().map(|&k| k.then(|| { next += 1; next - 1 })).collect());
        let ab = compare_records(&ra, &rb, &map).unwrap();
        let ba = compare_records(&rb, &ra, &map.inverse(kept)).unwrap();
        prop_assert_eq!(ab.mean_abs_diff, ba.mean_abs_diff);
        prop_assert_eq!(compare_records(&ra, &ra, &IndexMap::identity(10)).unwrap().mean_abs_diff, 0.0);
    }
}
