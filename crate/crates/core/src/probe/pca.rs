use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ActivationRecord, RecordKind};
use crate::error::{Error, Result};

/// Principal components of an activation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PCAResult {
    pub k: usize,
    pub dims: usize,
    /// `k x dims`, one unit-norm direction per row.
    pub components: Vec<f64>,
    /// Fraction of total variance per component, descending.
    pub explained_variance_ratio: Vec<f64>,
    /// Covariance eigenvalue per component.
    pub variances: Vec<f64>,
    /// `rows x k`
    pub projections: Vec<f64>,
    pub rows: usize,
    /// Column mean subtracted before projection.
    pub mean: Vec<f64>,
}

impl PCAResult {
    pub fn component(&self, c: usize) -> &[f64] {
        &self.components[c * self.dims..(c + 1) * self.dims]
    }

    /// Projection series of component `c`.
    pub fn series(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.projections[r * self.k + c]).collect()
    }

    /// Projects another record of the same width onto these components.
    pub fn project(&self, record: &ActivationRecord) -> Result<ActivationRecord> {
        if record.cols() != self.dims {
            return Err(Error::InvalidInput(format!(
                "record has {} columns, components have {}",
                record.cols(),
                self.dims
            )));
        }
        let mut out = Vec::with_capacity(record.rows() * self.k);
        let mut centered = vec![0.0; self.dims];
        for r in 0..record.rows() {
            for ((x, v), m) in centered.iter_mut().zip(record.row(r)).zip(&self.mean) {
                *x = v - m;
            }
            for c in 0..self.k {
                out.push(dot(&centered, self.component(c)));
            }
        }
        let mut rec = ActivationRecord::new(RecordKind::Projection, record.rows(), self.k, out)?;
        rec.alignment = record.alignment.clone();
        Ok(rec)
    }

    pub fn projection_record(&self) -> ActivationRecord {
        ActivationRecord::new(RecordKind::Projection, self.rows, self.k, self.projections.clone())
            .expect("projections are finite")
    }

    /// Largest deviation from orthonormality over all component pairs.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.k {
            for b in a..self.k {
                let d = dot(self.component(a), self.component(b));
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((d - target).abs());
            }
        }
        worst
    }

    /// `component,timestep,value`
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        use std::fmt::Write as _;
        let mut buf = String::from("component,timestep,value\n");
        for c in 0..self.k {
            for r in 0..self.rows {
                let _ = writeln!(buf, "{c},{r},{}", self.projections[r * self.k + c]);
            }
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }
}

/// Top-`k` principal components of `record`.
///
/// The covariance matrix is diagonalized with cyclic Jacobi rotations. Each
/// component's largest-magnitude entry is made positive.
pub fn pca(record: &ActivationRecord, k: usize) -> Result<PCAResult> {
    let (n, d) = (record.rows(), record.cols());
    if n < 2 {
        return Err(Error::InvalidInput(format!("PCA needs at least 2 rows, got {n}")));
    }
    if k == 0 || k > n.min(d) {
        return Err(Error::InvalidInput(format!(
            "k = {k} must be in 1..={} for a {n} x {d} record",
            n.min(d)
        )));
    }

    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(record.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for r in 0..n {
        for ((x, v), m) in centered.iter_mut().zip(record.row(r)).zip(&mean) {
            *x = v - m;
        }
        for i in 0..d {
            let xi = centered[i];
            if xi == 0.0 {
                continue;
            }
            let row = &mut cov[i * d..(i + 1) * d];
            for j in i..d {
                row[j] += xi * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }

    let (eigvals, eigvecs) = jacobi_eigen(cov, d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigvals[b].total_cmp(&eigvals[a]).then(a.cmp(&b)));

    let total: f64 = eigvals.iter().map(|v| v.max(0.0)).sum();
    let mut components = Vec::with_capacity(k * d);
    let mut variances = Vec::with_capacity(k);
    let mut ratios = Vec::with_capacity(k);
    for &c in order.iter().take(k) {
        let mut v: Vec<f64> = (0..d).map(|i| eigvecs[i * d + c]).collect();
        let pivot = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.extend(v);
        let var = eigvals[c].max(0.0);
        variances.push(var);
        ratios.push(if total > 0.0 { var / total } else { 0.0 });
    }

    let mut result = PCAResult {
        k,
        dims: d,
        components,
        explained_variance_ratio: ratios,
        variances,
        projections: Vec::new(),
        rows: n,
        mean,
    };
    let proj = result.project(record)?;
    result.projections = proj.into_data();
    debug_assert!(result.orthonormality_error() <= 1e-6);
    Ok(result)
}

/// Eigen-decomposition of a symmetric `d x d` matrix (row-major).
/// Returns the eigenvalues and a matrix whose columns are the eigenvectors.
pub(crate) fn jacobi_eigen(mut a: Vec<f64>, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return (vec![0.0; d], v);
    }
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * d + j] * a[i * d + j])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..d {
                    let arp = a[r * d + p];
                    let arq = a[r * d + q];
                    a[r * d + p] = c * arp - s * arq;
                    a[r * d + q] = s * arp + c * arq;
                }
                for r in 0..d {
                    let apr = a[p * d + r];
                    let aqr = a[q * d + r];
                    a[p * d + r] = c * apr - s * aqr;
                    a[q * d + r] = s * apr + c * aqr;
                }
                a[p * d + q] = 0.0;
                a[q * d + p] = 0.0;
                for r in 0..d {
                    let vrp = v[r * d + p];
                    let vrq = v[r * d + q];
                    v[r * d + p] = c * vrp - s * vrq;
                    v[r * d + q] = s * vrp + c * vrq;
                }
            }
        }
    }
    ((0..d).map(|i| a[i * d + i]).collect(), v)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
