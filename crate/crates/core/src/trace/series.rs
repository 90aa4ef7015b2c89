use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::TraceError;
use crate::defaults::LENGTH_COALESCE_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Computed,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LEntry {
    pub tau: f64,
    pub weight: f64,
    pub provenance: Provenance,
}

/// `(τ, w(τ))` pairs with strictly increasing lengths, complete up to `l_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LSeries {
    pub entries: Vec<LEntry>,
    pub l_max: f64,
}

impl LSeries {
    /// Sorts by length and merges lengths equal within the coalescing tolerance.
    pub fn new(mut entries: Vec<LEntry>, l_max: f64) -> Self {
        entries.sort_by(|a, b| a.tau.total_cmp(&b.tau));
        let mut out: Vec<LEntry> = Vec::with_capacity(entries.len());
        for e in entries {
            match out.last_mut() {
                Some(last) if (e.tau - last.tau).abs() <= LENGTH_COALESCE_TOL * last.tau.max(1.0) => {
                    last.weight += e.weight;
                }
                _ => out.push(e),
            }
        }
        LSeries { entries: out, l_max }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weight_at(&self, tau: f64) -> Option<f64> {
        self.entries.iter().find(|e| (e.tau - tau).abs() <= LENGTH_COALESCE_TOL * tau.max(1.0)).map(|e| e.weight)
    }

    /// Smallest spacing between consecutive lengths, counting the first length from 0.
    pub fn min_gap(&self) -> Option<f64> {
        let mut prev = 0.0;
        let mut gap = f64::INFINITY;
        for e in &self.entries {
            gap = gap.min(e.tau - prev);
            prev = e.tau;
        }
        gap.is_finite().then_some(gap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LValue {
    pub s_re: f64,
    pub s_im: f64,
    pub partial_sum_re: f64,
    pub partial_sum_im: f64,
    /// `w_max e^{−Re(s) L_max} / (1 − e^{−Re(s) gap})`, absent unless `Re(s) > 0`.
    pub tail_bound: Option<f64>,
}

impl LValue {
    pub fn partial_sum(&self) -> Complex64 {
        Complex64::new(self.partial_sum_re, self.partial_sum_im)
    }
}

/// `Σ w(τ) e^{−sτ}` over the series.
///
/// The tail bound assumes lengths beyond `l_max` are spaced at least by the
/// smallest gap seen and carry weights at most the largest seen.
pub fn l_function_eval(series: &LSeries, s: Complex64) -> LValue {
    let sum: Complex64 = series.entries.iter().map(|e| e.weight * (-s * e.tau).exp()).sum();
    let tail_bound = if s.re > 0.0 {
        series.min_gap().map(|gap| {
            let w_max = series.entries.iter().map(|e| e.weight).fold(0.0, f64::max);
            w_max * (-s.re * series.l_max).exp() / (1.0 - (-s.re * gap).exp())
        })
    } else {
        warn!("Re(s) = {} ≤ 0: tail bound omitted", s.re);
        None
    };
    LValue { s_re: s.re, s_im: s.im, partial_sum_re: sum.re, partial_sum_im: sum.im, tail_bound }
}

/// Closed-form flat-torus series: at each lattice length `τ ≤ l_max` the weight
/// `#{v ∈ Λ : |v| = τ} · covol(Λ) / τ^{n−1}`. `basis` lists lattice vectors as rows.
pub fn oracle_flat_torus(basis: &[Vec<f64>], l_max: f64) -> Result<LSeries, TraceError> {
    let n = basis.len();
    if !(2..=3).contains(&n) || basis.iter().any(|r| r.len() != n) {
        return Err(TraceError::InvalidLattice(format!("expected a 2×2 or 3×3 basis, got {n} rows")));
    }
    let b = DMatrix::from_fn(n, n, |i, j| basis[j][i]);
    let covol = b.determinant().abs();
    if !(covol > 1e-12) {
        return Err(TraceError::InvalidLattice("singular basis".into()));
    }
    // |Bc| ≥ σ_min |c|, so |c|_∞ ≤ l_max / σ_min covers every vector in the ball
    let smin = b.clone().svd(false, false).singular_values.min();
    let r = (l_max / smin).ceil() as i64;
    let mut lengths: Vec<f64> = Vec::new();
    let range = -r..=r;
    let mut push = |c: &[i64]| {
        if c.iter().all(|&v| v == 0) {
            return;
        }
        let v: Vec<f64> = (0..n).map(|i| (0..n).map(|j| b[(i, j)] * c[j] as f64).sum()).collect();
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len <= l_max * (1.0 + 1e-12) {
            lengths.push(len);
        }
    };
    for c0 in range.clone() {
        for c1 in range.clone() {
            if n == 2 {
                push(&[c0, c1]);
            } else {
                for c2 in range.clone() {
                    push(&[c0, c1, c2]);
                }
            }
        }
    }
    lengths.sort_by(f64::total_cmp);
    let mut entries: Vec<LEntry> = Vec::new();
    let mut i = 0;
    while i < lengths.len() {
        let tau = lengths[i];
        let mut j = i;
        while j < lengths.len() && (lengths[j] - tau).abs() <= LENGTH_COALESCE_TOL * tau.max(1.0) {
            j += 1;
        }
        let count = (j - i) as f64;
        entries.push(LEntry { tau, weight: count * covol / tau.powi(n as i32 - 1), provenance: Provenance::Oracle });
        i = j;
    }
    Ok(LSeries { entries, l_max })
}
