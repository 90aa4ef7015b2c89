use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_slope, MicrolocalError};
use crate::defaults::MOLLIFY_SLOPE;

/// Sup errors below this are quadrature noise and are not fitted.
const ERROR_FLOOR: f64 = 1e-12;
const PROFILE_NODES: usize = 20_000;

/// The bump `ψ(θ) = C e^{1/(|θ|²−1)}` on the unit ball of `ℝ^N` and its scaling
/// `ψ_h(θ) = h^N ψ(hθ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    pub dim: usize,
    /// Normalization making `∫ψ = 1`.
    pub c: f64,
    pub h: f64,
}

fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (1.0 / (r2 - 1.0)).exp()
    } else {
        0.0
    }
}

/// `∫_{|θ|<1} e^{1/(|θ|²−1)} dθ`; the integrand is flat at the boundary.
fn unnormalized_mass(dim: usize) -> f64 {
    let dr = 1.0 / PROFILE_NODES as f64;
    match dim {
        1 => 2.0 * (1..PROFILE_NODES).map(|i| bump((i as f64 * dr).powi(2))).sum::<f64>() * dr + bump(0.0) * dr,
        // 2π ∫ r b(r²) dr = π ∫ b(u) du, by Simpson's rule
        _ => {
            let s: f64 = (0..=PROFILE_NODES)
                .map(|i| {
                    let w = if i == 0 || i == PROFILE_NODES { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    w * bump(i as f64 * dr)
                })
                .sum();
            PI * s * dr / 3.0
        }
    }
}

impl Mollifier {
    pub fn new(dim: usize, h: f64) -> Result<Self, MicrolocalError> {
        if !(1..=2).contains(&dim) {
            return Err(MicrolocalError::InvalidProblem(format!("mollifier dimension {dim} not in 1..=2")));
        }
        if !(h > 1.0) {
            return Err(MicrolocalError::ScaleTooSmall(h));
        }
        Ok(Mollifier { dim, c: 1.0 / unnormalized_mass(dim), h })
    }

    /// `ψ(θ)`
    pub fn profile(&self, theta: &[f64]) -> f64 {
        self.c * bump(theta.iter().map(|t| t * t).sum())
    }

    /// `ψ_h(θ)`
    pub fn scaled(&self, theta: &[f64]) -> f64 {
        let s: Vec<f64> = theta.iter().map(|t| t * self.h).collect();
        self.h.powi(self.dim as i32) * self.profile(&s)
    }
}

/// `n^N` samples of `[0, 2π)^N`, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid {
    pub dim: usize,
    pub n: usize,
}

impl PeriodicGrid {
    pub fn spacing(&self) -> f64 {
        TAU / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let dx = self.spacing();
        (0..self.dim).rev().map(|a| ((idx / self.n.pow(a as u32)) % self.n) as f64 * dx).collect()
    }

    pub fn sample(&self, f: &SmoothFn) -> Vec<f64> {
        (0..self.len()).map(|i| f.eval(&self.point(i))).collect()
    }
}

/// Smooth periodic test functions of `s = Σ xᵢ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothFn {
    Sin { freq: u32 },
    Cos { freq: u32 },
    Constant { value: f64 },
}

impl SmoothFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let s: f64 = x.iter().sum();
        match self {
            SmoothFn::Sin { freq } => (*freq as f64 * s).sin(),
            SmoothFn::Cos { freq } => (*freq as f64 * s).cos(),
            SmoothFn::Constant { value } => *value,
        }
    }
}

/// Periodic discrete convolution of `f` with `ψ_h`, the kernel weights
/// normalized to unit discrete mass.
pub fn mollify(f: &[f64], grid: &PeriodicGrid, h: f64) -> Result<Vec<f64>, MicrolocalError> {
    let m = Mollifier::new(grid.dim, h)?;
    let dx = grid.spacing();
    let limit = 1.0 / (10.0 * h);
    if dx > limit {
        return Err(MicrolocalError::GridTooCoarse { h, spacing: dx, limit });
    }
    if f.len() != grid.len() {
        return Err(MicrolocalError::InvalidProblem(format!("{} samples for a grid of {}", f.len(), grid.len())));
    }
    let r = (1.0 / (h * dx)).ceil() as i64;
    let offsets: Vec<i64> = (-r..=r).collect();
    let mut kernel: Vec<(Vec<i64>, f64)> = Vec::new();
    if grid.dim == 1 {
        for &j in &offsets {
            let w = m.scaled(&[j as f64 * dx]);
            if w > 0.0 {
                kernel.push((vec![j], w));
            }
        }
    } else {
        for &j in &offsets {
            for &k in &offsets {
                let w = m.scaled(&[j as f64 * dx, k as f64 * dx]);
                if w > 0.0 {
                    kernel.push((vec![j, k], w));
                }
            }
        }
    }
    let mass: f64 = kernel.iter().map(|(_, w)| w).sum();
    let n = grid.n as i64;
    let wrap = |i: i64| i.rem_euclid(n) as usize;
    Ok((0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i0, i1) = if grid.dim == 1 { (idx as i64, 0) } else { ((idx / grid.n) as i64, (idx % grid.n) as i64) };
            kernel
                .iter()
                .map(|(o, w)| {
                    let src = if grid.dim == 1 { wrap(i0 - o[0]) } else { wrap(i0 - o[0]) * grid.n + wrap(i1 - o[1]) };
                    w * f[src]
                })
                .sum::<f64>()
                / mass
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MollifyFit {
    /// `(h, sup |f_h − f|)`
    pub rows: Vec<(f64, f64)>,
    pub slope: Option<f64>,
    /// All errors are below the quadrature floor; no slope is fitted.
    pub at_floor: bool,
    pub passes: bool,
}

/// Fits `log sup |ψ_h * f − f|` against `log h` on a grid fine enough for the largest `h`.
pub fn mollification_error_order(f: &SmoothFn, dim: usize, hs: &[f64]) -> Result<MollifyFit, MicrolocalError> {
    if hs.len() < 2 {
        return Err(MicrolocalError::TooFewScales { need: 2, got: hs.len() });
    }
    let (hmin, hmax) = hs.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &h| (a.min(h), b.max(h)));
    if hmax < 10.0 * hmin * (1.0 - 1e-12) {
        return Err(MicrolocalError::InvalidProblem("h list must span at least one decade".into()));
    }
    let grid = PeriodicGrid { dim, n: (TAU * 10.0 * hmax).ceil() as usize };
    let samples = grid.sample(f);
    let rows: Vec<(f64, f64)> = hs
        .iter()
        .map(|&h| {
            let g = mollify(&samples, &grid, h)?;
            let err = g.iter().zip(&samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok((h, err))
        })
        .collect::<Result<_, MicrolocalError>>()?;
    let at_floor = rows.iter().all(|r| r.1 <= ERROR_FLOOR);
    let slope = (!at_floor).then(|| {
        let xs: Vec<f64> = rows.iter().map(|r| r.0.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.1.max(ERROR_FLOOR).ln()).collect();
        fit_slope(&xs, &ys)
    });
    let passes = slope.is_some_and(|s| (MOLLIFY_SLOPE.0..=MOLLIFY_SLOPE.1).contains(&s));
    Ok(MollifyFit { rows, slope, at_floor, passes })
}
