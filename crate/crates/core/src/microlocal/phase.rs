use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::MicrolocalError;

/// Builtin phases with analytic derivatives.
///
/// * `cos_x`: `cos x` on `[0, 2π)`, N = 1.
/// * `cos_y`: `cos y` on `[0, 2π)²`, critical circles `y = 0, π`.
/// * `quadratic`: `x²/2` on `[−8, 8)`, for use with a Gaussian amplitude.
/// * `constant`: `φ ≡ value` on `[0, 2π)^N`.
/// * `torus_linearized`: `−τ θ ω` on `[−8, 8)²`, the linearized pairing
///   `θ · (ζ − G^τ ζ)` of a flat-torus flow normal to a fixed component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    CosX,
    CosY,
    Quadratic,
    Constant { value: f64 },
    TorusLinearized { tau: f64 },
}

impl Phase {
    fn allowed_dims(&self) -> &'static [usize] {
        match self {
            Phase::CosX | Phase::Quadratic => &[1],
            Phase::CosY | Phase::TorusLinearized { .. } => &[2],
            Phase::Constant { .. } => &[1, 2],
        }
    }

    pub fn box_start(&self) -> f64 {
        match self {
            Phase::Quadratic | Phase::TorusLinearized { .. } => -8.0,
            _ => 0.0,
        }
    }

    pub fn box_length(&self) -> f64 {
        match self {
            Phase::Quadratic | Phase::TorusLinearized { .. } => 16.0,
            _ => TAU,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Phase::CosX => x[0].cos(),
            Phase::CosY => x[1].cos(),
            Phase::Quadratic => 0.5 * x[0] * x[0],
            Phase::Constant { value } => *value,
            Phase::TorusLinearized { tau } => -tau * x[0] * x[1],
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Phase::CosX => vec![-x[0].sin()],
            Phase::CosY => vec![0.0, -x[1].sin()],
            Phase::Quadratic => vec![x[0]],
            Phase::Constant { .. } => vec![0.0; x.len()],
            Phase::TorusLinearized { tau } => vec![-tau * x[1], -tau * x[0]],
        }
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            Phase::CosX => DMatrix::from_element(1, 1, -x[0].cos()),
            Phase::CosY => DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -x[1].cos()]),
            Phase::Quadratic => DMatrix::from_element(1, 1, 1.0),
            Phase::Constant { .. } => DMatrix::zeros(x.len(), x.len()),
            Phase::TorusLinearized { tau } => DMatrix::from_row_slice(2, 2, &[0.0, -tau, -tau, 0.0]),
        }
    }

    /// Declared critical components.
    pub fn critical_set(&self, dim: usize) -> Vec<CriticalComponent> {
        let point = |p: Vec<f64>, signature, value| CriticalComponent {
            dim: 0,
            signature,
            value,
            param: Parametrization::Point(p),
        };
        let circle = |y: f64, signature, value| CriticalComponent {
            dim: 1,
            signature,
            value,
            param: Parametrization::Line { base: vec![0.0, y], direction: vec![1.0, 0.0], length: TAU },
        };
        match self {
            Phase::CosX => vec![point(vec![0.0], -1, 1.0), point(vec![PI], 1, -1.0)],
            Phase::CosY => vec![circle(0.0, -1, 1.0), circle(PI, 1, -1.0)],
            Phase::Quadratic => vec![point(vec![0.0], 1, 0.0)],
            Phase::Constant { value } => {
                vec![CriticalComponent { dim, signature: 0, value: *value, param: Parametrization::Whole }]
            }
            Phase::TorusLinearized { .. } => vec![point(vec![0.0, 0.0], 0, 0.0)],
        }
    }
}

/// Builtin amplitudes. `trig` is `constant + Σ_k cos[k−1] cos(k s) + sin[k−1] sin(k s)`
/// with `s` the sum of the coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Amplitude {
    One,
    Zero,
    /// `e^{−|x|²/2}`
    Gaussian,
    Trig {
        constant: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

impl Amplitude {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Amplitude::One => 1.0,
            Amplitude::Zero => 0.0,
            Amplitude::Gaussian => (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp(),
            Amplitude::Trig { constant, cos, sin } => {
                let s: f64 = x.iter().sum();
                let c: f64 = cos.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * s).cos()).sum();
                let d: f64 = sin.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * s).sin()).sum();
                constant + c + d
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Parametrization {
    Point(Vec<f64>),
    /// `s ↦ base + s·direction`, `s ∈ [0, length)`, closed in the periodic box.
    Line { base: Vec<f64>, direction: Vec<f64>, length: f64 },
    /// The whole box (the phase is constant).
    Whole,
}

/// A connected critical manifold `Z` of the phase.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalComponent {
    /// `k(Z)`
    pub dim: usize,
    /// Signature of the transverse Hessian.
    pub signature: i32,
    /// `φ(Z)`
    pub value: f64,
    pub param: Parametrization,
}

const LINE_NODES: usize = 256;
const BOX_NODES: usize = 256;

impl CriticalComponent {
    fn samples(&self) -> Vec<Vec<f64>> {
        match &self.param {
            Parametrization::Point(p) => vec![p.clone()],
            Parametrization::Line { base, direction, length } => (0..16)
                .map(|i| {
                    let s = length * i as f64 / 16.0;
                    base.iter().zip(direction).map(|(b, d)| b + s * d).collect()
                })
                .collect(),
            Parametrization::Whole => Vec::new(),
        }
    }

    /// Transverse Hessian at a point of `Z`.
    fn transverse_hessian(&self, phase: &Phase, x: &[f64]) -> DMatrix<f64> {
        let hess = phase.hessian(x);
        match &self.param {
            Parametrization::Point(_) => hess,
            Parametrization::Line { direction, .. } => {
                // orthonormal complement of the line direction (N = 2)
                let d = DVector::from_column_slice(direction).normalize();
                let nrm = DVector::from_vec(vec![-d[1], d[0]]);
                DMatrix::from_element(1, 1, nrm.dot(&(&hess * &nrm)))
            }
            Parametrization::Whole => DMatrix::zeros(0, 0),
        }
    }

    /// `det Hess^⊥ φ` at the first sample, after checking nondegeneracy on all samples.
    pub fn transverse_hessian_det(&self, phase: &Phase) -> Result<f64, MicrolocalError> {
        let samples = self.samples();
        if samples.is_empty() {
            return Ok(1.0);
        }
        for x in &samples {
            let h = self.transverse_hessian(phase, x);
            let min = h.symmetric_eigenvalues().iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
            if min < 1e-6 {
                return Err(MicrolocalError::DegenerateHessian(min));
            }
        }
        Ok(self.transverse_hessian(phase, &samples[0]).determinant())
    }

    /// `∫_Z a dμ_Z / |det Hess^⊥ φ|^{1/2}` times `|det Hess^⊥ φ(Z₀)|^{1/2}`, i.e.
    /// the amplitude integral weighted relative to the first sample's determinant.
    pub(crate) fn integrate(&self, amplitude: &Amplitude, dim: usize, phase: &Phase) -> f64 {
        match &self.param {
            Parametrization::Point(p) => amplitude.eval(p),
            Parametrization::Line { base, direction, length } => {
                let ref_det = self.transverse_hessian(phase, base).determinant().abs().sqrt();
                let ds = length / LINE_NODES as f64;
                (0..LINE_NODES)
                    .map(|i| {
                        let x: Vec<f64> = base.iter().zip(direction).map(|(b, d)| b + ds * i as f64 * d).collect();
                        let det = self.transverse_hessian(phase, &x).determinant().abs().sqrt();
                        amplitude.eval(&x) * ref_det / det
                    })
                    .sum::<f64>()
                    * ds
            }
            Parametrization::Whole => {
                let (lo, len) = (phase.box_start(), phase.box_length());
                let dx = len / BOX_NODES as f64;
                let at = |i: usize| lo + dx * i as f64;
                if dim == 1 {
                    (0..BOX_NODES).map(|i| amplitude.eval(&[at(i)])).sum::<f64>() * dx
                } else {
                    (0..BOX_NODES)
                        .map(|i| (0..BOX_NODES).map(|j| amplitude.eval(&[at(i), at(j)])).sum::<f64>())
                        .sum::<f64>()
                        * dx
                        * dx
                }
            }
        }
    }

    fn max_gradient(&self, phase: &Phase) -> f64 {
        self.samples()
            .iter()
            .flat_map(|x| phase.gradient(x))
            .map(f64::abs)
            .fold(0.0, f64::max)
    }
}

/// Phase, amplitude and dimension of one oscillatory integral.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProblem {
    pub phase: Phase,
    pub amplitude: Amplitude,
    pub dim: usize,
}

impl PhaseProblem {
    /// Checks the dimension and that the declared critical set is critical and
    /// transversally nondegenerate.
    pub fn new(phase: Phase, amplitude: Amplitude, dim: usize) -> Result<Self, MicrolocalError> {
        if !phase.allowed_dims().contains(&dim) {
            return Err(MicrolocalError::InvalidProblem(format!("phase {phase:?} is not defined in dimension {dim}")));
        }
        for c in phase.critical_set(dim) {
            let g = c.max_gradient(&phase);
            if g > 1e-10 {
                return Err(MicrolocalError::InvalidProblem(format!("gradient {g:e} on a declared critical component")));
            }
            c.transverse_hessian_det(&phase)?;
        }
        Ok(PhaseProblem { phase, amplitude, dim })
    }

    pub fn critical_set(&self) -> Vec<CriticalComponent> {
        self.phase.critical_set(self.dim)
    }
}
