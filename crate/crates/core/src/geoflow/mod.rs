//! Geodesic flow on the unit cosphere bundle of model manifolds.
//!
//! Coordinates are chart coordinates `(x, ξ)` with `ξ` a covector. The flow is
//! Hamiltonian for `H = ½ g^{ab} ξ_a ξ_b` restricted to `H = ½`.

mod continuation;
mod frame;
mod integrator;
mod manifold;
mod orbits;
mod poincare;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use continuation::{
    connected_by_continuation, fixed_set_tangent_probe, probe_dimension, project_to_fixed_set, sasaki_distance,
    trace_family, FamilyPoint, Projection,
};
pub use frame::{chart_to_frame, frame_to_chart, SasakiFrame};
pub use integrator::{integrate_flow, integrate_monodromy, FlowJet, FlowOptions, FlowPath};
pub use manifold::{hamilton_rhs, Manifold, MetricJet, Profile};
pub use orbits::{find_closed_orbits, refine_closed_orbit, ClosedOrbit, SearchOptions};
pub use poincare::{det_i_minus_p, poincare_map, DetReport, PoincareBlocks};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid manifold: {0}")]
    InvalidManifold(String),
    #[error("point leaves the coordinate chart at x = {0:?}")]
    ChartExit(Vec<f64>),
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("negative integration time {0}")]
    NegativeTime(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("frame degenerate: |flow direction| = {0}")]
    DegenerateFrame(f64),
    #[error("Newton refinement did not converge (residual {0})")]
    NewtonDiverged(f64),
}

/// A point `(x, ξ)` of the cotangent bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, xi: Vec<f64>) -> Self {
        PhasePoint { x, xi }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub(crate) fn to_state(&self) -> Vec<f64> {
        let mut s = self.x.clone();
        s.extend_from_slice(&self.xi);
        s
    }

    pub(crate) fn from_state(s: &[f64], n: usize) -> Self {
        PhasePoint { x: s[..n].to_vec(), xi: s[n..2 * n].to_vec() }
    }

    pub(crate) fn xi_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.xi)
    }
}
