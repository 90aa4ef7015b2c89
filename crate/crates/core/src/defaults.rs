//! Numeric defaults shared by the library and the command line.
//!
//! | constant | value | used by |
//! |---|---|---|
//! | [`ELEMENT_CAP`] | 20000 | group closure, subgroup search |
//! | [`EXHAUSTIVE_SEARCH_ORDER`] | 400 | full subgroup lattice in `gassmann_search` |
//! | [`INTERTWINER_TOL`] | 1e-10 | unitarity / equivariance / constancy gates |
//! | [`INTERTWINER_RETRIES`] | 8 | seeds tried before giving up on a singular average |
//! | [`INTERTWINING_TOL`] | 1e-9 | `‖Ũ V₁ − V₂ Ũ‖_max` |
//! | [`TRACE_CONJUGATION_TOL`] | 1e-8 | trace of `Ũ V₁ᵗ Ũ*` against the integer count |
//! | [`T_MAX`] | 50 | discrete trace table length |
//! | [`DYNAMICS_SEEDS`] | 100 | seeded equivariant dynamics per sweep |
//! | [`RK_ATOL`], [`RK_RTOL`] | 1e-11 | Dormand–Prince error control |
//! | [`UNIT_ENERGY_TOL`] | 1e-12 | unit-covector renormalization check |
//! | [`CLOSURE_TOL`] | 1e-8 | closed-orbit and sub-period closure |
//! | [`MIN_PERIOD`] | 1e-2 | smallest period tested for prime-period detection |
//! | [`ORBIT_MERGE_TOL`] | 1e-6 | orbits coinciding after a time shift |
//! | [`SVD_RANK_TOL`] | 1e-6 | rank of `I − dGᵗ` |
//! | [`SPECTRAL_GAP`] | 100 | retained / discarded singular value ratio |
//! | [`CONTINUATION_STEP`] | 1e-2 | phase-space continuation step |
//! | [`LENGTH_COALESCE_TOL`] | 1e-8 | merging equal lengths in an L-series |
//! | [`MC_REL_STDERR`] | 1e-2 | Monte Carlo target for general component volumes |
//! | [`STATPHASE_SLOPE_MAX`] | -0.8 | stationary-phase residual decay |
//! | [`MOLLIFY_SLOPE`] | [-2.3, -1.7] | mollification error rate window |
//! | [`QUADRATURE_REFINE_TOL`] | 1e-8 | grid-doubling check for oscillatory integrals |

pub const ELEMENT_CAP: usize = 20_000;
pub const EXHAUSTIVE_SEARCH_ORDER: usize = 400;
pub const INTERTWINER_TOL: f64 = 1e-10;
pub const INTERTWINER_RETRIES: usize = 8;
pub const INTERTWINING_TOL: f64 = 1e-9;
pub const TRACE_CONJUGATION_TOL: f64 = 1e-8;
pub const T_MAX: usize = 50;
pub const DYNAMICS_SEEDS: usize = 100;

pub const RK_ATOL: f64 = 1e-11;
pub const RK_RTOL: f64 = 1e-11;
pub const UNIT_ENERGY_TOL: f64 = 1e-12;
pub const CLOSURE_TOL: f64 = 1e-8;
pub const MIN_PERIOD: f64 = 1e-2;
pub const ORBIT_MERGE_TOL: f64 = 1e-6;

pub const SVD_RANK_TOL: f64 = 1e-6;
pub const SPECTRAL_GAP: f64 = 100.0;
pub const CONTINUATION_STEP: f64 = 1e-2;
pub const LENGTH_COALESCE_TOL: f64 = 1e-8;
pub const MC_REL_STDERR: f64 = 1e-2;

pub const STATPHASE_SLOPE_MAX: f64 = -0.8;
pub const MOLLIFY_SLOPE: (f64, f64) = (-2.3, -1.7);
pub const QUADRATURE_REFINE_TOL: f64 = 1e-8;
