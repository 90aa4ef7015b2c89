//! Flat-trace weights of the geodesic flow: clean fixed components of `G^τ`,
//! their transverse determinants and canonical volumes, and the L-series
//! `Σ w(τ) e^{−sτ}`.
//!
//! Volumes are unnormalized Sasaki volumes (base volume × unit-fiber volume).
//! The weight denominator of a component is the product of the nonzero singular
//! values of `I − dG^τ` in the orthonormal Sasaki frame.

mod series;
mod volume;

use log::info;
use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::defaults::{LENGTH_COALESCE_TOL, SPECTRAL_GAP, SVD_RANK_TOL};
use crate::geoflow::{
    connected_by_continuation, find_closed_orbits, fixed_set_tangent_probe, probe_dimension, ClosedOrbit, FlowOptions,
    GeoError, Manifold, SearchOptions,
};

pub use series::{l_function_eval, oracle_flat_torus, LEntry, LSeries, LValue, Provenance};
pub use volume::{canonical_volume, component_weight, ComponentWeight, VolumeEstimate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("fixed component at τ = {tau} is not clean: {reason}")]
    NonClean { tau: f64, reason: String },
    #[error("no canonical volume rule for a component of dimension {k} on this manifold")]
    Unsupported { k: usize },
    #[error("Monte Carlo relative standard error {achieved} above target {target} after {samples} samples")]
    MonteCarlo { achieved: f64, target: f64, samples: usize },
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
}

/// Singular-value diagnostics of `I − dG^τ` at one sample orbit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    /// Descending singular values of `I − monodromy`.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// Smallest retained over largest discarded singular value exceeds [`SPECTRAL_GAP`].
    pub gap_ok: bool,
}

pub fn rank_report(monodromy: &DMatrix<f64>) -> RankReport {
    let d = monodromy.nrows();
    let mut sv: Vec<f64> =
        (DMatrix::identity(d, d) - monodromy).svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let rank = sv.iter().filter(|&&s| s > SVD_RANK_TOL).count();
    let gap_ok = rank == 0 || rank == d || sv[rank - 1] >= SPECTRAL_GAP * sv[rank];
    RankReport { singular_values: sv, rank, gap_ok }
}

/// A connected component `Z` of `Fix(G^τ)` with the orbits found on it.
#[derive(Debug, Clone)]
pub struct FixedComponent {
    pub period: f64,
    /// `k = 2n − 1 − rank(I − dG^τ)`.
    pub dimension: usize,
    /// Dimension estimated by continuation probes.
    pub continuation_dimension: usize,
    pub samples: Vec<ClosedOrbit>,
    pub rank: RankReport,
    pub clean: bool,
    /// Why the component is not clean, if it is not.
    pub defect: Option<String>,
}

impl FixedComponent {
    pub fn representative(&self) -> &ClosedOrbit {
        &self.samples[0]
    }
}

/// Product of the retained singular values of `I − dG^τ` (1 for an empty normal space).
pub fn transverse_determinant(component: &FixedComponent) -> Result<f64, TraceError> {
    if !component.clean {
        return Err(TraceError::NonClean {
            tau: component.period,
            reason: component.defect.clone().unwrap_or_default(),
        });
    }
    Ok(component.rank.singular_values[..component.rank.rank].iter().product())
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut j = i;
    while parent[j] != r {
        let next = parent[j];
        parent[j] = r;
        j = next;
    }
    r
}

/// Clusters orbits of length `tau` into connected components of `Fix(G^τ)` and
/// checks that each is clean.
pub fn classify_fixed_set(
    manifold: &Manifold,
    tau: f64,
    orbits: &[ClosedOrbit],
    flow: &FlowOptions,
) -> Result<Vec<FixedComponent>, TraceError> {
    let at_tau: Vec<&ClosedOrbit> =
        orbits.iter().filter(|o| (o.length - tau).abs() <= LENGTH_COALESCE_TOL * tau.max(1.0)).collect();
    let mut parent: Vec<usize> = (0..at_tau.len()).collect();
    for i in 0..at_tau.len() {
        for j in 0..i {
            if find(&mut parent, i) != find(&mut parent, j)
                && connected_by_continuation(manifold, &at_tau[j].start, &at_tau[i].start, tau, flow)
            {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: Vec<Vec<ClosedOrbit>> = Vec::new();
    let mut root_of: Vec<usize> = Vec::new();
    for (i, o) in at_tau.iter().enumerate() {
        let r = find(&mut parent, i);
        match root_of.iter().position(|&x| x == r) {
            Some(g) => groups[g].push((*o).clone()),
            None => {
                root_of.push(r);
                groups.push(vec![(*o).clone()]);
            }
        }
    }
    let d = 2 * manifold.dim() - 1;
    groups
        .into_iter()
        .map(|samples| {
            let reports: Vec<RankReport> = samples.iter().map(|o| rank_report(&o.monodromy)).collect();
            let rank = reports[0].clone();
            let dimension = d - rank.rank;
            let probe = fixed_set_tangent_probe(manifold, &samples[0].start, tau, flow)?;
            let continuation_dimension = probe_dimension(&probe);
            let defect = if reports.iter().any(|r| r.rank != rank.rank) {
                Some("sample orbits disagree on rank(I − dG^τ)".to_string())
            } else if reports.iter().any(|r| !r.gap_ok) {
                Some(format!("no spectral gap in singular values {:?}", rank.singular_values))
            } else if continuation_dimension != dimension {
                Some(format!("continuation dimension {continuation_dimension} differs from kernel dimension {dimension}"))
            } else {
                None
            };
            if let Some(reason) = &defect {
                info!("component at τ = {tau}: {reason}");
            }
            Ok(FixedComponent {
                period: tau,
                dimension,
                continuation_dimension,
                samples,
                rank,
                clean: defect.is_none(),
                defect,
            })
        })
        .collect()
}

/// Options for [`flat_trace_weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceOptions {
    pub search: SearchOptions,
    /// Target relative standard error for Monte Carlo volumes.
    pub mc_rel_stderr: f64,
    pub mc_batch: usize,
    pub mc_max_samples: usize,
    /// Continuation steps allowed when tracing a two-dimensional family.
    pub family_max_steps: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            search: SearchOptions::default(),
            mc_rel_stderr: crate::defaults::MC_REL_STDERR,
            mc_batch: 64,
            mc_max_samples: 8192,
            family_max_steps: 5000,
        }
    }
}

/// The L-series together with the components behind each entry.
#[derive(Debug, Clone)]
pub struct ZetaReport {
    pub series: LSeries,
    pub components: Vec<(FixedComponent, ComponentWeight)>,
}

/// Searches closed orbits up to `l_max`, classifies `Fix(G^τ)` at every length
/// and sums component weights `∫_Z dVol_can / |det(I − P_Z^#)|`.
pub fn flat_trace_weights(manifold: &Manifold, l_max: f64, opts: &TraceOptions) -> Result<ZetaReport, TraceError> {
    let orbits = find_closed_orbits(manifold, l_max, &opts.search)?;
    let mut lengths: Vec<f64> = Vec::new();
    for o in &orbits {
        if lengths.last().is_none_or(|&l| (o.length - l).abs() > LENGTH_COALESCE_TOL * l.max(1.0)) {
            lengths.push(o.length);
        }
    }
    let mut components = Vec::new();
    let mut entries = Vec::new();
    for tau in lengths {
        let comps = classify_fixed_set(manifold, tau, &orbits, &opts.search.flow)?;
        if let Some(bad) = comps.iter().find(|c| !c.clean) {
            return Err(TraceError::NonClean { tau, reason: bad.defect.clone().unwrap_or_default() });
        }
        let mut total = 0.0;
        for c in comps {
            let w = component_weight(manifold, &c, opts)?;
            total += w.weight;
            components.push((c, w));
        }
        entries.push(LEntry { tau, weight: total, provenance: Provenance::Computed });
    }
    Ok(ZetaReport { series: LSeries::new(entries, l_max), components })
}
