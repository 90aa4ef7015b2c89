//! Finite cover diagrams `X̃ → Hᵢ\X̃` with a free left `G`-action, the lifted
//! Radon matrix `Ũ_A`, equivariant dynamics and discrete flat traces.
//!
//! Points of `X̃` are pairs `(g, f)` with `g ∈ G` and `f` in a fiber of size
//! `F` (`F = 1` for the regular model), stored as `g * F + f`. The group acts
//! by `a · (g, f) = (a g, f)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defaults::{INTERTWINING_TOL, TRACE_CONJUGATION_TOL};
use crate::group::{is_gassmann, FiniteGroup, GroupError, IntertwinerKernel, Subgroup};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("group action on the total space is not free")]
    NotFree,
    #[error("kernel was built for different subgroups than the diagram")]
    KernelMismatch,
    #[error("dynamics does not descend to level {0}")]
    NotDescending(u8),
    #[error("permutation has length {got}, expected {expected}")]
    BadPermutation { got: usize, expected: usize },
    #[error("level must be 1 or 2, got {0}")]
    BadLevel(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverModel {
    /// `X̃ = G`.
    Regular,
    /// `X̃ = G × F` with `|F| = fiber`.
    Product { fiber: usize },
}

impl CoverModel {
    fn fiber(self) -> usize {
        match self {
            CoverModel::Regular => 1,
            CoverModel::Product { fiber } => fiber,
        }
    }
}

/// The orbit space `H\X̃`.
#[derive(Debug, Clone)]
pub struct Quotient {
    orbit_of: Vec<usize>,
    reps: Vec<usize>,
}

impl Quotient {
    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    /// `π(x)`
    pub fn project(&self, x: usize) -> usize {
        self.orbit_of[x]
    }

    /// Smallest point of each orbit.
    pub fn representatives(&self) -> &[usize] {
        &self.reps
    }
}

#[derive(Debug, Clone)]
pub struct CoverDiagram {
    group: Arc<FiniteGroup>,
    h1: Subgroup,
    h2: Subgroup,
    model: CoverModel,
    q1: Quotient,
    q2: Quotient,
}

pub fn build_cover(h1: &Subgroup, h2: &Subgroup, model: CoverModel) -> Result<CoverDiagram, CoverError> {
    if !h1.same_parent(h2) {
        return Err(GroupError::ParentMismatch.into());
    }
    if model.fiber() == 0 {
        return Err(CoverError::BadPermutation { got: 0, expected: 1 });
    }
    let group = h1.parent().clone();
    let mut d = CoverDiagram {
        q1: Quotient { orbit_of: Vec::new(), reps: Vec::new() },
        q2: Quotient { orbit_of: Vec::new(), reps: Vec::new() },
        group,
        h1: h1.clone(),
        h2: h2.clone(),
        model,
    };
    if !d.is_free() {
        return Err(CoverError::NotFree);
    }
    d.q1 = d.quotient_by(h1);
    d.q2 = d.quotient_by(h2);
    Ok(d)
}

impl CoverDiagram {
    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.group
    }

    pub fn h1(&self) -> &Subgroup {
        &self.h1
    }

    pub fn h2(&self) -> &Subgroup {
        &self.h2
    }

    pub fn model(&self) -> CoverModel {
        self.model
    }

    pub fn fiber(&self) -> usize {
        self.model.fiber()
    }

    /// `|X̃|`
    pub fn total_len(&self) -> usize {
        self.group.order() * self.fiber()
    }

    pub fn quotient(&self, level: u8) -> Result<&Quotient, CoverError> {
        match level {
            1 => Ok(&self.q1),
            2 => Ok(&self.q2),
            other => Err(CoverError::BadLevel(other)),
        }
    }

    fn subgroup(&self, level: u8) -> &Subgroup {
        if level == 1 {
            &self.h1
        } else {
            &self.h2
        }
    }

    /// `a · x`
    #[inline]
    pub fn act(&self, a: usize, x: usize) -> usize {
        let f = self.fiber();
        self.group.mul(a, x / f) * f + x % f
    }

    fn is_free(&self) -> bool {
        let id = self.group.identity();
        (0..self.group.order())
            .filter(|&a| a != id)
            .all(|a| (0..self.total_len()).all(|x| self.act(a, x) != x))
    }

    fn quotient_by(&self, h: &Subgroup) -> Quotient {
        let n = self.total_len();
        let mut orbit_of = vec![usize::MAX; n];
        let mut reps = Vec::new();
        for x in 0..n {
            if orbit_of[x] != usize::MAX {
                continue;
            }
            let k = reps.len();
            reps.push(x);
            for &m in h.members() {
                orbit_of[self.act(m, x)] = k;
            }
        }
        Quotient { orbit_of, reps }
    }
}

/// The matrix `Ũ_A : L²(X₁) → L²(X₂)` on counting measure.
#[derive(Debug, Clone)]
pub struct RadonMatrix {
    matrix: DMatrix<Complex64>,
}

impl RadonMatrix {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// `max(‖ŨŨ* − I‖_max, ‖Ũ*Ũ − I‖_max)`
    pub fn unitarity_residual(&self) -> f64 {
        let u = &self.matrix;
        let a = u * u.adjoint();
        let b = u.adjoint() * u;
        let dev = |m: &DMatrix<Complex64>| {
            let mut worst: f64 = 0.0;
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((m[(i, j)] - target).norm());
                }
            }
            worst
        };
        dev(&a).max(dev(&b))
    }
}

/// Sum over `a ∈ G` of `A(a)` times the operator `1_O ↦ π₂₊(1_{a·π₁⁻¹O})`.
///
/// The kernel is taken in group-algebra normalization `A(a)/|H₂|` and the sum
/// carries the prefactor `1/|H₁|`, which makes `Ũ_A` unitary on counting measure
/// whenever the induced coset matrix is.
pub fn lift_radon(kernel: &IntertwinerKernel, diagram: &CoverDiagram) -> Result<RadonMatrix, CoverError> {
    if kernel.h1() != diagram.h1() || kernel.h2() != diagram.h2() {
        return Err(CoverError::KernelMismatch);
    }
    let g = &diagram.group;
    let scale = 1.0 / (diagram.h1.order() * diagram.h2.order()) as f64;
    let mut m = DMatrix::<Complex64>::zeros(diagram.q2.len(), diagram.q1.len());
    for a in 0..g.order() {
        let w = kernel.value_at(a) * scale;
        if w == Complex64::new(0.0, 0.0) {
            continue;
        }
        for x in 0..diagram.total_len() {
            let o1 = diagram.q1.project(x);
            let o2 = diagram.q2.project(diagram.act(a, x));
            m[(o2, o1)] += w;
        }
    }
    Ok(RadonMatrix { matrix: m })
}

/// A permutation `T̃` of `X̃` together with the permutations it induces on the quotients.
#[derive(Debug, Clone)]
pub struct EquivariantDynamics {
    total: Vec<usize>,
    t1: Vec<usize>,
    t2: Vec<usize>,
}

impl EquivariantDynamics {
    /// `T̃(g, f) = (g b, σ(f))`, which commutes with the left action.
    pub fn right_translation(diagram: &CoverDiagram, b: usize, fiber_perm: &[usize]) -> Result<Self, CoverError> {
        let fsz = diagram.fiber();
        if fiber_perm.len() != fsz {
            return Err(CoverError::BadPermutation { got: fiber_perm.len(), expected: fsz });
        }
        let g = &diagram.group;
        let total = (0..diagram.total_len())
            .map(|x| g.mul(x / fsz, b) * fsz + fiber_perm[x % fsz])
            .collect();
        Self::from_permutation(diagram, total)
    }

    /// Any permutation of `X̃` that maps `Hᵢ`-orbits to `Hᵢ`-orbits for both levels.
    pub fn from_permutation(diagram: &CoverDiagram, total: Vec<usize>) -> Result<Self, CoverError> {
        let n = diagram.total_len();
        let mut seen = vec![false; n];
        if total.len() != n || total.iter().any(|&y| y >= n || std::mem::replace(&mut seen[y], true)) {
            return Err(CoverError::BadPermutation { got: total.len(), expected: n });
        }
        let descend = |q: &Quotient, level: u8| -> Result<Vec<usize>, CoverError> {
            let t: Vec<usize> = q.reps.iter().map(|&r| q.project(total[r])).collect();
            if (0..n).all(|x| q.project(total[x]) == t[q.project(x)]) {
                Ok(t)
            } else {
                Err(CoverError::NotDescending(level))
            }
        };
        let t1 = descend(&diagram.q1, 1)?;
        let t2 = descend(&diagram.q2, 2)?;
        Ok(EquivariantDynamics { total, t1, t2 })
    }

    pub fn total(&self) -> &[usize] {
        &self.total
    }

    pub fn level(&self, level: u8) -> Result<&[usize], CoverError> {
        match level {
            1 => Ok(&self.t1),
            2 => Ok(&self.t2),
            other => Err(CoverError::BadLevel(other)),
        }
    }

    /// Whether `T̃` commutes with every generator of the group action.
    pub fn is_equivariant(&self, diagram: &CoverDiagram) -> bool {
        diagram.group.generators().iter().all(|&s| {
            (0..self.total.len()).all(|x| self.total[diagram.act(s, x)] == diagram.act(s, self.total[x]))
        })
    }
}

/// Right translation by a seeded random group element, composed with a seeded
/// shuffle of the fiber.
pub fn random_equivariant_dynamics(diagram: &CoverDiagram, seed: u64) -> EquivariantDynamics {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = rng.random_range(0..diagram.group.order());
    let mut sigma: Vec<usize> = (0..diagram.fiber()).collect();
    sigma.shuffle(&mut rng);
    EquivariantDynamics::right_translation(diagram, b, &sigma).expect("right translations descend")
}

/// 0/1 matrix of `f ↦ f ∘ T`: `V[x, y] = 1` iff `y = T(x)`.
pub fn koopman_matrix(perm: &[usize]) -> DMatrix<f64> {
    let mut v = DMatrix::zeros(perm.len(), perm.len());
    for (x, &y) in perm.iter().enumerate() {
        v[(x, y)] = 1.0;
    }
    v
}

/// `‖Ũ V₁ − V₂ Ũ‖_max` with `Vᵢ` the Koopman matrices of the quotient dynamics.
pub fn verify_intertwining(radon: &RadonMatrix, dynamics: &EquivariantDynamics) -> f64 {
    let u = &radon.matrix;
    // (Ũ V₁)[o, y] = Ũ[o, T₁⁻¹ y],  (V₂ Ũ)[o, y] = Ũ[T₂ o, y]
    let mut inv1 = vec![0usize; dynamics.t1.len()];
    for (x, &y) in dynamics.t1.iter().enumerate() {
        inv1[y] = x;
    }
    let mut worst: f64 = 0.0;
    for o in 0..u.nrows() {
        for y in 0..u.ncols() {
            worst = worst.max((u[(o, inv1[y])] - u[(dynamics.t2[o], y)]).norm());
        }
    }
    worst
}

/// Number of fixed points of `T_levelᵗ`.
pub fn flat_trace_discrete(dynamics: &EquivariantDynamics, level: u8, t: usize) -> Result<usize, CoverError> {
    let perm = dynamics.level(level)?;
    Ok(cycle_lengths(perm).into_iter().filter(|&l| t.is_multiple_of(l)).sum())
}

/// `(1/|Hᵢ|) #{x ∈ X̃ : T̃ᵗ x ∈ Hᵢ x}`, counted on the total space.
pub fn orbit_count_trace(
    diagram: &CoverDiagram,
    dynamics: &EquivariantDynamics,
    level: u8,
    t: usize,
) -> Result<usize, CoverError> {
    let h = diagram.subgroup(level);
    diagram.quotient(level)?;
    let mut power: Vec<usize> = (0..diagram.total_len()).collect();
    for _ in 0..t {
        power = power.iter().map(|&x| dynamics.total[x]).collect();
    }
    let count = (0..diagram.total_len())
        .filter(|&x| h.members().iter().any(|&m| diagram.act(m, x) == power[x]))
        .count();
    debug_assert_eq!(count % h.order(), 0);
    Ok(count / h.order())
}

fn cycle_lengths(perm: &[usize]) -> Vec<usize> {
    let mut seen = vec![false; perm.len()];
    let mut out = Vec::new();
    for s in 0..perm.len() {
        if seen[s] {
            continue;
        }
        let mut len = 0;
        let mut x = s;
        while !seen[x] {
            seen[x] = true;
            x = perm[x];
            len += 1;
        }
        out.push(len);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub t: usize,
    pub trace_level1: usize,
    pub trace_level2: usize,
    pub equal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceVerdict {
    Pass,
    Fail,
    /// The subgroups are not Gassmann, so equality is not expected.
    Warning,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceReport {
    pub rows: Vec<TraceRow>,
    pub gassmann: bool,
    /// `max_t |Tr(Ũ V₁ᵗ Ũ*) − trace_level2(t)|`, when a Radon matrix was supplied.
    pub conjugation_residual: Option<f64>,
    pub verdict: TraceVerdict,
}

/// Trace table for `t = 1..=t_max`. For Gassmann pairs with a Radon matrix the
/// level-2 counts are also compared against `Tr(Ũ V₁ᵗ Ũ*)`.
pub fn verify_trace_equality(
    diagram: &CoverDiagram,
    dynamics: &EquivariantDynamics,
    t_max: usize,
    radon: Option<&RadonMatrix>,
) -> Result<TraceReport, CoverError> {
    let gassmann = is_gassmann(&diagram.h1, &diagram.h2)?.verdict;
    let mut rows = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let a = flat_trace_discrete(dynamics, 1, t)?;
        let b = flat_trace_discrete(dynamics, 2, t)?;
        rows.push(TraceRow { t, trace_level1: a, trace_level2: b, equal: a == b });
    }
    let conjugation_residual = match (gassmann, radon) {
        (true, Some(r)) => Some(conjugation_residual(r, dynamics, &rows)),
        _ => None,
    };
    let verdict = if !gassmann {
        TraceVerdict::Warning
    } else if rows.iter().all(|r| r.equal) && conjugation_residual.is_none_or(|c| c <= TRACE_CONJUGATION_TOL) {
        TraceVerdict::Pass
    } else {
        TraceVerdict::Fail
    };
    Ok(TraceReport { rows, gassmann, conjugation_residual, verdict })
}

fn conjugation_residual(radon: &RadonMatrix, dynamics: &EquivariantDynamics, rows: &[TraceRow]) -> f64 {
    let u = radon.matrix();
    let v1 = koopman_matrix(&dynamics.t1).map(|x| Complex64::new(x, 0.0));
    let mut power = DMatrix::<Complex64>::identity(v1.nrows(), v1.ncols());
    let mut worst: f64 = 0.0;
    for row in rows {
        power = &power * &v1;
        let w = u * &power * u.adjoint();
        worst = worst.max((w.trace() - Complex64::new(row.trace_level2 as f64, 0.0)).norm());
    }
    worst
}

/// Outcome of one seeded dynamics in a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub intertwining_residual: Option<f64>,
    pub report: TraceReport,
}

impl SeedOutcome {
    pub fn passes(&self) -> bool {
        self.report.verdict == TraceVerdict::Pass
            && self.intertwining_residual.is_none_or(|r| r <= INTERTWINING_TOL)
    }
}

/// Runs `seeds` in parallel; results are returned in seed order.
pub fn seed_sweep(
    diagram: &CoverDiagram,
    radon: Option<&RadonMatrix>,
    seeds: std::ops::Range<u64>,
    t_max: usize,
) -> Result<Vec<SeedOutcome>, CoverError> {
    let seeds: Vec<u64> = seeds.collect();
    seeds
        .par_iter()
        .map(|&seed| {
            let dynamics = random_equivariant_dynamics(diagram, seed);
            let report = verify_trace_equality(diagram, &dynamics, t_max, radon)?;
            let intertwining_residual = radon.map(|r| verify_intertwining(r, &dynamics));
            Ok(SeedOutcome { seed, intertwining_residual, report })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{intertwiner_solve, parse_group};

    fn s3() -> Arc<FiniteGroup> {
        Arc::new(parse_group(&["(0 1 2)", "(0 1)"], 3).unwrap())
    }

    fn g168() -> Arc<FiniteGroup> {
        Arc::new(parse_group(&["(0 1 2 3 4 5 6)", "(1 2 4)(3 6 5)", "(0 1)(2 5)"], 7).unwrap())
    }

    fn gassmann_pair() -> (Subgroup, Subgroup) {
        let g = g168();
        (
            Subgroup::point_stabilizer(g.clone(), 0).unwrap(),
            Subgroup::set_stabilizer(g, &[0, 1, 3]).unwrap(),
        )
    }

    #[test]
    fn quotient_sizes() {
        let g = s3();
        let a = Subgroup::parse_generators(g.clone(), &["(0 1)"]).unwrap();
        let b = Subgroup::parse_generators(g.clone(), &["(0 2)"]).unwrap();
        let d = build_cover(&a, &b, CoverModel::Regular).unwrap();
        assert_eq!((d.total_len(), d.quotient(1).unwrap().len(), d.quotient(2).unwrap().len()), (6, 3, 3));

        let (h1, h2) = gassmann_pair();
        let d = build_cover(&h1, &h2, CoverModel::Regular).unwrap();
        assert_eq!(d.quotient(1).unwrap().len(), 7);
        assert_eq!(d.quotient(2).unwrap().len(), 7);

        let e = Subgroup::trivial(g);
        let d = build_cover(&e, &e, CoverModel::Product { fiber: 3 }).unwrap();
        assert_eq!(d.quotient(1).unwrap().len(), 18);
        assert!(d.quotient(3).is_err());
    }

    #[test]
    fn projection_constant_exactly_on_orbits() {
        let (h1, h2) = gassmann_pair();
        let d = build_cover(&h1, &h2, CoverModel::Product { fiber: 2 }).unwrap();
        let q = d.quotient(1).unwrap();
        for x in 0..d.total_len() {
            for y in 0..d.total_len() {
                let same_orbit = h1.members().iter().any(|&m| d.act(m, x) == y);
                assert_eq!(same_orbit, q.project(x) == q.project(y));
            }
        }
    }

    #[test]
    fn identity_kernel_lifts_to_identity() {
        let g = s3();
        let h = Subgroup::parse_generators(g, &["(0 1)"]).unwrap();
        let d = build_cover(&h, &h, CoverModel::Product { fiber: 2 }).unwrap();
        let r = lift_radon(&IntertwinerKernel::identity(&h), &d).unwrap();
        assert_eq!(r.unitarity_residual(), 0.0);
        assert_eq!(r.matrix(), &DMatrix::identity(6, 6));
    }

    #[test]
    fn delta_kernel_on_trivial_subgroups_is_translation() {
        let g = s3();
        let e = Subgroup::trivial(g.clone());
        let d = build_cover(&e, &e, CoverModel::Regular).unwrap();
        let n = g.order();
        let values: Vec<Complex64> = (0..n).map(|a| Complex64::new(if a == 0 { 1.0 } else { 0.0 }, 0.0)).collect();
        let k = IntertwinerKernel::from_values(&e, &e, values).unwrap();
        let r = lift_radon(&k, &d).unwrap();
        assert_eq!(r.matrix(), &DMatrix::identity(n, n));
    }

    #[test]
    fn gassmann_radon_is_unitary_and_intertwines() {
        let (h1, h2) = gassmann_pair();
        let k = intertwiner_solve(&h1, &h2, 11).unwrap();
        for model in [CoverModel::Regular, CoverModel::Product { fiber: 3 }] {
            let d = build_cover(&h1, &h2, model).unwrap();
            let r = lift_radon(&k, &d).unwrap();
            assert!(r.unitarity_residual() <= 1e-10, "{model:?}");
            for seed in 0..10 {
                let dy = random_equivariant_dynamics(&d, seed);
                assert!(dy.is_equivariant(&d));
                assert!(verify_intertwining(&r, &dy) <= 1e-9);
            }
        }
    }

    #[test]
    fn intertwining_matches_dense_products() {
        let (h1, h2) = gassmann_pair();
        let k = intertwiner_solve(&h1, &h2, 5).unwrap();
        let d = build_cover(&h1, &h2, CoverModel::Product { fiber: 2 }).unwrap();
        let r = lift_radon(&k, &d).unwrap();
        let dy = random_equivariant_dynamics(&d, 3);
        let c = |m: DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
        let v1 = c(koopman_matrix(dy.level(1).unwrap()));
        let v2 = c(koopman_matrix(dy.level(2).unwrap()));
        let dense = (r.matrix() * v1 - v2 * r.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((dense - verify_intertwining(&r, &dy)).abs() < 1e-14);
    }

    #[test]
    fn mismatched_kernel_rejected() {
        let (h1, h2) = gassmann_pair();
        let k = intertwiner_solve(&h1, &h2, 0).unwrap();
        let d = build_cover(&h2, &h1, CoverModel::Regular).unwrap();
        assert_eq!(lift_radon(&k, &d).unwrap_err(), CoverError::KernelMismatch);
    }

    #[test]
    fn non_equivariant_swap_is_caught() {
        let z2 = Arc::new(parse_group(&["(0 1)"], 2).unwrap());
        let e = Subgroup::trivial(z2);
        let d = build_cover(&e, &e, CoverModel::Product { fiber: 2 }).unwrap();
        // swap (e,0) and (e,1), leave (s,·) alone
        let dy = EquivariantDynamics::from_permutation(&d, vec![1, 0, 2, 3]).unwrap();
        assert!(!dy.is_equivariant(&d));
        let k = IntertwinerKernel::from_values(&e, &e, vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)])
            .unwrap();
        let r = lift_radon(&k, &d).unwrap();
        assert!(r.unitarity_residual() == 0.0);
        assert!(verify_intertwining(&r, &dy) >= 1.0);
    }

    #[test]
    fn identity_dynamics_traces() {
        let (h1, h2) = gassmann_pair();
        let d = build_cover(&h1, &h2, CoverModel::Regular).unwrap();
        let id = EquivariantDynamics::right_translation(&d, 0, &[0]).unwrap();
        assert!(id.level(1).unwrap().iter().enumerate().all(|(i, &j)| i == j));
        for t in 1..5 {
            assert_eq!(flat_trace_discrete(&id, 1, t).unwrap(), 7);
        }
        let k = intertwiner_solve(&h1, &h2, 1).unwrap();
        let r = lift_radon(&k, &d).unwrap();
        assert_eq!(verify_intertwining(&r, &id), 0.0);
    }

    #[test]
    fn right_translation_cycle_type() {
        // T₁ on H\G is Hg ↦ Hgb; its cycle type is read off from orbit sizes directly.
        let g = g168();
        let h = Subgroup::point_stabilizer(g.clone(), 0).unwrap();
        let d = build_cover(&h, &h, CoverModel::Regular).unwrap();
        for b in [1, 5, 40, 100] {
            let dy = EquivariantDynamics::right_translation(&d, b, &[0]).unwrap();
            let mut ours = cycle_lengths(dy.level(1).unwrap());
            ours.sort_unstable();
            let mut direct = Vec::new();
            let mut seen: Vec<Vec<usize>> = Vec::new();
            for x in 0..g.order() {
                let coset = |y: usize| {
                    let mut c: Vec<usize> = h.members().iter().map(|&m| g.mul(m, y)).collect();
                    c.sort_unstable();
                    c
                };
                if seen.contains(&coset(x)) {
                    continue;
                }
                let start = coset(x);
                let mut y = x;
                let mut len = 0;
                loop {
                    seen.push(coset(y));
                    y = g.mul(y, b);
                    len += 1;
                    if coset(y) == start {
                        break;
                    }
                }
                direct.push(len);
            }
            direct.sort_unstable();
            assert_eq!(ours, direct, "b = {b}");
        }
    }

    #[test]
    fn fiber_three_cycle_multiplies_counts() {
        let g = s3();
        let h = Subgroup::parse_generators(g, &["(0 1)"]).unwrap();
        let d = build_cover(&h, &h, CoverModel::Product { fiber: 3 }).unwrap();
        let dy = EquivariantDynamics::right_translation(&d, 0, &[1, 2, 0]).unwrap();
        // every quotient point lies on a 3-cycle: 3 cosets × 1 fiber 3-cycle each
        let mut lens = cycle_lengths(dy.level(1).unwrap());
        lens.sort_unstable();
        assert_eq!(lens, vec![3, 3, 3]);
        assert_eq!(flat_trace_discrete(&dy, 1, 1).unwrap(), 0);
        assert_eq!(flat_trace_discrete(&dy, 1, 3).unwrap(), 9);
    }

    #[test]
    fn single_cycle_has_no_fixed_points_below_length() {
        let z = Arc::new(parse_group(&["(0 1 2 3 4)"], 5).unwrap());
        let e = Subgroup::trivial(z);
        let d = build_cover(&e, &e, CoverModel::Regular).unwrap();
        let dy = EquivariantDynamics::right_translation(&d, 1, &[0]).unwrap();
        for t in 1..5 {
            assert_eq!(flat_trace_discrete(&dy, 1, t).unwrap(), 0);
        }
        assert_eq!(flat_trace_discrete(&dy, 1, 5).unwrap(), 5);
    }

    #[test]
    fn orbit_counting_identity() {
        let (h1, h2) = gassmann_pair();
        let d = build_cover(&h1, &h2, CoverModel::Product { fiber: 2 }).unwrap();
        for seed in 0..5 {
            let dy = random_equivariant_dynamics(&d, seed);
            for t in 1..12 {
                for level in [1, 2] {
                    assert_eq!(
                        flat_trace_discrete(&dy, level, t).unwrap(),
                        orbit_count_trace(&d, &dy, level, t).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn trace_equality_and_control() {
        let (h1, h2) = gassmann_pair();
        let d = build_cover(&h1, &h2, CoverModel::Regular).unwrap();
        let r = lift_radon(&intertwiner_solve(&h1, &h2, 2).unwrap(), &d).unwrap();
        let out = seed_sweep(&d, Some(&r), 0..20, 50).unwrap();
        assert!(out.iter().all(SeedOutcome::passes));
        assert_eq!(out.iter().map(|o| o.seed).collect::<Vec<_>>(), (0..20).collect::<Vec<_>>());

        // conjugate subgroups give isomorphic quotients
        let h1c = h1.conjugated_by(9);
        let dc = build_cover(&h1, &h1c, CoverModel::Regular).unwrap();
        let dy = random_equivariant_dynamics(&dc, 4);
        assert_eq!(verify_trace_equality(&dc, &dy, 50, None).unwrap().verdict, TraceVerdict::Pass);

        let g = s3();
        let t = Subgroup::parse_generators(g.clone(), &["(0 1)"]).unwrap();
        let c = Subgroup::parse_generators(g, &["(0 1 2)"]).unwrap();
        let dn = build_cover(&t, &c, CoverModel::Regular).unwrap();
        for seed in 0..6 {
            let rep = verify_trace_equality(&dn, &random_equivariant_dynamics(&dn, seed), 50, None).unwrap();
            assert_eq!(rep.verdict, TraceVerdict::Warning);
            assert!(rep.rows.iter().any(|r| !r.equal));
        }
    }
}
