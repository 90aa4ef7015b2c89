//! Unitary intertwiners `𝒜: L²(G/H₁) → L²(G/H₂)` and their double-coset kernels.
//!
//! Matrices are indexed by left cosets in the canonical order of
//! [`cosets`](super::cosets). An equivariant matrix satisfies
//! `𝒜[xH₂, yH₁] = A(x⁻¹y)` for a function `A` constant on double cosets
//! `H₂ a H₁`; the kernel stores one value per double coset.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{double_cosets, is_gassmann, left_coset_table, GroupError, Subgroup};
use crate::defaults::{INTERTWINER_RETRIES, INTERTWINER_TOL};

/// Ratio of extreme singular values below which a group average counts as singular.
const SINGULAR_RATIO: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct IntertwinerKernel {
    h1: Subgroup,
    h2: Subgroup,
    double_cosets: Vec<Vec<usize>>,
    dc_of: Vec<usize>,
    values: Vec<Complex64>,
    matrix: DMatrix<Complex64>,
    coset1: (Vec<usize>, Vec<usize>),
    coset2: (Vec<usize>, Vec<usize>),
}

impl IntertwinerKernel {
    /// Kernel with the given value on each double coset `H₂\G/H₁`
    /// (in the order returned by [`double_cosets`]).
    pub fn from_values(h1: &Subgroup, h2: &Subgroup, values: Vec<Complex64>) -> Result<Self, GroupError> {
        let dcs = double_cosets(h2, h1)?;
        if values.len() != dcs.len() {
            return Err(GroupError::NotSubgroup(format!(
                "expected {} double-coset values, got {}",
                dcs.len(),
                values.len()
            )));
        }
        let mut kernel = Self::skeleton(h1, h2, dcs);
        kernel.values = values;
        let g = h1.parent();
        let (_, reps1) = &kernel.coset1;
        let (_, reps2) = &kernel.coset2;
        let mut m = DMatrix::zeros(reps2.len(), reps1.len());
        for (x, &rx) in reps2.iter().enumerate() {
            for (y, &ry) in reps1.iter().enumerate() {
                m[(x, y)] = kernel.values[kernel.dc_of[g.mul(g.inv(rx), ry)]];
            }
        }
        kernel.matrix = m;
        Ok(kernel)
    }

    /// Identity intertwiner of `L²(G/H)`: `A = 1` on `H`, `0` elsewhere.
    pub fn identity(h: &Subgroup) -> Self {
        let dcs = double_cosets(h, h).expect("same parent");
        let id = h.parent().identity();
        let values = dcs
            .iter()
            .map(|d| if d.contains(&id) { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
            .collect();
        Self::from_values(h, h, values).expect("value count matches")
    }

    fn skeleton(h1: &Subgroup, h2: &Subgroup, dcs: Vec<Vec<usize>>) -> Self {
        let mut dc_of = vec![0usize; h1.parent().order()];
        for (k, d) in dcs.iter().enumerate() {
            for &a in d {
                dc_of[a] = k;
            }
        }
        IntertwinerKernel {
            h1: h1.clone(),
            h2: h2.clone(),
            values: Vec::new(),
            matrix: DMatrix::zeros(0, 0),
            coset1: left_coset_table(h1),
            coset2: left_coset_table(h2),
            double_cosets: dcs,
            dc_of,
        }
    }

    pub fn h1(&self) -> &Subgroup {
        &self.h1
    }

    pub fn h2(&self) -> &Subgroup {
        &self.h2
    }

    /// The induced `|G/H₂| × |G/H₁|` matrix `𝒜`.
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn double_cosets(&self) -> &[Vec<usize>] {
        &self.double_cosets
    }

    /// `(representative, value)` per double coset.
    pub fn values(&self) -> Vec<(usize, Complex64)> {
        self.double_cosets.iter().map(|d| d[0]).zip(self.values.iter().copied()).collect()
    }

    /// `A(a)` for a group element `a`.
    pub fn value_at(&self, a: usize) -> Complex64 {
        self.values[self.dc_of[a]]
    }

    /// Permutation of `G/H₁` (level 1) or `G/H₂` (level 2) induced by left multiplication.
    fn coset_action(&self, level: u8, g: usize) -> Vec<usize> {
        let group = self.h1.parent();
        let (coset_of, reps) = if level == 1 { &self.coset1 } else { &self.coset2 };
        reps.iter().map(|&r| coset_of[group.mul(g, r)]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntertwinerReport {
    pub unitarity_residual: f64,
    pub equivariance_residual: f64,
    pub constancy_residual: f64,
    pub passes: bool,
}

/// Max-norm residuals of `𝒜*𝒜 = I`, `𝒜ρ₁(g) = ρ₂(g)𝒜` over generators, and
/// agreement of `𝒜` with its double-coset values.
pub fn verify_intertwiner(kernel: &IntertwinerKernel) -> IntertwinerReport {
    let a = &kernel.matrix;
    let g = kernel.h1.parent();
    let gram = a.adjoint() * a;
    let unitarity = max_abs_diff(&gram, &DMatrix::identity(gram.nrows(), gram.ncols()));

    let mut equivariance: f64 = 0.0;
    for &s in g.generators() {
        let p1 = kernel.coset_action(1, s);
        let p2 = kernel.coset_action(2, s);
        // (𝒜ρ₁(s))[x, y] = 𝒜[x, s⁻¹y]   (ρ₂(s)𝒜)[x, y] = 𝒜[s⁻¹x, y]
        // equivalently 𝒜[s x, s y] = 𝒜[x, y]
        for x in 0..a.nrows() {
            for y in 0..a.ncols() {
                equivariance = equivariance.max((a[(p2[x], p1[y])] - a[(x, y)]).norm());
            }
        }
    }

    let mut constancy: f64 = 0.0;
    let reps1 = &kernel.coset1.1;
    let reps2 = &kernel.coset2.1;
    for (x, &rx) in reps2.iter().enumerate() {
        for (y, &ry) in reps1.iter().enumerate() {
            let v = kernel.value_at(g.mul(g.inv(rx), ry));
            constancy = constancy.max((a[(x, y)] - v).norm());
        }
    }
    let passes = unitarity <= INTERTWINER_TOL && equivariance <= INTERTWINER_TOL && constancy <= INTERTWINER_TOL;
    IntertwinerReport {
        unitarity_residual: unitarity,
        equivariance_residual: equivariance,
        constancy_residual: constancy,
        passes,
    }
}

fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Builds a unitary intertwiner by averaging a seeded random matrix over the
/// group action, `B = |G|⁻¹ Σ_g ρ₂(g) R ρ₁(g)⁻¹`, and taking its polar factor.
pub fn intertwiner_solve(h1: &Subgroup, h2: &Subgroup, seed: u64) -> Result<IntertwinerKernel, GroupError> {
    let cert = is_gassmann(h1, h2)?;
    if !cert.verdict {
        return Err(GroupError::NotGassmann);
    }
    let g = h1.parent();
    let mut kernel = IntertwinerKernel::skeleton(h1, h2, double_cosets(h2, h1)?);
    let m = kernel.coset1.1.len();
    let actions: Vec<(Vec<usize>, Vec<usize>)> = (0..g.order())
        .map(|s| (kernel.coset_action(1, s), kernel.coset_action(2, s)))
        .collect();

    for attempt in 0..INTERTWINER_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(attempt as u64)));
        let r = DMatrix::from_fn(m, m, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let mut b = DMatrix::<Complex64>::zeros(m, m);
        for (p1, p2) in &actions {
            for x in 0..m {
                for y in 0..m {
                    b[(p2[x], p1[y])] += r[(x, y)];
                }
            }
        }
        b /= Complex64::new(g.order() as f64, 0.0);

        let svd = b.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smax > 0.0) || smin / smax < SINGULAR_RATIO {
            log::debug!("intertwiner attempt {attempt}: singular average (ratio {})", smin / smax);
            continue;
        }
        let u = svd.u.expect("requested");
        let v_t = svd.v_t.expect("requested");
        let polar = u * v_t;

        let row_e = kernel.coset2.0[g.identity()];
        kernel.values = kernel
            .double_cosets
            .iter()
            .map(|d| polar[(row_e, kernel.coset1.0[d[0]])])
            .collect();
        kernel.matrix = polar;
        return Ok(kernel);
    }
    Err(GroupError::SingularAverage { attempts: INTERTWINER_RETRIES })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::Subgroup;
    use super::*;

    #[test]
    fn identity_kernel_is_exact() {
        let g = g168();
        let h = Subgroup::point_stabilizer(g, 0).unwrap();
        let k = IntertwinerKernel::identity(&h);
        assert_eq!(k.matrix().nrows(), 7);
        let rep = verify_intertwiner(&k);
        assert_eq!(rep.unitarity_residual, 0.0);
        assert_eq!(rep.equivariance_residual, 0.0);
        assert_eq!(rep.constancy_residual, 0.0);
        assert!(rep.passes);
    }

    #[test]
    fn solve_on_equal_subgroups() {
        let g = s3();
        let h = Subgroup::parse_generators(g, &["(0 1)"]).unwrap();
        for seed in 0..5 {
            let k = intertwiner_solve(&h, &h, seed).unwrap();
            assert!(verify_intertwiner(&k).passes, "seed {seed}");
        }
    }

    #[test]
    fn solve_on_gassmann_pair() {
        let g = g168();
        let h1 = Subgroup::point_stabilizer(g.clone(), 0).unwrap();
        let h2 = Subgroup::set_stabilizer(g, &[0, 1, 3]).unwrap();
        let k = intertwiner_solve(&h1, &h2, 7).unwrap();
        assert_eq!(k.matrix().shape(), (7, 7));
        let rep = verify_intertwiner(&k);
        assert!(rep.passes, "{rep:?}");
        assert_eq!(k.values().len(), k.double_cosets().len());
    }

    #[test]
    fn non_gassmann_rejected() {
        let g = s3();
        let t = Subgroup::parse_generators(g.clone(), &["(0 1)"]).unwrap();
        let r = Subgroup::parse_generators(g, &["(0 1 2)"]).unwrap();
        assert_eq!(intertwiner_solve(&t, &r, 0).unwrap_err(), GroupError::NotGassmann);
    }

    #[test]
    fn perturbed_kernel_fails_unitarity() {
        let g = g168();
        let h1 = Subgroup::point_stabilizer(g.clone(), 0).unwrap();
        let h2 = Subgroup::set_stabilizer(g, &[0, 1, 3]).unwrap();
        let k = intertwiner_solve(&h1, &h2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let values: Vec<Complex64> = k
            .values()
            .into_iter()
            .map(|(_, v)| v + Complex64::new(rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3)))
            .collect();
        let perturbed = IntertwinerKernel::from_values(&h1, &h2, values).unwrap();
        let rep = verify_intertwiner(&perturbed);
        assert!(rep.unitarity_residual >= 1e-4, "{rep:?}");
        assert!(!rep.passes);
        // still equivariant and constant: the perturbation respects double cosets
        assert!(rep.equivariance_residual <= 1e-12);
    }
}
