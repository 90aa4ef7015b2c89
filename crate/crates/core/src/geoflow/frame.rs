//! Orthonormal frame of `T S*M` for the Sasaki-type inner product.
//!
//! A tangent vector of `S*M` is written as a pair `(J, K)` of tangent vectors of
//! `M`: `J = dπ` (horizontal part) and `K = ∇J` (vertical part, raised with the
//! metric). Frame order: `(T, 0)`, `(E₁, 0) … (E_{n−1}, 0)`, `(0, E₁) … (0, E_{n−1})`
//! where `T` is the unit velocity and `Eᵢ` span its orthogonal complement.
//! The vertical `(0, T)` direction is normal to the energy shell and omitted.

use nalgebra::{DMatrix, DVector};

use super::{GeoError, Manifold, PhasePoint};

#[derive(Debug, Clone)]
pub struct SasakiFrame {
    n: usize,
    g: DMatrix<f64>,
    ginv: DMatrix<f64>,
    /// `Γ^c_{ab} ξ_c` as a matrix in `(a, b)`.
    gamma_xi: DMatrix<f64>,
    t: DVector<f64>,
    e: Vec<DVector<f64>>,
}

impl SasakiFrame {
    pub fn at(manifold: &Manifold, p: &PhasePoint) -> Result<Self, GeoError> {
        let n = manifold.dim();
        let jet = manifold.jet(&p.x)?;
        let g = jet.metric();
        let xi = p.xi_vec();
        let gamma = jet.christoffel();
        let mut gamma_xi = DMatrix::zeros(n, n);
        for (c, gc) in gamma.iter().enumerate() {
            gamma_xi += gc * xi[c];
        }
        let v = &jet.ginv * &xi;
        let norm = v.dot(&(&g * &v)).sqrt();
        if !(norm > 1e-12) {
            return Err(GeoError::DegenerateFrame(norm));
        }
        let t = v / norm;
        let ip = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(&g * b));
        let e = if n == 2 {
            // metric rotation of T by +90°: E^a = ε^{ab} ξ_b / √det g
            let raw = DVector::from_vec(vec![xi[1], -xi[0]]);
            let len = ip(&raw, &raw).sqrt();
            vec![raw / len]
        } else {
            let coords: Vec<DVector<f64>> = (0..n)
                .map(|i| {
                    let mut u = DVector::zeros(n);
                    u[i] = 1.0;
                    &u - &t * ip(&u, &t)
                })
                .collect();
            let drop = (0..n)
                .min_by(|&a, &b| ip(&coords[a], &coords[a]).total_cmp(&ip(&coords[b], &coords[b])))
                .unwrap();
            let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
            for (i, c) in coords.into_iter().enumerate() {
                if i == drop {
                    continue;
                }
                let mut r = c;
                for b in &basis {
                    r -= b * ip(&r, b);
                }
                let len = ip(&r, &r).sqrt();
                basis.push(r / len);
            }
            basis
        };
        Ok(SasakiFrame { n, ginv: jet.ginv, g, gamma_xi, t, e })
    }

    /// `2n − 1`
    pub fn dim(&self) -> usize {
        2 * self.n - 1
    }

    pub fn unit_tangent(&self) -> &DVector<f64> {
        &self.t
    }

    pub fn normals(&self) -> &[DVector<f64>] {
        &self.e
    }

    /// The `(J, K)` pair of frame vector `j`.
    pub fn vector(&self, j: usize) -> (DVector<f64>, DVector<f64>) {
        let zero = DVector::zeros(self.n);
        if j == 0 {
            (self.t.clone(), zero)
        } else if j < self.n {
            (self.e[j - 1].clone(), zero)
        } else {
            (zero, self.e[j - self.n].clone())
        }
    }

    /// `g(a, b)`
    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(&(&self.g * b))
    }

    /// Chart displacement `(δx, δξ)` of the pair `(J, K)`.
    pub fn pair_to_chart(&self, j: &DVector<f64>, k: &DVector<f64>) -> Vec<f64> {
        let dxi = &self.g * k + &self.gamma_xi * j;
        j.iter().chain(dxi.iter()).copied().collect()
    }

    /// `(J, K)` of a chart displacement.
    pub fn chart_to_pair(&self, delta: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let n = self.n;
        let j = DVector::from_column_slice(&delta[..n]);
        let dxi = DVector::from_column_slice(&delta[n..2 * n]);
        let k = &self.ginv * (dxi - &self.gamma_xi * &j);
        (j, k)
    }
}

/// Chart displacement of `Σ c_j f_j`.
pub fn frame_to_chart(frame: &SasakiFrame, coeffs: &[f64]) -> Vec<f64> {
    let n = frame.n;
    let mut j = &frame.t * coeffs[0];
    let mut k = DVector::zeros(n);
    for i in 0..n - 1 {
        j += &frame.e[i] * coeffs[1 + i];
        k += &frame.e[i] * coeffs[n + i];
    }
    frame.pair_to_chart(&j, &k)
}

/// Frame coefficients of a chart displacement (the energy component is dropped).
pub fn chart_to_frame(frame: &SasakiFrame, delta: &[f64]) -> Vec<f64> {
    let n = frame.n;
    let (j, k) = frame.chart_to_pair(delta);
    let mut c = Vec::with_capacity(2 * n - 1);
    c.push(frame.inner(&j, &frame.t));
    c.extend(frame.e.iter().map(|e| frame.inner(&j, e)));
    c.extend(frame.e.iter().map(|e| frame.inner(&k, e)));
    c
}
