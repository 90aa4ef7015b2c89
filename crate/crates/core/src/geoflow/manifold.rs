use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{GeoError, PhasePoint};

/// Below this value of `sin θ` the polar chart of the sphere is considered left.
const POLE_GUARD: f64 = 1e-3;

/// Fourier profile `f(u) = constant + Σ_k cos[k-1]·cos(ku) + sin[k-1]·sin(ku)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub constant: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl Profile {
    /// `(f, f', f'')` at `u`.
    pub fn eval(&self, u: f64) -> (f64, f64, f64) {
        let mut f = self.constant;
        let (mut d1, mut d2) = (0.0, 0.0);
        for (k, &c) in self.cos.iter().enumerate() {
            let w = (k + 1) as f64;
            let (s, co) = (w * u).sin_cos();
            f += c * co;
            d1 -= c * w * s;
            d2 -= c * w * w * co;
        }
        for (k, &c) in self.sin.iter().enumerate() {
            let w = (k + 1) as f64;
            let (s, co) = (w * u).sin_cos();
            f += c * s;
            d1 += c * w * co;
            d2 -= c * w * w * s;
        }
        (f, d1, d2)
    }

    /// Zeros of `f'` in `[0, 2π)`, found by sign changes on a fine grid and bisection.
    pub fn critical_points(&self) -> Vec<f64> {
        let samples = 4096;
        let d = |u: f64| self.eval(u).1;
        let mut out: Vec<f64> = Vec::new();
        for i in 0..samples {
            let (mut a, mut b) = (TAU * i as f64 / samples as f64, TAU * (i + 1) as f64 / samples as f64);
            let (da, db) = (d(a), d(b));
            if da == 0.0 {
                out.push(a);
                continue;
            }
            if da * db >= 0.0 {
                continue;
            }
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if d(a) * d(m) <= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
                if b - a < 1e-15 {
                    break;
                }
            }
            out.push(0.5 * (a + b));
        }
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        out
    }
}

/// Builtin Riemannian manifolds with analytic metric derivatives.
///
/// * `FlatTorus`: `ℝⁿ / Bℤⁿ` with the Euclidean metric; `basis` lists the
///   lattice vectors.
/// * `RoundSphere`: polar chart `(θ, φ)`, metric `r²(dθ² + sin²θ dφ²)`; `φ` is periodic.
/// * `SurfaceOfRevolution`: chart `(u, θ)`, both `2π`-periodic, metric `du² + f(u)² dθ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Manifold {
    FlatTorus { basis: Vec<Vec<f64>> },
    RoundSphere { radius: f64 },
    SurfaceOfRevolution { profile: Profile },
}

/// Inverse metric and its first and second partial derivatives at a point.
///
/// `d[a] = ∂_a g^{··}` and `dd[a * n + c] = ∂_a ∂_c g^{··}`.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub ginv: DMatrix<f64>,
    pub d: Vec<DMatrix<f64>>,
    pub dd: Vec<DMatrix<f64>>,
}

impl MetricJet {
    pub fn dim(&self) -> usize {
        self.ginv.nrows()
    }

    pub fn metric(&self) -> DMatrix<f64> {
        self.ginv.clone().try_inverse().expect("metric is positive definite")
    }

    /// `Γ[c][(a, b)] = Γ^c_{ab}` of the Levi-Civita connection.
    pub fn christoffel(&self) -> Vec<DMatrix<f64>> {
        let n = self.dim();
        let g = self.metric();
        // ∂_a g_{··} = −g (∂_a g^{··}) g
        let dg: Vec<DMatrix<f64>> = self.d.iter().map(|da| -(&g * da * &g)).collect();
        (0..n)
            .map(|c| {
                DMatrix::from_fn(n, n, |a, b| {
                    0.5 * (0..n)
                        .map(|e| self.ginv[(c, e)] * (dg[a][(e, b)] + dg[b][(e, a)] - dg[e][(a, b)]))
                        .sum::<f64>()
                })
            })
            .collect()
    }
}

impl Manifold {
    pub fn flat_torus(basis: Vec<Vec<f64>>) -> Result<Self, GeoError> {
        let m = Manifold::FlatTorus { basis };
        m.validate()?;
        Ok(m)
    }

    pub fn square_torus(n: usize) -> Self {
        let basis = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Manifold::FlatTorus { basis }
    }

    pub fn round_sphere(radius: f64) -> Result<Self, GeoError> {
        let m = Manifold::RoundSphere { radius };
        m.validate()?;
        Ok(m)
    }

    pub fn surface_of_revolution(profile: Profile) -> Result<Self, GeoError> {
        let m = Manifold::SurfaceOfRevolution { profile };
        m.validate()?;
        Ok(m)
    }

    /// `f(u) = 2 + cos u`, the standard torus of revolution.
    pub fn standard_torus_of_revolution() -> Self {
        Manifold::SurfaceOfRevolution { profile: Profile { constant: 2.0, cos: vec![1.0], sin: vec![] } }
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        match self {
            Manifold::FlatTorus { basis } => {
                let n = basis.len();
                if n < 2 || basis.iter().any(|v| v.len() != n) {
                    return Err(GeoError::InvalidManifold(format!("lattice basis must be n×n with n ≥ 2, got {n} rows")));
                }
                if basis.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(GeoError::InvalidManifold("non-finite lattice entry".into()));
                }
                if self.covolume().abs() < 1e-12 {
                    return Err(GeoError::InvalidManifold("lattice basis is singular".into()));
                }
                Ok(())
            }
            Manifold::RoundSphere { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(GeoError::InvalidManifold(format!("radius must be positive, got {radius}")));
                }
                Ok(())
            }
            Manifold::SurfaceOfRevolution { profile } => {
                let fmin = (0..4096).map(|i| profile.eval(TAU * i as f64 / 4096.0).0).fold(f64::INFINITY, f64::min);
                if !(fmin.is_finite() && fmin > 0.0) {
                    return Err(GeoError::InvalidManifold(format!("profile must be positive, min ≈ {fmin}")));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Manifold::FlatTorus { basis } => basis.len(),
            _ => 2,
        }
    }

    /// Lattice basis as columns (flat tori only).
    pub fn lattice(&self) -> Option<DMatrix<f64>> {
        match self {
            Manifold::FlatTorus { basis } => {
                let n = basis.len();
                Some(DMatrix::from_fn(n, n, |i, j| basis[j][i]))
            }
            _ => None,
        }
    }

    /// `|det B|` for flat tori, the area otherwise.
    pub fn covolume(&self) -> f64 {
        match self {
            Manifold::FlatTorus { .. } => self.lattice().unwrap().determinant().abs(),
            Manifold::RoundSphere { radius } => 4.0 * PI * radius * radius,
            Manifold::SurfaceOfRevolution { profile } => {
                let m = 4096;
                TAU * TAU * (0..m).map(|i| profile.eval(TAU * i as f64 / m as f64).0).sum::<f64>() / m as f64
            }
        }
    }

    /// Sasaki volume of the unit cosphere bundle: base volume × `Vol(S^{n−1})`.
    pub fn cosphere_volume(&self) -> f64 {
        let n = self.dim();
        // |S^{n-1}| = 2 π^{n/2} / Γ(n/2)
        let half = n as f64 / 2.0;
        let gamma_half = if n.is_multiple_of(2) {
            (1..n / 2).map(|k| k as f64).product::<f64>()
        } else {
            (0..(n - 1) / 2).map(|k| k as f64 + 0.5).product::<f64>() * PI.sqrt()
        };
        self.covolume() * 2.0 * PI.powf(half) / gamma_half
    }

    /// Which chart coordinates are `2π`-periodic (tori use the lattice instead).
    fn periodic(&self) -> Vec<bool> {
        match self {
            Manifold::FlatTorus { basis } => vec![false; basis.len()],
            Manifold::RoundSphere { .. } => vec![false, true],
            Manifold::SurfaceOfRevolution { .. } => vec![true, true],
        }
    }

    pub fn jet(&self, x: &[f64]) -> Result<MetricJet, GeoError> {
        let n = self.dim();
        if x.len() != n {
            return Err(GeoError::Dimension { expected: n, got: x.len() });
        }
        let zero = || DMatrix::zeros(n, n);
        match self {
            Manifold::FlatTorus { .. } => Ok(MetricJet {
                ginv: DMatrix::identity(n, n),
                d: vec![zero(); n],
                dd: vec![zero(); n * n],
            }),
            Manifold::RoundSphere { radius } => {
                let (s, c) = x[0].sin_cos();
                if s < POLE_GUARD {
                    return Err(GeoError::ChartExit(x.to_vec()));
                }
                let r2 = radius * radius;
                let ginv = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / r2, 1.0 / (r2 * s * s)]));
                let mut d0 = zero();
                d0[(1, 1)] = -2.0 * c / (r2 * s * s * s);
                let mut dd00 = zero();
                dd00[(1, 1)] = (2.0 / (s * s) + 6.0 * c * c / (s * s * s * s)) / r2;
                Ok(MetricJet { ginv, d: vec![d0, zero()], dd: vec![dd00, zero(), zero(), zero()] })
            }
            Manifold::SurfaceOfRevolution { profile } => {
                let (f, f1, f2) = profile.eval(x[0]);
                if !(f > 0.0) {
                    return Err(GeoError::ChartExit(x.to_vec()));
                }
                let ginv = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0 / (f * f)]));
                let mut d0 = zero();
                d0[(1, 1)] = -2.0 * f1 / (f * f * f);
                let mut dd00 = zero();
                dd00[(1, 1)] = -2.0 * f2 / (f * f * f) + 6.0 * f1 * f1 / (f * f * f * f);
                Ok(MetricJet { ginv, d: vec![d0, zero()], dd: vec![dd00, zero(), zero(), zero()] })
            }
        }
    }

    /// `|ξ|²_g`
    pub fn energy(&self, p: &PhasePoint) -> Result<f64, GeoError> {
        let jet = self.jet(&p.x)?;
        let xi = p.xi_vec();
        Ok(xi.dot(&(&jet.ginv * &xi)))
    }

    /// Rescales `ξ` to unit length.
    pub fn normalize(&self, p: &PhasePoint) -> Result<PhasePoint, GeoError> {
        let e = self.energy(p)?;
        if !(e > 0.0) {
            return Err(GeoError::DegenerateFrame(e));
        }
        let s = e.sqrt();
        Ok(PhasePoint { x: p.x.clone(), xi: p.xi.iter().map(|v| v / s).collect() })
    }

    /// `b − a` in chart coordinates, with periodic coordinates wrapped into
    /// `(−π, π]` and torus displacements reduced to the nearest lattice point.
    pub fn displacement(&self, a: &PhasePoint, b: &PhasePoint) -> Vec<f64> {
        let n = self.dim();
        let mut dx: Vec<f64> = (0..n).map(|i| b.x[i] - a.x[i]).collect();
        for (i, p) in self.periodic().into_iter().enumerate() {
            if p {
                dx[i] = wrap_angle(dx[i]);
            }
        }
        if let Some(basis) = self.lattice() {
            let v = DVector::from_vec(dx.clone());
            let coeffs = basis.clone().lu().solve(&v).expect("nonsingular lattice");
            let rounded = coeffs.map(f64::round);
            dx = (v - basis * rounded).iter().copied().collect();
        }
        dx.extend((0..n).map(|i| b.xi[i] - a.xi[i]));
        dx
    }

    /// Chart distance modulo the deck identifications.
    pub fn distance(&self, a: &PhasePoint, b: &PhasePoint) -> f64 {
        self.displacement(a, b).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Representative of `p` in the fundamental domain: periodic coordinates in
    /// `[0, 2π)`, torus points in the half-open lattice cell.
    pub fn canonical(&self, p: &PhasePoint) -> PhasePoint {
        let mut x = p.x.clone();
        for (i, per) in self.periodic().into_iter().enumerate() {
            if per {
                x[i] = x[i].rem_euclid(TAU);
                if x[i] >= TAU - 1e-12 {
                    x[i] = 0.0;
                }
            }
        }
        if let Some(basis) = self.lattice() {
            let v = DVector::from_vec(x.clone());
            let mut c = basis.clone().lu().solve(&v).expect("nonsingular lattice");
            for ci in c.iter_mut() {
                *ci -= ci.floor();
                if *ci >= 1.0 - 1e-12 {
                    *ci = 0.0;
                }
            }
            x = (basis * c).iter().copied().collect();
        }
        PhasePoint { x, xi: p.xi.clone() }
    }
}

/// Embedding of a point of the round sphere given in the polar chart whose pole
/// lies on coordinate axis `axis` (the standard chart uses `axis = 2`).
/// Returns the position `X ∈ ℝ³` and the unit velocity `V = dX/dt`.
pub(crate) fn sphere_embed(radius: f64, axis: usize, p: &PhasePoint) -> ([f64; 3], [f64; 3]) {
    let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
    let (st, ct) = p.x[0].sin_cos();
    let (sp, cp) = p.x[1].sin_cos();
    let r2 = radius * radius;
    let thdot = p.xi[0] / r2;
    let phdot = p.xi[1] / (r2 * st * st);
    let mut x = [0.0; 3];
    let mut v = [0.0; 3];
    x[axis] = radius * ct;
    x[b] = radius * st * cp;
    x[c] = radius * st * sp;
    v[axis] = -radius * st * thdot;
    v[b] = radius * (ct * cp * thdot - st * sp * phdot);
    v[c] = radius * (ct * sp * thdot + st * cp * phdot);
    (x, v)
}

/// Inverse of [`sphere_embed`].
pub(crate) fn sphere_chart(radius: f64, axis: usize, x: &[f64; 3], v: &[f64; 3]) -> PhasePoint {
    let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
    let th = (x[axis] / radius).clamp(-1.0, 1.0).acos();
    let ph = x[c].atan2(x[b]);
    let (st, ct) = th.sin_cos();
    let (sp, cp) = ph.sin_cos();
    let mut dth = [0.0; 3];
    let mut dph = [0.0; 3];
    dth[axis] = -radius * st;
    dth[b] = radius * ct * cp;
    dth[c] = radius * ct * sp;
    dph[b] = -radius * st * sp;
    dph[c] = radius * st * cp;
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    // ξ_a = g_{ab} ẋ^b = ⟨V, ∂_a X⟩
    PhasePoint { x: vec![th, ph], xi: vec![dot(v, &dth), dot(v, &dph)] }
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// `(ẋ, ξ̇) = (g^{ab} ξ_b, −½ ∂_a g^{bc} ξ_b ξ_c)`.
pub fn hamilton_rhs(manifold: &Manifold, p: &PhasePoint) -> Result<(Vec<f64>, Vec<f64>), GeoError> {
    let jet = manifold.jet(&p.x)?;
    let xi = p.xi_vec();
    let xdot = &jet.ginv * &xi;
    let xidot: Vec<f64> = jet.d.iter().map(|da| -0.5 * xi.dot(&(da * &xi))).collect();
    Ok((xdot.iter().copied().collect(), xidot))
}

/// `D(ẋ, ξ̇)/D(x, ξ)` as a `2n × 2n` matrix.
pub(crate) fn hamilton_jacobian(jet: &MetricJet, xi: &DVector<f64>) -> DMatrix<f64> {
    let n = jet.dim();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for c in 0..n {
        let dc_xi = &jet.d[c] * xi;
        for a in 0..n {
            m[(a, c)] = dc_xi[a];
        }
    }
    for a in 0..n {
        for b in 0..n {
            m[(a, n + b)] = jet.ginv[(a, b)];
        }
    }
    for a in 0..n {
        for c in 0..n {
            m[(n + a, c)] = -0.5 * xi.dot(&(&jet.dd[a * n + c] * xi));
        }
        let da_xi = &jet.d[a] * xi;
        for b in 0..n {
            m[(n + a, n + b)] = -da_xi[b];
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_jet_check(m: &Manifold, x: &[f64]) {
        let h = 1e-5;
        let n = m.dim();
        let jet = m.jet(x).unwrap();
        for a in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[a] += h;
            xm[a] -= h;
            let (jp, jm) = (m.jet(&xp).unwrap(), m.jet(&xm).unwrap());
            let fd = (&jp.ginv - &jm.ginv) / (2.0 * h);
            assert!((fd - &jet.d[a]).abs().max() < 1e-7);
            for c in 0..n {
                let fd2 = (&jp.d[c] - &jm.d[c]) / (2.0 * h);
                assert!((fd2 - &jet.dd[a * n + c]).abs().max() < 1e-6, "dd {a} {c}");
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        fd_jet_check(&Manifold::round_sphere(1.7).unwrap(), &[0.9, 0.3]);
        fd_jet_check(&Manifold::standard_torus_of_revolution(), &[2.1, 0.4]);
        let bumpy = Profile { constant: 3.0, cos: vec![0.5, 0.2], sin: vec![0.0, 0.3] };
        fd_jet_check(&Manifold::surface_of_revolution(bumpy).unwrap(), &[4.0, 1.0]);
    }

    #[test]
    fn flat_torus_rhs_is_straight_line() {
        let m = Manifold::square_torus(2);
        let (xdot, xidot) = hamilton_rhs(&m, &PhasePoint::new(vec![0.3, 0.1], vec![0.6, 0.8])).unwrap();
        assert_eq!(xdot, vec![0.6, 0.8]);
        assert_eq!(xidot, vec![0.0, 0.0]);
    }

    #[test]
    fn sphere_equator_rhs_is_tangent_to_equator() {
        let m = Manifold::round_sphere(1.0).unwrap();
        let (xdot, xidot) = hamilton_rhs(&m, &PhasePoint::new(vec![PI / 2.0, 0.0], vec![0.0, 1.0])).unwrap();
        assert!(xdot[0].abs() < 1e-15 && (xdot[1] - 1.0).abs() < 1e-15);
        assert!(xidot[0].abs() < 1e-15 && xidot[1] == 0.0);
        // off the equator the great circle bends back towards it: ξ̇_θ = cos θ / sin³ θ · ξ_φ²
        let th = 1.0f64;
        let (_, xidot) = hamilton_rhs(&m, &PhasePoint::new(vec![th, 0.0], vec![0.0, th.sin()])).unwrap();
        assert!((xidot[0] - th.cos() / th.sin()).abs() < 1e-14);
    }

    #[test]
    fn sphere_pole_is_chart_exit() {
        let m = Manifold::round_sphere(1.0).unwrap();
        assert!(matches!(m.jet(&[1e-4, 0.0]), Err(GeoError::ChartExit(_))));
    }

    #[test]
    fn validation() {
        assert!(Manifold::round_sphere(-1.0).is_err());
        assert!(Manifold::flat_torus(vec![vec![1.0, 2.0], vec![2.0, 4.0]]).is_err());
        assert!(Manifold::surface_of_revolution(Profile { constant: 1.0, cos: vec![1.5], sin: vec![] }).is_err());
        assert!(Manifold::flat_torus(vec![vec![1.0]]).is_err());
    }

    #[test]
    fn christoffel_of_sphere() {
        let m = Manifold::round_sphere(2.0).unwrap();
        let th = 0.7f64;
        let gamma = m.jet(&[th, 0.0]).unwrap().christoffel();
        // Γ^θ_{φφ} = −sin θ cos θ,  Γ^φ_{θφ} = cot θ
        assert!((gamma[0][(1, 1)] + th.sin() * th.cos()).abs() < 1e-13);
        assert!((gamma[1][(0, 1)] - th.cos() / th.sin()).abs() < 1e-13);
        assert!(gamma[0][(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn displacement_respects_identifications() {
        let t = Manifold::flat_torus(vec![vec![1.0, 0.0], vec![0.5, 1.0]]).unwrap();
        let a = PhasePoint::new(vec![0.1, 0.2], vec![1.0, 0.0]);
        let b = PhasePoint::new(vec![0.1 + 1.5, 0.2 + 1.0], vec![1.0, 0.0]);
        assert!(t.distance(&a, &b) < 1e-14);
        let s = Manifold::standard_torus_of_revolution();
        let a = PhasePoint::new(vec![0.1, 6.2], vec![1.0, 0.0]);
        let b = PhasePoint::new(vec![0.1 + TAU, 6.2 - 3.0 * TAU], vec![1.0, 0.0]);
        assert!(s.distance(&a, &b) < 1e-12);
    }

    #[test]
    fn sphere_charts_round_trip() {
        let r = 1.7;
        let m = Manifold::round_sphere(r).unwrap();
        let p = m.normalize(&PhasePoint::new(vec![1.1, 0.4], vec![0.3, -0.8])).unwrap();
        let (x, v) = sphere_embed(r, 2, &p);
        assert!(((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() - r).abs() < 1e-14);
        assert!(((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - 1.0).abs() < 1e-13);
        let back = sphere_chart(r, 2, &x, &v);
        assert!(m.distance(&p, &back) < 1e-13);
        for axis in 0..2 {
            let q = sphere_chart(r, axis, &x, &v);
            assert!((m.energy(&q).unwrap() - 1.0).abs() < 1e-13);
            let (x2, v2) = sphere_embed(r, axis, &q);
            for i in 0..3 {
                assert!((x2[i] - x[i]).abs() < 1e-13 && (v2[i] - v[i]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn volumes() {
        assert!((Manifold::round_sphere(1.0).unwrap().cosphere_volume() - 8.0 * PI * PI).abs() < 1e-12);
        assert!((Manifold::square_torus(2).cosphere_volume() - TAU).abs() < 1e-12);
        assert!((Manifold::square_torus(3).cosphere_volume() - 4.0 * PI).abs() < 1e-12);
        assert!((Manifold::standard_torus_of_revolution().covolume() - 8.0 * PI * PI).abs() < 1e-9);
    }

    #[test]
    fn profile_critical_points() {
        let p = Profile { constant: 2.0, cos: vec![1.0], sin: vec![] };
        let crit = p.critical_points();
        assert_eq!(crit.len(), 2);
        assert!(crit[0].abs() < 1e-12 && (crit[1] - PI).abs() < 1e-12);
    }

    #[test]
    fn manifold_json_shape() {
        let m: Manifold = serde_json::from_str(r#"{"kind":"round_sphere","params":{"radius":1.0}}"#).unwrap();
        assert_eq!(m, Manifold::round_sphere(1.0).unwrap());
        let t: Manifold = serde_json::from_str(r#"{"kind":"flat_torus","params":{"basis":[[1,0],[0,1]]}}"#).unwrap();
        assert_eq!(t, Manifold::square_torus(2));
    }
}
