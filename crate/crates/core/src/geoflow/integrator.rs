//! Dormand–Prince 5(4) integration of the geodesic flow and its variational equations.

use nalgebra::{DMatrix, DVector};

use super::frame::{chart_to_frame, frame_to_chart, SasakiFrame};
use super::manifold::hamilton_jacobian;
use super::{GeoError, Manifold, PhasePoint};
use crate::defaults::{RK_ATOL, RK_RTOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub atol: f64,
    pub rtol: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions { atol: RK_ATOL, rtol: RK_RTOL, max_step: f64::INFINITY, min_step: 1e-14, max_steps: 10_000_000 }
    }
}

impl FlowOptions {
    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

type Rhs<'a> = dyn FnMut(&[f64], &mut [f64]) -> Result<(), GeoError> + 'a;
type AfterStep<'a> = dyn FnMut(f64, f64, &mut [f64]) -> Result<(), GeoError> + 'a;

/// Integrates `y' = f(y)` from 0 to `t_end`. `after_step(t, h, y)` may modify `y`.
fn dopri5(rhs: &mut Rhs, y: &mut [f64], t_end: f64, opts: &FlowOptions, after_step: &mut AfterStep) -> Result<usize, GeoError> {
    let dim = y.len();
    let mut k = vec![vec![0.0; dim]; 7];
    let mut stage = vec![0.0; dim];
    let mut y5 = vec![0.0; dim];
    let mut t = 0.0;
    let mut h = (1e-2f64).min(opts.max_step).min(t_end);
    let mut steps = 0;
    while t < t_end {
        if steps >= opts.max_steps {
            return Err(GeoError::StepUnderflow { t });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        rhs(y, &mut k[0])?;
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += h * A[s][j] * kj[i];
                }
                stage[i] = acc;
            }
            rhs(&stage, &mut k[s])?;
        }
        // the last stage point is the fifth-order solution
        y5.copy_from_slice(&stage);
        let mut err = 0.0;
        for i in 0..dim {
            let mut e = 0.0;
            for (s, ks) in k.iter().enumerate() {
                e += E[s] * ks[i];
            }
            let sc = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
            err += (h * e / sc).powi(2);
        }
        let err = (err / dim as f64).sqrt();
        if !err.is_finite() {
            h *= 0.2;
        } else if err <= 1.0 {
            t = if last { t_end } else { t + h };
            y.copy_from_slice(&y5);
            after_step(t, h, y)?;
            steps += 1;
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * factor).min(opts.max_step);
            continue;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
        if h < opts.min_step * (1.0 + t.abs()) {
            return Err(GeoError::StepUnderflow { t });
        }
    }
    Ok(steps)
}

/// Trajectory samples at accepted steps together with energy diagnostics.
#[derive(Debug, Clone)]
pub struct FlowPath {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    /// Largest `||ξ|²_g − 1|` observed before renormalization.
    pub max_energy_error: f64,
    /// Summed pre-renormalization energy errors divided by the elapsed time.
    pub energy_drift_rate: f64,
}

impl FlowPath {
    pub fn end(&self) -> &PhasePoint {
        self.points.last().expect("path has the initial point")
    }
}

struct EnergyTrack {
    max_err: f64,
    sum_err: f64,
}

fn renormalize(manifold: &Manifold, n: usize, y: &mut [f64], track: &mut EnergyTrack) -> Result<(), GeoError> {
    let jet = manifold.jet(&y[..n])?;
    let xi = DVector::from_column_slice(&y[n..2 * n]);
    let e = xi.dot(&(&jet.ginv * &xi));
    let dev = (e - 1.0).abs();
    track.max_err = track.max_err.max(dev);
    track.sum_err += dev;
    let s = e.sqrt();
    for v in &mut y[n..2 * n] {
        *v /= s;
    }
    Ok(())
}

fn flow_rhs(manifold: &Manifold, n: usize, y: &[f64], out: &mut [f64]) -> Result<(), GeoError> {
    let jet = manifold.jet(&y[..n])?;
    let xi = DVector::from_column_slice(&y[n..2 * n]);
    let xdot = &jet.ginv * &xi;
    for a in 0..n {
        out[a] = xdot[a];
        out[n + a] = -0.5 * xi.dot(&(&jet.d[a] * &xi));
    }
    Ok(())
}

fn check_start(manifold: &Manifold, p0: &PhasePoint, t: f64) -> Result<(), GeoError> {
    if t < 0.0 || !t.is_finite() {
        return Err(GeoError::NegativeTime(t));
    }
    let n = manifold.dim();
    if p0.x.len() != n || p0.xi.len() != n {
        return Err(GeoError::Dimension { expected: n, got: p0.x.len().min(p0.xi.len()) });
    }
    manifold.jet(&p0.x).map(|_| ())
}

/// Flows `p0` for time `t`, renormalizing `|ξ|_g = 1` after every accepted step.
pub fn integrate_flow(manifold: &Manifold, p0: &PhasePoint, t: f64, opts: &FlowOptions) -> Result<FlowPath, GeoError> {
    check_start(manifold, p0, t)?;
    let n = manifold.dim();
    let mut y = p0.to_state();
    let mut times = vec![0.0];
    let mut points = vec![p0.clone()];
    let mut track = EnergyTrack { max_err: 0.0, sum_err: 0.0 };
    if t > 0.0 {
        dopri5(
            &mut |y, out| flow_rhs(manifold, n, y, out),
            &mut y,
            t,
            opts,
            &mut |tt, _h, y| {
                renormalize(manifold, n, y, &mut track)?;
                times.push(tt);
                points.push(PhasePoint::from_state(y, n));
                Ok(())
            },
        )?;
    }
    let rate = if t > 0.0 { track.sum_err / t } else { 0.0 };
    Ok(FlowPath { times, points, max_energy_error: track.max_err, energy_drift_rate: rate })
}

/// Endpoint of the flow together with `dGᵗ` expressed in Sasaki frames.
#[derive(Debug, Clone)]
pub struct FlowJet {
    pub start: PhasePoint,
    pub endpoint: PhasePoint,
    pub time: f64,
    /// `(2n−1) × (2n−1)`: column `j` is the image of start-frame vector `j` in the end frame.
    pub monodromy: DMatrix<f64>,
    pub start_frame: SasakiFrame,
    pub end_frame: SasakiFrame,
    pub max_energy_error: f64,
}

impl FlowJet {
    /// `|dGᵗ X − X|` for the flow direction `X` (frame vector 0).
    pub fn flow_direction_residual(&self) -> f64 {
        let m = &self.monodromy;
        (0..m.nrows())
            .map(|i| (m[(i, 0)] - if i == 0 { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    /// `‖Pᵀ Ω P − Ω‖_max` for the normal block `P` and the Wronskian form `Ω`.
    pub fn symplectic_residual(&self) -> f64 {
        let d = self.monodromy.nrows();
        let p = self.monodromy.view((1, 1), (d - 1, d - 1)).into_owned();
        symplectic_defect(&p)
    }
}

pub(crate) fn wronskian_form(m: usize) -> DMatrix<f64> {
    let mut o = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        o[(i, m + i)] = 1.0;
        o[(m + i, i)] = -1.0;
    }
    o
}

pub(crate) fn symplectic_defect(p: &DMatrix<f64>) -> f64 {
    let o = wronskian_form(p.nrows() / 2);
    (p.transpose() * &o * p - &o).abs().max()
}

/// Flows `p0` and the `2n − 1` frame directions for time `t`.
pub fn integrate_monodromy(manifold: &Manifold, p0: &PhasePoint, t: f64, opts: &FlowOptions) -> Result<FlowJet, GeoError> {
    check_start(manifold, p0, t)?;
    let n = manifold.dim();
    let start_frame = SasakiFrame::at(manifold, p0)?;
    let m = start_frame.dim();
    let mut y = p0.to_state();
    for j in 0..m {
        let mut c = vec![0.0; m];
        c[j] = 1.0;
        y.extend(frame_to_chart(&start_frame, &c));
    }
    let mut track = EnergyTrack { max_err: 0.0, sum_err: 0.0 };
    if t > 0.0 {
        dopri5(
            &mut |y, out| {
                let jet = manifold.jet(&y[..n])?;
                let xi = DVector::from_column_slice(&y[n..2 * n]);
                let xdot = &jet.ginv * &xi;
                for a in 0..n {
                    out[a] = xdot[a];
                    out[n + a] = -0.5 * xi.dot(&(&jet.d[a] * &xi));
                }
                let df = hamilton_jacobian(&jet, &xi);
                for j in 0..m {
                    let col = DVector::from_column_slice(&y[2 * n * (j + 1)..2 * n * (j + 2)]);
                    let d = &df * col;
                    out[2 * n * (j + 1)..2 * n * (j + 2)].copy_from_slice(d.as_slice());
                }
                Ok(())
            },
            &mut y,
            t,
            opts,
            &mut |_, _, y| renormalize(manifold, n, y, &mut track),
        )?;
    }
    let endpoint = PhasePoint::from_state(&y, n);
    let end_frame = SasakiFrame::at(manifold, &endpoint)?;
    let mut monodromy = DMatrix::zeros(m, m);
    for j in 0..m {
        let col = chart_to_frame(&end_frame, &y[2 * n * (j + 1)..2 * n * (j + 2)]);
        for (i, v) in col.into_iter().enumerate() {
            monodromy[(i, j)] = v;
        }
    }
    Ok(FlowJet {
        start: p0.clone(),
        endpoint,
        time: t,
        monodromy,
        start_frame,
        end_frame,
        max_energy_error: track.max_err,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{PI, TAU};

    use super::*;
    use crate::geoflow::Profile;

    #[test]
    fn zero_time_is_exact() {
        let s = Manifold::round_sphere(1.0).unwrap();
        let p = s.normalize(&PhasePoint::new(vec![1.0, 2.0], vec![0.3, 0.5])).unwrap();
        let path = integrate_flow(&s, &p, 0.0, &FlowOptions::default()).unwrap();
        assert_eq!(path.end(), &p);
        let jet = integrate_monodromy(&s, &p, 0.0, &FlowOptions::default()).unwrap();
        assert!((jet.monodromy - DMatrix::identity(3, 3)).abs().max() < 1e-14);
    }

    #[test]
    fn negative_time_rejected() {
        let t = Manifold::square_torus(2);
        let p = PhasePoint::new(vec![0.0, 0.0], vec![1.0, 0.0]);
        assert!(matches!(integrate_flow(&t, &p, -1.0, &FlowOptions::default()), Err(GeoError::NegativeTime(_))));
    }

    #[test]
    fn torus_straight_line() {
        let t = Manifold::square_torus(2);
        let p = PhasePoint::new(vec![0.0, 0.0], vec![1.0, 0.0]);
        let end = integrate_flow(&t, &p, 1.0, &FlowOptions::default()).unwrap();
        assert!((end.end().x[0] - 1.0).abs() < 1e-13 && end.end().x[1].abs() < 1e-15);
        assert_eq!(end.end().xi, vec![1.0, 0.0]);
        assert!(t.distance(&p, end.end()) < 1e-13);
    }

    #[test]
    fn sphere_great_circle_closes() {
        let s = Manifold::round_sphere(1.0).unwrap();
        let p = s.normalize(&PhasePoint::new(vec![1.2, 0.3], vec![0.4, 0.8])).unwrap();
        let path = integrate_flow(&s, &p, TAU, &FlowOptions::default()).unwrap();
        assert!(s.distance(&p, path.end()) <= 1e-8, "{}", s.distance(&p, path.end()));
        assert!(path.max_energy_error <= 1e-10);
        assert!(path.energy_drift_rate <= 1e-10);
    }

    #[test]
    fn clairaut_invariant_conserved() {
        let r = Manifold::standard_torus_of_revolution();
        let p = r.normalize(&PhasePoint::new(vec![0.5, 0.0], vec![0.7, 1.6])).unwrap();
        let path = integrate_flow(&r, &p, 20.0, &FlowOptions::default()).unwrap();
        let prof = Profile { constant: 2.0, cos: vec![1.0], sin: vec![] };
        let clairaut = |q: &PhasePoint| {
            let f = prof.eval(q.x[0]).0;
            // f² θ̇ with θ̇ = ξ_θ / f²
            f * f * (q.xi[1] / (f * f))
        };
        let c0 = clairaut(&p);
        for q in &path.points {
            assert!((clairaut(q) - c0).abs() <= 1e-9);
        }
    }

    #[test]
    fn torus_monodromy_block_form() {
        let t = Manifold::square_torus(2);
        let p = PhasePoint::new(vec![0.2, 0.1], vec![0.6, 0.8]);
        let tau = 1.7;
        let jet = integrate_monodromy(&t, &p, tau, &FlowOptions::default()).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, tau, 0.0, 0.0, 1.0]);
        assert!((jet.monodromy - expect).abs().max() <= 1e-10);
    }

    #[test]
    fn sphere_monodromy_is_rotation() {
        let s = Manifold::round_sphere(1.0).unwrap();
        let p = PhasePoint::new(vec![PI / 2.0, 0.0], vec![0.0, 1.0]);
        for tau in [0.5, 2.0, TAU] {
            let jet = integrate_monodromy(&s, &p, tau, &FlowOptions::default()).unwrap();
            let (c, sn) = (tau.cos(), tau.sin());
            let expect = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, c, sn, 0.0, -sn, c]);
            assert!((&jet.monodromy - expect).abs().max() <= 1e-6, "τ = {tau}");
            assert!(jet.flow_direction_residual() <= 1e-6);
            assert!(jet.symplectic_residual() <= 1e-6);
        }
    }

    #[test]
    fn monodromy_matches_finite_differences() {
        let cases = [
            (Manifold::square_torus(2), PhasePoint::new(vec![0.1, 0.2], vec![0.6, 0.8]), 2.0),
            (Manifold::round_sphere(1.5).unwrap(), PhasePoint::new(vec![1.0, 0.2], vec![0.5, 0.9]), 3.0),
            (Manifold::standard_torus_of_revolution(), PhasePoint::new(vec![2.5, 0.0], vec![0.6, 1.1]), 4.0),
        ];
        let opts = FlowOptions::default();
        for (m, p, tau) in cases {
            let p = m.normalize(&p).unwrap();
            let jet = integrate_monodromy(&m, &p, tau, &opts).unwrap();
            let delta = 1e-6;
            let perturbed = |j: usize, sign: f64| {
                let mut c = vec![0.0; jet.monodromy.nrows()];
                c[j] = sign * delta;
                let d = frame_to_chart(&jet.start_frame, &c);
                let q = PhasePoint::new(
                    (0..2).map(|i| p.x[i] + d[i]).collect(),
                    (0..2).map(|i| p.xi[i] + d[2 + i]).collect(),
                );
                let q = m.normalize(&q).unwrap();
                integrate_flow(&m, &q, tau, &opts).unwrap().end().clone()
            };
            for j in 0..jet.monodromy.ncols() {
                // central differences cancel the second-order term
                let (plus, minus) = (perturbed(j, 1.0), perturbed(j, -1.0));
                let fd: Vec<f64> = chart_to_frame(&jet.end_frame, &m.displacement(&minus, &plus))
                    .into_iter()
                    .map(|v| v / 2.0)
                    .collect();
                for (i, v) in fd.iter().enumerate() {
                    assert!((v / delta - jet.monodromy[(i, j)]).abs() <= 1e-4, "{m:?} column {j} row {i}: {} vs {}", v / delta, jet.monodromy[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn chart_exit_reported() {
        let s = Manifold::round_sphere(1.0).unwrap();
        let p = PhasePoint::new(vec![PI / 2.0, 0.0], vec![1.0, 0.0]);
        assert!(matches!(integrate_flow(&s, &p, 3.0, &FlowOptions::default()), Err(GeoError::ChartExit(_))));
    }
}
