//! Newton projection onto `Fix(G^τ)` and continuation inside it.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};

use super::frame::{chart_to_frame, frame_to_chart, SasakiFrame};
use super::integrator::{integrate_monodromy, FlowJet, FlowOptions};
use super::manifold::{sphere_chart, sphere_embed};
use super::{GeoError, Manifold, PhasePoint};
use crate::defaults::{CONTINUATION_STEP, SVD_RANK_TOL};

/// Residual below which a point counts as fixed by `G^τ` during projection.
const PROJECTION_TOL: f64 = 1e-9;
const PROJECTION_ITERS: usize = 25;

/// Minimum-norm solution of `a x = b`, discarding singular values below `cutoff`.
pub(crate) fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>, cutoff: f64) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested");
    let v_t = svd.v_t.as_ref().expect("requested");
    let mut x = DVector::zeros(a.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            let coeff = u.column(i).dot(b) / s;
            x += v_t.row(i).transpose() * coeff;
        }
    }
    x
}

pub(crate) fn shift(p: &PhasePoint, delta: &[f64]) -> PhasePoint {
    let n = p.dim();
    PhasePoint {
        x: (0..n).map(|i| p.x[i] + delta[i]).collect(),
        xi: (0..n).map(|i| p.xi[i] + delta[n + i]).collect(),
    }
}

/// Closure residual `G^τ ζ − ζ` in the frame at `ζ`.
pub(crate) fn closure_residual(manifold: &Manifold, jet: &FlowJet) -> DVector<f64> {
    DVector::from_vec(chart_to_frame(&jet.start_frame, &manifold.displacement(&jet.start, &jet.endpoint)))
}

/// Sasaki length of the chart displacement from `a` to `b`, measured at `a`.
pub fn sasaki_distance(manifold: &Manifold, a: &PhasePoint, b: &PhasePoint) -> Result<f64, GeoError> {
    let frame = SasakiFrame::at(manifold, a)?;
    Ok(chart_to_frame(&frame, &manifold.displacement(a, b)).iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// A point of `Fix(G^τ)` reached from a nearby point by minimum-norm Newton steps.
#[derive(Debug, Clone)]
pub struct Projection {
    pub point: PhasePoint,
    /// Sasaki length of the total correction.
    pub correction: f64,
    /// Flow jet of the projected point over time `τ`.
    pub jet: FlowJet,
}

/// Newton iteration on `G^τ ζ = ζ` with `τ` held fixed.
pub fn project_to_fixed_set(
    manifold: &Manifold,
    p: &PhasePoint,
    tau: f64,
    flow: &FlowOptions,
) -> Result<Projection, GeoError> {
    let start = manifold.normalize(p)?;
    let mut q = start.clone();
    let mut last = f64::INFINITY;
    for _ in 0..PROJECTION_ITERS {
        let jet = integrate_monodromy(manifold, &q, tau, flow)?;
        let r = closure_residual(manifold, &jet);
        let rn = r.norm();
        if rn <= PROJECTION_TOL {
            let correction = sasaki_distance(manifold, &start, &q)?;
            return Ok(Projection { point: q, correction, jet });
        }
        if rn > 0.9 * last && last < 1e-6 {
            return Err(GeoError::NewtonDiverged(rn));
        }
        last = rn;
        let d = jet.monodromy.nrows();
        let a = &jet.monodromy - DMatrix::identity(d, d);
        let mut step = min_norm_solve(&a, &(-r), SVD_RANK_TOL);
        let sn = step.norm();
        if sn > 0.25 {
            step *= 0.25 / sn;
        }
        q = manifold.normalize(&shift(&q, &frame_to_chart(&jet.start_frame, step.as_slice())))?;
    }
    Err(GeoError::NewtonDiverged(last))
}

/// Orthonormal frame of `SO(3)` attached to a unit covector on the round sphere:
/// columns `X/r`, `V`, `X/r × V`.
fn sphere_frame(radius: f64, p: &PhasePoint) -> Matrix3<f64> {
    let (x, v) = sphere_embed(radius, 2, p);
    let x = Vector3::from(x) / radius;
    let v = Vector3::from(v).normalize();
    let v = (v - x * x.dot(&v)).normalize();
    Matrix3::from_columns(&[x, v, x.cross(&v)])
}

/// Point of the sphere path at parameter `s`, in the polar chart best suited to
/// its great circle, together with that chart's pole axis.
fn sphere_path_point(radius: f64, ra: &Matrix3<f64>, axis_angle: &Vector3<f64>, s: f64) -> (usize, PhasePoint) {
    let r = ra * Rotation3::new(axis_angle * s).matrix();
    let x: [f64; 3] = (r.column(0) * radius).into();
    let v: [f64; 3] = r.column(1).into();
    let normal = r.column(2);
    let axis = (0..3).max_by(|&i, &j| normal[i].abs().total_cmp(&normal[j].abs())).unwrap();
    (axis, sphere_chart(radius, axis, &x, &v))
}

/// Whether `a` and `b` lie in one connected piece of `Fix(G^τ)`: points along a
/// path from `a` to `b` are projected onto the fixed set in steps of
/// [`CONTINUATION_STEP`], failing as soon as a correction exceeds half a step.
///
/// Flat tori and surfaces of revolution use the straight chart path. The round
/// sphere uses the rotation path in `SO(3) ≅ S*S²`, each point expressed in
/// whichever of three polar charts keeps its great circle farthest from the poles.
pub fn connected_by_continuation(
    manifold: &Manifold,
    a: &PhasePoint,
    b: &PhasePoint,
    tau: f64,
    flow: &FlowOptions,
) -> bool {
    match manifold {
        Manifold::RoundSphere { radius } => {
            let ra = sphere_frame(*radius, a);
            let rb = sphere_frame(*radius, b);
            let delta = Rotation3::from_matrix_unchecked(ra.transpose() * rb);
            let axis_angle = delta.scaled_axis();
            let length = axis_angle.norm() * radius.max(1.0);
            let steps = (length / CONTINUATION_STEP).ceil().max(1.0) as usize;
            let step_len = length / steps as f64;
            (1..=steps).all(|i| {
                let (_, target) = sphere_path_point(*radius, &ra, &axis_angle, i as f64 / steps as f64);
                matches!(project_to_fixed_set(manifold, &target, tau, flow),
                    Ok(p) if p.correction <= 0.5 * step_len.max(CONTINUATION_STEP))
            })
        }
        _ => {
            let disp = manifold.displacement(a, b);
            // the frame drops the radial covector component, so the chart length also bounds the path
            let Ok(length) = sasaki_distance(manifold, a, b).map(|d| d.max(manifold.distance(a, b))) else {
                return false;
            };
            let steps = (length / CONTINUATION_STEP).ceil().max(1.0) as usize;
            let step_len = length / steps as f64;
            (1..=steps).all(|i| {
                let s = i as f64 / steps as f64;
                let scaled: Vec<f64> = disp.iter().map(|d| d * s).collect();
                let Ok(target) = manifold.normalize(&shift(a, &scaled)) else { return false };
                matches!(project_to_fixed_set(manifold, &target, tau, flow),
                    Ok(p) if p.correction <= 0.5 * step_len.max(CONTINUATION_STEP))
            })
        }
    }
}

/// Probes every frame direction at a fixed point: column `j` holds the frame
/// coordinates of `(Proj(ζ + ε f_j) − ζ) / ε` with `ε` one continuation step.
/// Its numerical rank estimates the dimension of the fixed component.
pub fn fixed_set_tangent_probe(
    manifold: &Manifold,
    p: &PhasePoint,
    tau: f64,
    flow: &FlowOptions,
) -> Result<DMatrix<f64>, GeoError> {
    let frame = SasakiFrame::at(manifold, p)?;
    let d = frame.dim();
    let eps = CONTINUATION_STEP;
    let mut probe = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut c = vec![0.0; d];
        c[j] = eps;
        let target = manifold.normalize(&shift(p, &frame_to_chart(&frame, &c)))?;
        if let Ok(proj) = project_to_fixed_set(manifold, &target, tau, flow) {
            let moved = chart_to_frame(&frame, &manifold.displacement(p, &proj.point));
            for (i, v) in moved.into_iter().enumerate() {
                probe[(i, j)] = v / eps;
            }
        }
    }
    Ok(probe)
}

/// Number of singular values of the probe matrix above one half.
pub fn probe_dimension(probe: &DMatrix<f64>) -> usize {
    probe.clone().svd(false, false).singular_values.iter().filter(|&&s| s > 0.5).count()
}

/// One point of a traced one-parameter family of closed orbits.
#[derive(Debug, Clone)]
pub struct FamilyPoint {
    pub point: PhasePoint,
    /// Unit tangent of the family at `point`, orthogonal to the flow, in the frame at `point`.
    pub tangent: DVector<f64>,
    /// Monodromy over the period at `point`.
    pub monodromy: DMatrix<f64>,
}

/// Traces a closed curve through a two-dimensional fixed component, transverse
/// to the flow, with steps of [`CONTINUATION_STEP`], until it returns to the
/// orbit of `p` (tested with `returned`). Gives up after `max_steps`.
pub fn trace_family(
    manifold: &Manifold,
    p: &PhasePoint,
    tau: f64,
    flow: &FlowOptions,
    max_steps: usize,
    returned: &dyn Fn(&PhasePoint) -> bool,
) -> Result<Vec<FamilyPoint>, GeoError> {
    let tangent_at = |q: &PhasePoint, prev: Option<&DVector<f64>>| -> Result<DVector<f64>, GeoError> {
        let probe = fixed_set_tangent_probe(manifold, q, tau, flow)?;
        let svd = probe.svd(true, false);
        let u = svd.u.expect("requested");
        // strongest tangent direction orthogonal to the flow
        let mut best: Option<(f64, DVector<f64>)> = None;
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s <= 0.5 {
                continue;
            }
            let mut w = u.column(i).into_owned();
            w[0] = 0.0;
            let len = w.norm();
            if len > 0.5 && best.as_ref().is_none_or(|(l, _)| len > *l) {
                best = Some((len, w / len));
            }
        }
        let (_, mut w) = best.ok_or(GeoError::DegenerateFrame(0.0))?;
        if let Some(prev) = prev {
            if w.dot(prev) < 0.0 {
                w = -w;
            }
        }
        Ok(w)
    };
    let start = project_to_fixed_set(manifold, p, tau, flow)?;
    let mut cur = start.point.clone();
    let mut w = tangent_at(&cur, None)?;
    let mut out = vec![FamilyPoint { point: cur.clone(), tangent: w.clone(), monodromy: start.jet.monodromy }];
    for step in 1..=max_steps {
        let frame = SasakiFrame::at(manifold, &cur)?;
        let c: Vec<f64> = w.iter().map(|v| v * CONTINUATION_STEP).collect();
        let target = manifold.normalize(&shift(&cur, &frame_to_chart(&frame, &c)))?;
        let proj = project_to_fixed_set(manifold, &target, tau, flow)?;
        if proj.correction > 0.5 * CONTINUATION_STEP {
            return Err(GeoError::NewtonDiverged(proj.correction));
        }
        cur = proj.point;
        if step > 2 && returned(&cur) {
            return Ok(out);
        }
        w = tangent_at(&cur, Some(&w))?;
        out.push(FamilyPoint { point: cur.clone(), tangent: w.clone(), monodromy: proj.jet.monodromy });
    }
    Err(GeoError::NewtonDiverged(f64::NAN))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{PI, TAU};

    use super::*;

    #[test]
    fn min_norm_solution() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        let x = min_norm_solve(&a, &DVector::from_vec(vec![3.0, 4.0]), 1e-12);
        assert!((x - DVector::from_vec(vec![3.0, 2.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn projection_onto_torus_family() {
        let t = Manifold::square_torus(2);
        let p = PhasePoint::new(vec![0.3, 0.1], vec![0.999, 0.02]);
        let proj = project_to_fixed_set(&t, &p, 1.0, &FlowOptions::default()).unwrap();
        let q = &proj.point;
        assert!((q.xi[0] - 1.0).abs() < 1e-9 && q.xi[1].abs() < 1e-9);
        assert!(proj.correction < 0.03);
    }

    #[test]
    fn torus_components_by_direction() {
        let t = Manifold::square_torus(2);
        let f = FlowOptions::default();
        let a = PhasePoint::new(vec![0.0, 0.0], vec![1.0, 0.0]);
        let b = PhasePoint::new(vec![0.4, 0.7], vec![1.0, 0.0]);
        let c = PhasePoint::new(vec![0.0, 0.0], vec![0.0, 1.0]);
        let d = PhasePoint::new(vec![0.0, 0.0], vec![-1.0, 0.0]);
        assert!(connected_by_continuation(&t, &a, &b, 1.0, &f));
        assert!(!connected_by_continuation(&t, &a, &c, 1.0, &f));
        assert!(!connected_by_continuation(&t, &a, &d, 1.0, &f));
        let probe = fixed_set_tangent_probe(&t, &a, 1.0, &f).unwrap();
        assert_eq!(probe_dimension(&probe), 2);
    }

    #[test]
    fn sphere_is_one_component() {
        let s = Manifold::round_sphere(1.0).unwrap();
        let f = FlowOptions::default();
        let a = PhasePoint::new(vec![PI / 2.0, 0.0], vec![0.0, 1.0]);
        let b = PhasePoint::new(vec![PI / 2.0, 0.0], vec![0.0, -1.0]);
        assert!(connected_by_continuation(&s, &a, &b, TAU, &f));
        assert_eq!(probe_dimension(&fixed_set_tangent_probe(&s, &a, TAU, &f).unwrap()), 3);
    }

    #[test]
    fn revolution_equator_is_isolated() {
        let r = Manifold::standard_torus_of_revolution();
        let f = FlowOptions::default();
        let eq = PhasePoint::new(vec![PI, 0.0], vec![0.0, 1.0]);
        assert_eq!(probe_dimension(&fixed_set_tangent_probe(&r, &eq, TAU, &f).unwrap()), 1);
        let meridian = PhasePoint::new(vec![0.0, 0.0], vec![1.0, 0.0]);
        assert!(!connected_by_continuation(&r, &eq, &meridian, TAU, &f));
        assert_eq!(probe_dimension(&fixed_set_tangent_probe(&r, &meridian, TAU, &f).unwrap()), 2);
        let shifted = PhasePoint::new(vec![0.0, 0.5], vec![1.0, 0.0]);
        assert!(connected_by_continuation(&r, &meridian, &shifted, TAU, &f));
    }
}
