//! Closed-orbit search: symmetric and grid seeds, Newton refinement on `(ζ, T)`,
//! prime-period detection and deduplication.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::continuation::{closure_residual, connected_by_continuation, min_norm_solve, shift};
use super::frame::frame_to_chart;
use super::integrator::{integrate_flow, integrate_monodromy, FlowOptions};
use super::poincare::{det_i_minus_p, poincare_map, DetReport, PoincareBlocks};
use super::{GeoError, Manifold, PhasePoint};
use crate::defaults::{CLOSURE_TOL, MIN_PERIOD, ORBIT_MERGE_TOL, SVD_RANK_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    /// Base points per periodic coordinate (0 disables grid seeds).
    pub grid: usize,
    /// Initial directions per base point.
    pub directions: usize,
    /// Chart distance below which a sampled return becomes a Newton candidate.
    pub near_return: f64,
    pub max_candidates_per_seed: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub closure_tol: f64,
    pub merge_tol: f64,
    pub min_period: f64,
    /// Largest step between trajectory samples.
    pub sample_step: f64,
    pub flow: FlowOptions,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            grid: 4,
            directions: 8,
            near_return: 0.05,
            max_candidates_per_seed: 6,
            newton_tol: 1e-10,
            max_newton: 40,
            closure_tol: CLOSURE_TOL,
            merge_tol: ORBIT_MERGE_TOL,
            min_period: MIN_PERIOD,
            sample_step: 0.02,
            flow: FlowOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClosedOrbit {
    pub start: PhasePoint,
    /// `L_γ`
    pub length: f64,
    /// `L_γ^#`
    pub prime_period: f64,
    /// `L_γ / L_γ^#`
    pub multiplicity: usize,
    pub monodromy: DMatrix<f64>,
    pub poincare: PoincareBlocks,
    pub det: DetReport,
    /// `|G^L(start) − start|` in chart coordinates modulo deck identifications.
    pub closure_error: f64,
}

impl ClosedOrbit {
    /// Builds the orbit record by integrating the variational equations over `length`.
    pub fn new(
        manifold: &Manifold,
        start: PhasePoint,
        length: f64,
        prime_period: f64,
        flow: &FlowOptions,
    ) -> Result<Self, GeoError> {
        let jet = integrate_monodromy(manifold, &start, length, flow)?;
        let poincare = poincare_map(&jet.monodromy)?;
        let det = det_i_minus_p(&poincare);
        let closure_error = manifold.distance(&start, &jet.endpoint);
        Ok(ClosedOrbit {
            start,
            length,
            prime_period,
            multiplicity: (length / prime_period).round() as usize,
            monodromy: jet.monodromy,
            poincare,
            det,
            closure_error,
        })
    }

    pub fn det_i_minus_p(&self) -> f64 {
        self.det.direct
    }
}

/// Gauss–Newton on `G^T ζ − ζ = 0` over `(ζ, T)` with Jacobian `[M − I | e₀]`.
pub fn refine_closed_orbit(
    manifold: &Manifold,
    p: &PhasePoint,
    t: f64,
    opts: &SearchOptions,
) -> Result<(PhasePoint, f64), GeoError> {
    let mut q = manifold.normalize(p)?;
    let mut t = t;
    let mut best = f64::INFINITY;
    for _ in 0..opts.max_newton {
        if !(t >= opts.min_period) {
            return Err(GeoError::NewtonDiverged(best));
        }
        let jet = integrate_monodromy(manifold, &q, t, &opts.flow)?;
        let r = closure_residual(manifold, &jet);
        let rn = r.norm();
        best = best.min(rn);
        if rn <= opts.newton_tol {
            return Ok((q, t));
        }
        let d = jet.monodromy.nrows();
        let mut jac = DMatrix::zeros(d, d + 1);
        jac.view_mut((0, 0), (d, d)).copy_from(&(&jet.monodromy - DMatrix::identity(d, d)));
        jac[(0, d)] = 1.0;
        let mut step = min_norm_solve(&jac, &(-&r), SVD_RANK_TOL);
        let sn = step.norm();
        if sn > 0.3 {
            step *= 0.3 / sn;
        }
        if sn < 1e-14 {
            break;
        }
        q = manifold.normalize(&shift(&q, &frame_to_chart(&jet.start_frame, &step.as_slice()[..d])))?;
        t += step[d];
    }
    let end = integrate_flow(manifold, &q, t, &opts.flow)?;
    let err = manifold.distance(&q, end.end());
    if err <= opts.closure_tol {
        Ok((q, t))
    } else {
        Err(GeoError::NewtonDiverged(best))
    }
}

/// Smallest `L/k` at which the orbit through `p` closes; returns `(L/k, k)`.
fn prime_period(manifold: &Manifold, p: &PhasePoint, length: f64, opts: &SearchOptions) -> Result<(f64, usize), GeoError> {
    let kmax = (length / opts.min_period).floor() as usize;
    if kmax < 2 {
        return Ok((length, 1));
    }
    let path = integrate_flow(manifold, p, length, &opts.flow.with_max_step(opts.sample_step))?;
    let dist: Vec<f64> = path.points.iter().map(|q| manifold.distance(p, q)).collect();
    for k in (2..=kmax).rev() {
        let sub = length / k as f64;
        let i = path.times.partition_point(|&t| t < sub);
        let screened = [i.saturating_sub(1), i.min(path.times.len() - 1)]
            .iter()
            .any(|&j| dist[j] <= 4.0 * (path.times[j] - sub).abs() + 1e-6);
        if !screened {
            continue;
        }
        let end = integrate_flow(manifold, p, sub, &opts.flow)?;
        if manifold.distance(p, end.end()) <= opts.closure_tol {
            return Ok((sub, k));
        }
    }
    Ok((length, 1))
}

/// Seeds whose orbits are known in closed form.
fn symmetric_candidates(manifold: &Manifold, l_max: f64) -> Vec<(PhasePoint, f64)> {
    let mut out = Vec::new();
    match manifold {
        Manifold::FlatTorus { .. } => {
            let b = manifold.lattice().expect("torus");
            let n = b.nrows();
            let binv = b.clone().try_inverse().expect("nonsingular lattice");
            let bounds: Vec<i64> = (0..n).map(|i| (l_max * binv.row(i).norm()).floor() as i64).collect();
            let mut c = bounds.iter().map(|&x| -x).collect::<Vec<i64>>();
            loop {
                if c.iter().any(|&v| v != 0) {
                    let coeffs = DVector::from_iterator(n, c.iter().map(|&v| v as f64));
                    let v = &b * coeffs;
                    let len = v.norm();
                    if len <= l_max * (1.0 + 1e-12) {
                        out.push((PhasePoint::new(vec![0.0; n], (v / len).iter().copied().collect()), len));
                    }
                }
                let mut i = 0;
                while i < n {
                    c[i] += 1;
                    if c[i] <= bounds[i] {
                        break;
                    }
                    c[i] = -bounds[i];
                    i += 1;
                }
                if i == n {
                    break;
                }
            }
        }
        Manifold::RoundSphere { radius } => {
            let l = TAU * radius;
            if l <= l_max * (1.0 + 1e-12) {
                for s in [1.0, -1.0] {
                    out.push((PhasePoint::new(vec![TAU / 4.0, 0.0], vec![0.0, s * radius]), l));
                }
            }
        }
        Manifold::SurfaceOfRevolution { profile } => {
            for u in profile.critical_points() {
                let f = profile.eval(u).0;
                let l = TAU * f;
                if l <= l_max * (1.0 + 1e-12) {
                    for s in [1.0, -1.0] {
                        out.push((PhasePoint::new(vec![u, 0.0], vec![0.0, s * f]), l));
                    }
                }
            }
            if TAU <= l_max * (1.0 + 1e-12) {
                for s in [1.0, -1.0] {
                    out.push((PhasePoint::new(vec![0.0, 0.0], vec![s, 0.0]), TAU));
                }
            }
        }
    }
    out
}

fn grid_seeds(manifold: &Manifold, opts: &SearchOptions) -> Vec<PhasePoint> {
    let (g, dirs) = (opts.grid, opts.directions);
    if g == 0 || dirs == 0 {
        return Vec::new();
    }
    let angle = |j: usize| TAU * (j as f64 + 0.5) / dirs as f64;
    let mut out = Vec::new();
    match manifold {
        Manifold::FlatTorus { .. } => {
            let b = manifold.lattice().expect("torus");
            let n = b.nrows();
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let total = g.pow(n as u32);
            for cell in 0..total {
                let coeffs = DVector::from_iterator(n, (0..n).map(|i| ((cell / g.pow(i as u32)) % g) as f64 / g as f64));
                let x: Vec<f64> = (&b * coeffs).iter().copied().collect();
                for j in 0..dirs {
                    let xi: Vec<f64> = if n == 2 {
                        vec![angle(j).cos(), angle(j).sin()]
                    } else {
                        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                        let len = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
                        v.into_iter().map(|a| a / len).collect()
                    };
                    out.push(PhasePoint::new(x.clone(), xi));
                }
            }
        }
        Manifold::RoundSphere { radius } => {
            for i in 0..g {
                let th = TAU / 2.0 * (i as f64 + 0.5) / g as f64;
                for k in 0..g {
                    let ph = TAU * k as f64 / g as f64;
                    for j in 0..dirs {
                        let a = angle(j);
                        let xi = vec![radius * a.cos(), radius * th.sin() * a.sin()];
                        if xi[1].abs() / radius >= 0.3 {
                            out.push(PhasePoint::new(vec![th, ph], xi));
                        }
                    }
                }
            }
        }
        Manifold::SurfaceOfRevolution { profile } => {
            for i in 0..g {
                let u = TAU * i as f64 / g as f64;
                let f = profile.eval(u).0;
                for k in 0..g {
                    let th = TAU * k as f64 / g as f64;
                    for j in 0..dirs {
                        let a = angle(j);
                        out.push(PhasePoint::new(vec![u, th], vec![a.cos(), f * a.sin()]));
                    }
                }
            }
        }
    }
    out
}

/// Local minima of the return distance along the trajectory of `p` below `near_return`.
fn near_returns(manifold: &Manifold, p: &PhasePoint, l_max: f64, opts: &SearchOptions) -> Vec<f64> {
    let path = match integrate_flow(manifold, p, l_max, &opts.flow.with_max_step(opts.sample_step)) {
        Ok(path) => path,
        Err(e) => {
            debug!("grid seed {p:?} dropped: {e}");
            return Vec::new();
        }
    };
    let d: Vec<f64> = path.points.iter().map(|q| manifold.distance(p, q)).collect();
    let mut minima: Vec<(f64, f64)> = (1..d.len().saturating_sub(1))
        .filter(|&i| path.times[i] >= opts.min_period && d[i] <= d[i - 1] && d[i] <= d[i + 1] && d[i] < opts.near_return)
        .map(|i| (d[i], path.times[i]))
        .collect();
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    minima.truncate(opts.max_candidates_per_seed);
    minima.into_iter().map(|(_, t)| t).collect()
}

#[derive(Debug, Clone)]
struct Primitive {
    start: PhasePoint,
    period: f64,
    symmetric: bool,
    /// `dG^T = I` on the whole tangent space, so the fixed set is open in `S*M`.
    open: bool,
}

fn fixes_all_directions(manifold: &Manifold, p: &PhasePoint, t: f64, flow: &FlowOptions) -> Result<bool, GeoError> {
    let m = integrate_monodromy(manifold, p, t, flow)?.monodromy;
    let d = m.nrows();
    Ok((DMatrix::identity(d, d) - m).svd(false, false).singular_values.max() <= SVD_RANK_TOL)
}

fn cmp_points(a: &PhasePoint, b: &PhasePoint) -> Ordering {
    a.x.iter().chain(&a.xi).zip(b.x.iter().chain(&b.xi)).map(|(u, v)| u.total_cmp(v)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Whether `b` lies on the orbit of `a` within `merge_tol`, found by sampling
/// one period and golden-section refinement of the nearest sample.
fn same_orbit(manifold: &Manifold, a: &Primitive, b: &Primitive, opts: &SearchOptions) -> bool {
    if (a.period - b.period).abs() > opts.merge_tol * a.period.max(1.0) {
        return false;
    }
    let Ok(path) = integrate_flow(manifold, &a.start, a.period, &opts.flow.with_max_step(opts.sample_step)) else {
        return false;
    };
    let (i, d0) = path
        .points
        .iter()
        .map(|q| manifold.distance(q, &b.start))
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("nonempty path");
    if d0 <= opts.merge_tol {
        return true;
    }
    if d0 > 4.0 * opts.sample_step {
        return false;
    }
    let dist_at = |t: f64| match integrate_flow(manifold, &a.start, t, &opts.flow) {
        Ok(p) => manifold.distance(p.end(), &b.start),
        Err(_) => f64::INFINITY,
    };
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = ((path.times[i] - opts.sample_step).max(0.0), path.times[i] + opts.sample_step);
    let (mut c, mut d) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut fc, mut fd) = (dist_at(c), dist_at(d));
    for _ in 0..60 {
        if fc.min(fd) <= opts.merge_tol {
            return true;
        }
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = dist_at(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = dist_at(d);
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    fc.min(fd) <= opts.merge_tol
}

/// Closed orbits of length at most `l_max`, one representative per connected
/// family of primitive orbits together with its iterates, sorted by length and
/// start coordinates.
pub fn find_closed_orbits(manifold: &Manifold, l_max: f64, opts: &SearchOptions) -> Result<Vec<ClosedOrbit>, GeoError> {
    if !(l_max > 0.0) {
        return Err(GeoError::NegativeTime(l_max));
    }
    manifold.validate()?;
    let mut candidates: Vec<(PhasePoint, f64, bool)> =
        symmetric_candidates(manifold, l_max).into_iter().map(|(p, t)| (p, t, true)).collect();
    let seeds = grid_seeds(manifold, opts);
    let grid: Vec<(PhasePoint, f64, bool)> = seeds
        .par_iter()
        .flat_map_iter(|p| {
            let p = manifold.normalize(p).ok();
            p.map(|p| near_returns(manifold, &p, l_max, opts).into_iter().map(move |t| (p.clone(), t, false)))
                .into_iter()
                .flatten()
        })
        .collect();
    candidates.extend(grid);

    let tol = opts.merge_tol * l_max.max(1.0);
    let mut primitives: Vec<Primitive> = candidates
        .par_iter()
        .filter_map(|(p, t, symmetric)| {
            let refined = refine_closed_orbit(manifold, p, *t, opts)
                .and_then(|(q, t)| prime_period(manifold, &q, t, opts).map(|(period, _)| (q, period)))
                .and_then(|(q, period)| fixes_all_directions(manifold, &q, period, &opts.flow).map(|open| (q, period, open)));
            match refined {
                Ok((q, period, open)) if period <= l_max + tol => {
                    Some(Primitive { start: manifold.canonical(&q), period, symmetric: *symmetric, open })
                }
                Ok(_) => None,
                Err(e) => {
                    if *symmetric {
                        warn!("symmetric candidate {p:?} (T = {t}) dropped: {e}");
                    } else {
                        debug!("candidate {p:?} (T = {t}) dropped: {e}");
                    }
                    None
                }
            }
        })
        .collect();
    primitives.sort_by(|a, b| {
        b.symmetric
            .cmp(&a.symmetric)
            .then(a.period.total_cmp(&b.period))
            .then_with(|| cmp_points(&a.start, &b.start))
    });

    let mut reps: Vec<Primitive> = Vec::new();
    for cand in primitives {
        let same_period: Vec<&Primitive> =
            reps.iter().filter(|r| (r.period - cand.period).abs() <= opts.merge_tol * r.period.max(1.0)).collect();
        if same_period.par_iter().any(|r| same_orbit(manifold, r, &cand, opts)) {
            continue;
        }
        // two open pieces of Fix(G^T) in the connected S*M are the same component
        if cand.open && same_period.iter().any(|r| r.open) {
            continue;
        }
        let joined = same_period
            .par_iter()
            .position_first(|r| connected_by_continuation(manifold, &r.start, &cand.start, r.period, &opts.flow));
        if joined.is_none() {
            reps.push(cand);
        }
    }

    let mut orbits: Vec<ClosedOrbit> = reps
        .par_iter()
        .flat_map_iter(|r| {
            let count = ((l_max + tol) / r.period).floor() as usize;
            (1..=count).filter_map(move |k| {
                ClosedOrbit::new(manifold, r.start.clone(), k as f64 * r.period, r.period, &opts.flow)
                    .map_err(|e| warn!("iterate {k} of {:?} failed: {e}", r.start))
                    .ok()
            })
        })
        .collect();
    orbits.sort_by(|a, b| a.length.total_cmp(&b.length).then_with(|| cmp_points(&a.start, &b.start)));
    Ok(orbits)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn symmetric_only() -> SearchOptions {
        SearchOptions { grid: 0, ..SearchOptions::default() }
    }

    #[test]
    fn square_torus_unit_orbits() {
        let t = Manifold::square_torus(2);
        let orbits = find_closed_orbits(&t, 1.5, &SearchOptions { grid: 2, directions: 4, ..SearchOptions::default() }).unwrap();
        // four axis directions at L = 1, four diagonals at L = √2 < 1.5
        assert_eq!(orbits.len(), 8);
        for (i, o) in orbits.iter().enumerate() {
            let l = if i < 4 { 1.0 } else { 2f64.sqrt() };
            assert!((o.length - l).abs() < 1e-12 && (o.prime_period - l).abs() < 1e-12);
            assert!(o.closure_error <= 1e-8);
            assert!(!o.det.nondegenerate);
        }
    }

    #[test]
    fn torus_iterates_carry_prime_period() {
        let t = Manifold::square_torus(2);
        let orbits = find_closed_orbits(&t, 2.1, &symmetric_only()).unwrap();
        let at2: Vec<_> = orbits.iter().filter(|o| (o.length - 2.0).abs() < 1e-9).collect();
        assert_eq!(at2.len(), 4);
        assert!(at2.iter().all(|o| o.multiplicity == 2 && (o.prime_period - 1.0).abs() < 1e-12));
        assert_eq!(orbits.iter().filter(|o| (o.length - 2f64.sqrt()).abs() < 1e-9).count(), 4);
    }

    #[test]
    fn revolution_inner_equator() {
        let r = Manifold::standard_torus_of_revolution();
        let orbits = find_closed_orbits(&r, 7.0, &symmetric_only()).unwrap();
        let inner: Vec<_> = orbits.iter().filter(|o| (o.start.x[0] - PI).abs() < 1e-9).collect();
        assert_eq!(inner.len(), 2);
        let oracle = 2.0 - 2.0 * TAU.cosh();
        for o in &inner {
            assert!((o.length - TAU).abs() < 1e-9);
            assert!((o.det.direct - oracle).abs() <= 1e-6 * oracle.abs(), "{}", o.det.direct);
            assert!(o.det.agree);
        }
        // the outer equator has length 6π > 7
        assert!(orbits.iter().all(|o| o.start.x[0].abs() > 1e-9 || o.start.xi[0].abs() > 0.5));
        assert!(orbits.iter().all(|o| o.length <= 7.0));
    }

    #[test]
    fn time_reversal_pairs() {
        let r = Manifold::standard_torus_of_revolution();
        let orbits = find_closed_orbits(&r, 7.0, &symmetric_only()).unwrap();
        for o in &orbits {
            let rev = PhasePoint::new(o.start.x.clone(), o.start.xi.iter().map(|v| -v).collect());
            let partner = orbits
                .iter()
                .find(|q| (q.length - o.length).abs() < 1e-9 && r.distance(&r.canonical(&rev), &q.start) < 1e-6)
                .expect("reversed orbit present");
            assert!((partner.det.direct.abs() - o.det.direct.abs()).abs() <= 1e-6 * o.det.direct.abs().max(1.0));
        }
    }

    #[test]
    fn sphere_iterates() {
        let s = Manifold::round_sphere(1.0).unwrap();
        let orbits = find_closed_orbits(&s, 13.0, &symmetric_only()).unwrap();
        assert_eq!(orbits.len(), 2);
        assert!(orbits.iter().all(|o| (o.prime_period - TAU).abs() < 1e-9));
        assert!((orbits[1].length - 2.0 * TAU).abs() < 1e-9);
        assert!((orbits[0].poincare.p.clone() - DMatrix::identity(2, 2)).abs().max() < 1e-6);
    }

    #[test]
    fn newton_recovers_perturbed_equator() {
        let r = Manifold::standard_torus_of_revolution();
        let p = PhasePoint::new(vec![PI + 1e-3, 0.3], vec![2e-3, 1.0]);
        let (q, t) = refine_closed_orbit(&r, &p, TAU + 0.01, &SearchOptions::default()).unwrap();
        assert!((q.x[0] - PI).abs() < 1e-8 && (t - TAU).abs() < 1e-8);
    }
}
