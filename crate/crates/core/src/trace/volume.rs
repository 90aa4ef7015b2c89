use std::cell::Cell;

use log::debug;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{rank_report, transverse_determinant, FixedComponent, TraceError, TraceOptions};
use crate::defaults::CONTINUATION_STEP;
use crate::geoflow::{
    chart_to_frame, integrate_flow, integrate_monodromy, sasaki_distance, trace_family, FamilyPoint, FlowOptions,
    Manifold, PhasePoint, SasakiFrame,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeEstimate {
    pub value: f64,
    /// Relative standard error for Monte Carlo estimates; absent for closed forms.
    pub rel_stderr: Option<f64>,
    pub samples: usize,
}

impl VolumeEstimate {
    fn exact(value: f64) -> Self {
        VolumeEstimate { value, rel_stderr: None, samples: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentWeight {
    pub volume: VolumeEstimate,
    /// Transverse determinant at the representative orbit.
    pub transverse_determinant: f64,
    /// `∫_Z dVol_can / |det(I − P_Z^#)|`.
    pub weight: f64,
    pub weight_rel_stderr: Option<f64>,
}

enum Rule {
    Closed(f64),
    MonteCarlo,
}

fn volume_rule(manifold: &Manifold, component: &FixedComponent) -> Result<Rule, TraceError> {
    let n = manifold.dim();
    let k = component.dimension;
    match manifold {
        Manifold::FlatTorus { .. } if k == n => return Ok(Rule::Closed(manifold.covolume())),
        Manifold::RoundSphere { .. } if k == 3 => return Ok(Rule::Closed(manifold.cosphere_volume())),
        _ => {}
    }
    match k {
        1 => Ok(Rule::Closed(component.representative().prime_period)),
        2 if n == 2 => Ok(Rule::MonteCarlo),
        _ => Err(TraceError::Unsupported { k }),
    }
}

/// Sasaki volume of the component: covolume for flat-torus components, the
/// cosphere volume for the sphere, `L^#` for isolated orbits, and a Monte Carlo
/// estimate over the traced family for other two-dimensional components.
pub fn canonical_volume(
    manifold: &Manifold,
    component: &FixedComponent,
    opts: &TraceOptions,
) -> Result<VolumeEstimate, TraceError> {
    transverse_determinant(component)?;
    match volume_rule(manifold, component)? {
        Rule::Closed(v) => Ok(VolumeEstimate::exact(v)),
        Rule::MonteCarlo => Ok(monte_carlo(manifold, component, opts)?.0),
    }
}

pub fn component_weight(
    manifold: &Manifold,
    component: &FixedComponent,
    opts: &TraceOptions,
) -> Result<ComponentWeight, TraceError> {
    let det = transverse_determinant(component)?;
    match volume_rule(manifold, component)? {
        Rule::Closed(v) => Ok(ComponentWeight {
            volume: VolumeEstimate::exact(v),
            transverse_determinant: det,
            weight: v / det,
            weight_rel_stderr: None,
        }),
        Rule::MonteCarlo => {
            let (volume, weight, se) = monte_carlo(manifold, component, opts)?;
            Ok(ComponentWeight { volume, transverse_determinant: det, weight, weight_rel_stderr: Some(se) })
        }
    }
}

/// Length of the part of the displacement `a → b` orthogonal to the flow at `a`.
fn transverse_length(manifold: &Manifold, a: &PhasePoint, b: &PhasePoint) -> Result<f64, TraceError> {
    let frame = SasakiFrame::at(manifold, a)?;
    let c = chart_to_frame(&frame, &manifold.displacement(a, b));
    Ok(c[1..].iter().map(|v| v * v).sum::<f64>().sqrt())
}

struct FamilyLoop {
    points: Vec<FamilyPoint>,
    /// Transverse arc length from each point to the next (the last closes the loop).
    segments: Vec<f64>,
}

fn family_loop(manifold: &Manifold, component: &FixedComponent, opts: &TraceOptions) -> Result<FamilyLoop, TraceError> {
    let flow = &opts.search.flow;
    let rep = component.representative();
    let orbit = integrate_flow(manifold, &rep.start, rep.prime_period, &flow.with_max_step(CONTINUATION_STEP))?;
    let nearest = |q: &PhasePoint| -> &PhasePoint {
        orbit.points.iter().min_by(|a, b| manifold.distance(a, q).total_cmp(&manifold.distance(b, q))).expect("nonempty")
    };
    let calls = Cell::new(0usize);
    let returned = |q: &PhasePoint| {
        calls.set(calls.get() + 1);
        calls.get() > 10
            && sasaki_distance(manifold, nearest(q), q).is_ok_and(|d| d < 1.5 * CONTINUATION_STEP)
    };
    let points = trace_family(manifold, &rep.start, component.period, flow, opts.family_max_steps, &returned)?;
    let mut segments = Vec::with_capacity(points.len());
    for w in points.windows(2) {
        segments.push(transverse_length(manifold, &w[0].point, &w[1].point)?);
    }
    let last = &points.last().expect("nonempty family").point;
    segments.push(transverse_length(manifold, last, nearest(last))?);
    debug!("family loop: {} points, transverse length {}", points.len(), segments.iter().sum::<f64>());
    Ok(FamilyLoop { points, segments })
}

/// One sample of `(area density, area density / det)` at flow time `t` from family point `p`.
fn sample(
    manifold: &Manifold,
    p: &FamilyPoint,
    t: f64,
    tau: f64,
    rank: usize,
    flow: &FlowOptions,
) -> Result<(f64, f64), TraceError> {
    let jet = integrate_monodromy(manifold, &p.point, t, flow)?;
    let y: DVector<f64> = &jet.monodromy * &p.tangent;
    let density = (y.norm_squared() - y[0] * y[0]).max(0.0).sqrt();
    let there = integrate_monodromy(manifold, &jet.endpoint, tau, flow)?;
    let det: f64 = rank_report(&there.monodromy).singular_values[..rank].iter().product();
    Ok((density, density / det))
}

/// Returns the volume estimate, the weight and the weight's relative standard error.
fn monte_carlo(
    manifold: &Manifold,
    component: &FixedComponent,
    opts: &TraceOptions,
) -> Result<(VolumeEstimate, f64, f64), TraceError> {
    let lp = family_loop(manifold, component, opts)?;
    let total: f64 = lp.segments.iter().sum();
    let cumulative: Vec<f64> = lp
        .segments
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s;
            Some(*acc)
        })
        .collect();
    let period = component.representative().prime_period;
    let scale = total * period;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.search.seed);
    let (mut s1, mut s2, mut w1, mut w2) = (0.0, 0.0, 0.0, 0.0);
    let mut count = 0usize;
    let rel = |s1: f64, s2: f64, m: usize| {
        let mean = s1 / m as f64;
        let var = (s2 / m as f64 - mean * mean).max(0.0) * m as f64 / (m as f64 - 1.0);
        (mean, (var / m as f64).sqrt() / mean.abs())
    };
    loop {
        let draws: Vec<(usize, f64)> = (0..opts.mc_batch)
            .map(|_| {
                let u = rng.random_range(0.0..total);
                let i = cumulative.partition_point(|&c| c <= u).min(lp.points.len() - 1);
                (i, rng.random_range(0.0..period))
            })
            .collect();
        let values: Vec<(f64, f64)> = draws
            .par_iter()
            .map(|&(i, t)| {
                sample(manifold, &lp.points[i], t, component.period, component.rank.rank, &opts.search.flow)
            })
            .collect::<Result<_, _>>()?;
        for (v, w) in values {
            let (v, w) = (v * scale, w * scale);
            s1 += v;
            s2 += v * v;
            w1 += w;
            w2 += w * w;
        }
        count += opts.mc_batch;
        let (vol, vol_se) = rel(s1, s2, count);
        let (weight, weight_se) = rel(w1, w2, count);
        if count >= 2 * opts.mc_batch && vol_se <= opts.mc_rel_stderr && weight_se <= opts.mc_rel_stderr {
            return Ok((VolumeEstimate { value: vol, rel_stderr: Some(vol_se), samples: count }, weight, weight_se));
        }
        if count >= opts.mc_max_samples {
            return Err(TraceError::MonteCarlo {
                achieved: vol_se.max(weight_se),
                target: opts.mc_rel_stderr,
                samples: count,
            });
        }
    }
}
