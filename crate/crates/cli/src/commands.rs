use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sunada_core::cover::{build_cover, lift_radon, seed_sweep, CoverModel, SeedOutcome, TraceVerdict};
use sunada_core::defaults::INTERTWINING_TOL;
use sunada_core::geoflow::{find_closed_orbits, Manifold, SearchOptions};
use sunada_core::group::{
    intertwiner_solve, is_conjugate, is_gassmann, parse_group_file, verify_intertwiner, FiniteGroup,
    GassmannCertificate, IntertwinerReport, Subgroup,
};
use sunada_core::microlocal::{validate_stationary_phase, Amplitude, Phase, PhaseProblem, StatPhaseReport};
use sunada_core::trace::{
    flat_trace_weights, l_function_eval, oracle_flat_torus, LSeries, LValue, TraceOptions, VolumeEstimate,
};

use crate::report::{fmt_f64, write_csv, write_json, Format, Table};
use crate::{config, pipeline, Cli, CliError, Command};

type Failures = Vec<String>;

/// Default relative tolerance of computed weights against a closed-form oracle.
const WEIGHT_TOL: f64 = 1e-6;

pub fn run(cli: &Cli) -> Result<Failures, CliError> {
    match &cli.command {
        Command::Gassmann { group, h1, h2 } => gassmann(cli, group, h1, h2),
        Command::Sunada { diagram, tmax, seeds } => sunada(cli, diagram, *tmax, *seeds),
        Command::Flow { manifold, lmax, grid } => flow(cli, manifold, *lmax, *grid),
        Command::Zeta { manifold, lmax, s, lvalues, grid } => zeta(cli, manifold, *lmax, s, lvalues.as_deref(), *grid),
        Command::Statphase { fixture, hlist } => statphase(cli, fixture, hlist.as_deref()),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).map_err(config)
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?).with_context(|| format!("cannot parse {}", path.display())).map_err(config)
}

fn load_group(path: &Path) -> Result<Arc<FiniteGroup>, CliError> {
    let g = parse_group_file(&read(path)?).with_context(|| format!("in {}", path.display())).map_err(config)?;
    Ok(Arc::new(g))
}

fn subgroup(group: &Arc<FiniteGroup>, gens: &[String], label: &str) -> Result<Subgroup, CliError> {
    Subgroup::parse_generators(group.clone(), gens).with_context(|| format!("generators of {label}")).map_err(config)
}

fn split_gens(text: &str) -> Vec<String> {
    text.split(';').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn emit(cli: &Cli, default: Format, table: impl FnOnce() -> Table, json: &impl Serialize) -> Result<(), CliError> {
    let out = cli.out.as_deref();
    match cli.format.unwrap_or(default) {
        Format::Csv => write_csv(&table(), out),
        Format::Json => write_json(json, out),
    }
    .map_err(config)
}

#[derive(Serialize)]
struct GassmannOutput {
    #[serde(flatten)]
    certificate: GassmannCertificate,
    order: usize,
    h1_order: usize,
    h2_order: usize,
    non_conjugate: bool,
    intertwiner: Option<IntertwinerReport>,
}

fn gassmann(cli: &Cli, group: &Path, h1: &str, h2: &str) -> Result<Failures, CliError> {
    let g = load_group(group)?;
    let (h1, h2) = (subgroup(&g, &split_gens(h1), "H1")?, subgroup(&g, &split_gens(h2), "H2")?);
    let certificate = is_gassmann(&h1, &h2).map_err(pipeline)?;
    let intertwiner = if certificate.verdict {
        Some(verify_intertwiner(&intertwiner_solve(&h1, &h2, cli.seed).map_err(pipeline)?))
    } else {
        None
    };
    let mut failures = Vec::new();
    if !certificate.verdict {
        failures.push("Gassmann condition fails".to_string());
    }
    if let Some(r) = &intertwiner {
        if !r.passes {
            failures.push(format!(
                "intertwiner residuals above gate: unitarity {:e}, equivariance {:e}, constancy {:e}",
                r.unitarity_residual, r.equivariance_residual, r.constancy_residual
            ));
        }
    }
    let out = GassmannOutput {
        order: g.order(),
        h1_order: h1.order(),
        h2_order: h2.order(),
        non_conjugate: !is_conjugate(&h1, &h2),
        certificate,
        intertwiner,
    };
    let table = || {
        let mut t = Table::new(&["class", "count_h1", "count_h2"]);
        for ((c, a), b) in out.certificate.classes.iter().zip(&out.certificate.counts_h1).zip(&out.certificate.counts_h2) {
            t.push(vec![c.to_string(), a.to_string(), b.to_string()]);
        }
        t
    };
    emit(cli, Format::Json, table, &out)?;
    Ok(failures)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagramFile {
    /// Relative paths are resolved against the diagram file's directory.
    group_file: PathBuf,
    h1_gens: Vec<String>,
    h2_gens: Vec<String>,
    model: CoverModel,
}

#[derive(Serialize)]
struct SunadaOutput<'a> {
    gassmann: bool,
    radon_unitarity_residual: Option<f64>,
    outcomes: &'a [SeedOutcome],
}

fn sunada(cli: &Cli, diagram: &Path, tmax: usize, seeds: usize) -> Result<Failures, CliError> {
    if tmax == 0 || seeds == 0 {
        return Err(config(anyhow!("--tmax and --seeds must be positive")));
    }
    let file: DiagramFile = load_json(diagram)?;
    let group_path = diagram.parent().unwrap_or(Path::new(".")).join(&file.group_file);
    let g = load_group(&group_path)?;
    let (h1, h2) = (subgroup(&g, &file.h1_gens, "H1")?, subgroup(&g, &file.h2_gens, "H2")?);
    let cover = build_cover(&h1, &h2, file.model).map_err(pipeline)?;
    let gassmann = is_gassmann(&h1, &h2).map_err(pipeline)?.verdict;
    let radon = if gassmann {
        let kernel = intertwiner_solve(&h1, &h2, cli.seed).map_err(pipeline)?;
        Some(lift_radon(&kernel, &cover).map_err(pipeline)?)
    } else {
        None
    };
    let outcomes = seed_sweep(&cover, radon.as_ref(), cli.seed..cli.seed + seeds as u64, tmax).map_err(pipeline)?;
    let tol = cli.tol.intertwining.unwrap_or(INTERTWINING_TOL);
    let mut failures = Vec::new();
    if !gassmann {
        let unequal: usize = outcomes.iter().map(|o| o.report.rows.iter().filter(|r| !r.equal).count()).sum();
        failures.push(format!(
            "subgroups are not Gassmann, so trace equality is not expected; {unequal} of {} rows differ",
            outcomes.len() * tmax
        ));
    }
    for o in &outcomes {
        let residual_ok = o.intertwining_residual.is_none_or(|r| r <= tol);
        if gassmann && (o.report.verdict != TraceVerdict::Pass || !residual_ok) {
            failures.push(format!(
                "seed {}: verdict {:?}, intertwining residual {:?}, conjugation residual {:?}",
                o.seed, o.report.verdict, o.intertwining_residual, o.report.conjugation_residual
            ));
        }
    }
    let out = SunadaOutput { gassmann, radon_unitarity_residual: radon.as_ref().map(|r| r.unitarity_residual()), outcomes: &outcomes };
    let table = || {
        let mut t = Table::new(&["seed", "t", "trace_level1", "trace_level2", "equal"]);
        for o in &outcomes {
            for r in &o.report.rows {
                t.push(vec![
                    o.seed.to_string(),
                    r.t.to_string(),
                    r.trace_level1.to_string(),
                    r.trace_level2.to_string(),
                    r.equal.to_string(),
                ]);
            }
        }
        t
    };
    emit(cli, Format::Csv, table, &out)?;
    Ok(failures)
}

fn load_manifold(path: &Path) -> Result<Manifold, CliError> {
    let m: Manifold = load_json(path)?;
    m.validate().with_context(|| format!("in {}", path.display())).map_err(config)?;
    Ok(m)
}

fn search_options(cli: &Cli, grid: Option<usize>) -> SearchOptions {
    let mut opts = SearchOptions { seed: cli.seed, ..SearchOptions::default() };
    if let Some(g) = grid {
        opts.grid = g;
    }
    if let Some(t) = cli.tol.closure {
        opts.closure_tol = t;
    }
    if let Some(t) = cli.tol.merge {
        opts.merge_tol = t;
    }
    opts
}

fn check_lmax(lmax: f64) -> Result<(), CliError> {
    if lmax > 0.0 && lmax.is_finite() {
        Ok(())
    } else {
        Err(config(anyhow!("--lmax must be positive, got {lmax}")))
    }
}

#[derive(Serialize)]
struct OrbitRecord {
    length: f64,
    prime_period: f64,
    multiplicity: usize,
    det_i_minus_p: f64,
    det_schur: Option<f64>,
    degenerate: bool,
    closure_error: f64,
    x: Vec<f64>,
    xi: Vec<f64>,
}

fn flow(cli: &Cli, manifold: &Path, lmax: f64, grid: Option<usize>) -> Result<Failures, CliError> {
    check_lmax(lmax)?;
    let m = load_manifold(manifold)?;
    let orbits = find_closed_orbits(&m, lmax, &search_options(cli, grid)).map_err(pipeline)?;
    let records: Vec<OrbitRecord> = orbits
        .iter()
        .map(|o| OrbitRecord {
            length: o.length,
            prime_period: o.prime_period,
            multiplicity: o.multiplicity,
            det_i_minus_p: o.det.direct,
            det_schur: o.det.schur,
            degenerate: !o.det.nondegenerate,
            closure_error: o.closure_error,
            x: o.start.x.clone(),
            xi: o.start.xi.clone(),
        })
        .collect();
    let n = m.dim();
    let table = || {
        let mut header: Vec<String> =
            ["L", "L_prime", "det_I_minus_P", "degenerate_flag"].iter().map(|s| s.to_string()).collect();
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..n).map(|i| format!("xi{i}")));
        let mut t = Table { header, rows: Vec::new() };
        for r in &records {
            let mut row = vec![fmt_f64(r.length), fmt_f64(r.prime_period), fmt_f64(r.det_i_minus_p), u8::from(r.degenerate).to_string()];
            row.extend(r.x.iter().chain(&r.xi).map(|&v| fmt_f64(v)));
            t.push(row);
        }
        t
    };
    emit(cli, Format::Csv, table, &records)?;
    Ok(Vec::new())
}

#[derive(Serialize)]
struct ComponentRecord {
    tau: f64,
    dimension: usize,
    orbits: usize,
    transverse_determinant: f64,
    volume: VolumeEstimate,
    weight: f64,
    weight_rel_stderr: Option<f64>,
}

#[derive(Serialize)]
struct OracleCheck {
    series: LSeries,
    max_rel_error: f64,
    passes: bool,
}

#[derive(Serialize)]
struct ZetaOutput<'a> {
    series: &'a LSeries,
    components: Vec<ComponentRecord>,
    l_values: &'a [LValue],
    oracle: Option<OracleCheck>,
}

/// Largest relative weight error, or infinity when the lengths do not match.
fn compare_to_oracle(series: &LSeries, oracle: &LSeries) -> f64 {
    if series.entries.len() != oracle.entries.len() {
        return f64::INFINITY;
    }
    series
        .entries
        .iter()
        .zip(&oracle.entries)
        .map(|(a, b)| {
            let dt = (a.tau - b.tau).abs() / b.tau;
            let dw = (a.weight - b.weight).abs() / b.weight.abs();
            if dt > 1e-8 {
                f64::INFINITY
            } else {
                dw
            }
        })
        .fold(0.0, f64::max)
}

fn zeta(
    cli: &Cli,
    manifold: &Path,
    lmax: f64,
    s: &[Complex64],
    lvalues: Option<&Path>,
    grid: Option<usize>,
) -> Result<Failures, CliError> {
    check_lmax(lmax)?;
    let format = cli.format.unwrap_or(Format::Csv);
    if format == Format::Csv && !s.is_empty() && lvalues.is_none() {
        return Err(config(anyhow!("--s with CSV output needs --lvalues PATH (or use --format json)")));
    }
    let m = load_manifold(manifold)?;
    let mut opts = TraceOptions { search: search_options(cli, grid), ..TraceOptions::default() };
    if let Some(t) = cli.tol.mc {
        opts.mc_rel_stderr = t;
    }
    let report = flat_trace_weights(&m, lmax, &opts).map_err(pipeline)?;
    let l_values: Vec<LValue> = s.iter().map(|&z| l_function_eval(&report.series, z)).collect();
    let mut failures = Vec::new();
    let oracle = match &m {
        Manifold::FlatTorus { basis } if (2..=3).contains(&basis.len()) => {
            let series = oracle_flat_torus(basis, lmax).map_err(pipeline)?;
            let max_rel_error = compare_to_oracle(&report.series, &series);
            let tol = cli.tol.weight.unwrap_or(WEIGHT_TOL);
            let passes = max_rel_error <= tol;
            if !passes {
                failures.push(format!("weights differ from the lattice oracle: max relative error {max_rel_error:e} > {tol:e}"));
            }
            Some(OracleCheck { series, max_rel_error, passes })
        }
        _ => None,
    };
    let components = report
        .components
        .iter()
        .map(|(c, w)| ComponentRecord {
            tau: c.period,
            dimension: c.dimension,
            orbits: c.samples.len(),
            transverse_determinant: w.transverse_determinant,
            volume: w.volume,
            weight: w.weight,
            weight_rel_stderr: w.weight_rel_stderr,
        })
        .collect();
    let out = ZetaOutput { series: &report.series, components, l_values: &l_values, oracle };
    let table = || {
        let mut t = Table::new(&["tau", "weight", "provenance"]);
        for e in &report.series.entries {
            t.push(vec![fmt_f64(e.tau), fmt_f64(e.weight), format!("{:?}", e.provenance).to_lowercase()]);
        }
        t
    };
    emit(cli, Format::Csv, table, &out)?;
    if format == Format::Csv {
        if let Some(p) = lvalues {
            write_json(&l_values, Some(p)).map_err(config)?;
        }
    }
    Ok(failures)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StatPhaseFixture {
    phase: Phase,
    amplitude: Amplitude,
    #[serde(rename = "N")]
    n: usize,
    h_list: Vec<f64>,
}

fn statphase(cli: &Cli, fixture: &Path, hlist: Option<&[f64]>) -> Result<Failures, CliError> {
    let s: StatPhaseFixture = load_json(fixture)?;
    let problem = PhaseProblem::new(s.phase, s.amplitude, s.n).map_err(config)?;
    let hs = hlist.unwrap_or(&s.h_list);
    if hs.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(config(anyhow!("h values must be positive")));
    }
    let report: StatPhaseReport = validate_stationary_phase(&problem, hs).map_err(|e| match e {
        sunada_core::microlocal::MicrolocalError::TooFewScales { .. }
        | sunada_core::microlocal::MicrolocalError::InvalidProblem(_) => config(e),
        e => pipeline(e),
    })?;
    let mut failures = Vec::new();
    if !report.passes {
        failures.push(format!("scaled residual slope {:?} exceeds {}", report.slope, sunada_core::defaults::STATPHASE_SLOPE_MAX));
    }
    let table = || {
        let mut t =
            Table::new(&["h", "integral_re", "integral_im", "prediction_re", "prediction_im", "scaled_residual"]);
        for r in &report.rows {
            t.push(
                [r.h, r.integral_re, r.integral_im, r.prediction_re, r.prediction_im, r.scaled_residual]
                    .iter()
                    .map(|&v| fmt_f64(v))
                    .collect(),
            );
        }
        t
    };
    emit(cli, Format::Csv, table, &report)?;
    Ok(failures)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sunada_core::trace::{LEntry, Provenance};

    #[test]
    fn generator_lists() {
        assert_eq!(split_gens("(0 1); (1 2)(3 4);"), vec!["(0 1)", "(1 2)(3 4)"]);
        assert!(split_gens("").is_empty());
    }

    #[test]
    fn oracle_comparison() {
        let e = |tau, weight| LEntry { tau, weight, provenance: Provenance::Computed };
        let a = LSeries::new(vec![e(1.0, 4.0), e(2f64.sqrt(), 2.0 * 2f64.sqrt())], 1.5);
        let b = oracle_flat_torus(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1.5).unwrap();
        assert!(compare_to_oracle(&a, &b) < 1e-15);
        let short = LSeries::new(vec![e(1.0, 4.0)], 1.5);
        assert_eq!(compare_to_oracle(&short, &b), f64::INFINITY);
        let off = LSeries::new(vec![e(1.0, 4.4), e(2f64.sqrt(), 2.0 * 2f64.sqrt())], 1.5);
        assert!((compare_to_oracle(&off, &b) - 0.1).abs() < 1e-12);
    }
}
