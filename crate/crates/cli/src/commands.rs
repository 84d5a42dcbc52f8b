use std::path::PathBuf;
use std::time::Instant;

use dorder::bpf::{delta_spectral, project_function};
use dorder::dosys::ParamValues;
use dorder::oracles::{self, gl::GlExtrapolator, McConfig, McResult};
use dorder::stochsolve::{self, CovarianceModel};
use dorder::{detsolve, BpfBasis, DOSystem, SpectralVector};
use serde::Serialize;

use crate::config::{self, Check, InputSpec, Overrides, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{manifest_path_for, write_atomic, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Stoch,
    Mc,
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub config: PathBuf,
    pub output: PathBuf,
    pub manifest: Option<PathBuf>,
    pub verify: bool,
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub kind: &'static str,
    pub metric: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub passed: bool,
    /// Set when the check does not apply to this command or configuration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl CheckOutcome {
    fn measured(kind: &'static str, metric: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            kind,
            metric: metric.into(),
            value: Some(value),
            tolerance: Some(tolerance),
            // NaN never passes.
            passed: value <= tolerance,
            skipped: None,
        }
    }

    fn skipped(kind: &'static str, why: impl Into<String>) -> Self {
        Self {
            kind,
            metric: String::new(),
            value: None,
            tolerance: None,
            passed: true,
            skipped: Some(why.into()),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    cli_version: &'static str,
    library_version: &'static str,
    command: Command,
    config_path: String,
    /// The configuration with every default and override written out.
    config: &'a RunConfig,
    output: String,
    columns: &'a [String],
    rows: usize,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    details: serde_json::Value,
    verify: bool,
    checks: &'a [CheckOutcome],
    #[serde(skip_serializing_if = "Option::is_none")]
    passed: Option<bool>,
    elapsed_seconds: f64,
}

struct RunOutcome {
    table: Table,
    checks: Vec<CheckOutcome>,
    details: serde_json::Value,
}

pub fn run(command: Command, args: &RunArgs) -> CliResult<()> {
    let start = Instant::now();
    let cfg = config::load(&args.config)?.resolve(&args.overrides)?;
    let outcome = match command {
        Command::Solve => solve(&cfg, args.verify)?,
        Command::Stoch => stoch(&cfg, args.verify)?,
        Command::Mc => mc(&cfg, args.verify)?,
    };
    let failed: Vec<String> = outcome
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} {} = {:e} > {:e}", c.kind, c.metric, c.value.unwrap_or(f64::NAN), c.tolerance.unwrap_or(f64::NAN)))
        .collect();
    write_atomic(&args.output, &outcome.table.to_csv()?)?;
    let manifest_path = args.manifest.clone().unwrap_or_else(|| manifest_path_for(&args.output));
    let manifest = Manifest {
        tool: "dorder",
        cli_version: env!("CARGO_PKG_VERSION"),
        library_version: dorder::VERSION,
        command,
        config_path: args.config.display().to_string(),
        config: &cfg,
        output: args.output.display().to_string(),
        columns: outcome.table.headers(),
        rows: outcome.table.rows(),
        details: outcome.details,
        verify: args.verify,
        checks: &outcome.checks,
        passed: args.verify.then_some(failed.is_empty()),
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::config(format!("manifest: {e}")))?;
    write_atomic(&manifest_path, &json)?;
    for c in &outcome.checks {
        match (&c.skipped, c.value) {
            (Some(why), _) => log::warn!("check {} skipped: {why}", c.kind),
            (None, Some(v)) => log::info!("check {} {} = {v:e} (tol {:e})", c.kind, c.metric, c.tolerance.unwrap_or(f64::NAN)),
            _ => {}
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(failed.join("; ")))
    }
}

fn project_input(input: &InputSpec, basis: &BpfBasis) -> CliResult<SpectralVector> {
    match input.as_mean_model() {
        None => Ok(delta_spectral(basis)),
        Some(model) => project_function(basis, |t| model.eval(t)).map_err(|e| CliError::setup("input", e)),
    }
}

fn solve(cfg: &RunConfig, verify: bool) -> CliResult<RunOutcome> {
    let sys = cfg.build_system()?;
    let basis = cfg.basis()?;
    let input = cfg.input.clone().unwrap_or(InputSpec::Impulse);
    let u = project_input(&input, &basis)?;
    let y = match cfg.initial_value {
        Some(y0) => detsolve::solve_ivp_shifted(&sys, y0, &u)?,
        None => detsolve::solve(&sys, &u)?,
    };
    let times = basis.midpoints();
    let mut table = Table::new();
    table.push("t", times.clone());
    table.push("y", y.coeffs().to_vec());
    let mut checks = Vec::new();
    if verify {
        for check in &cfg.verify {
            let outcome = match check {
                Check::ImpulseDistributedIntegrator { g1, g2, t_min, abs_tol } => {
                    if input != InputSpec::Impulse || cfg.initial_value.is_some() {
                        CheckOutcome::skipped(check.name(), "needs an impulse input and no initial value")
                    } else {
                        let oracle = times
                            .iter()
                            .map(|&t| oracles::impulse_distributed_integrator(t, *g1, *g2))
                            .collect::<dorder::Result<Vec<f64>>>()?;
                        let worst = push_error_columns(&mut table, check.name(), &times, y.coeffs(), &oracle, *t_min, false);
                        CheckOutcome::measured(check.name(), format!("max abs error for t >= {t_min}"), worst, *abs_tol)
                    }
                }
                Check::GrunwaldLetnikov { t_min, abs_tol } => match grunwald_reference(&sys, &basis, &input, cfg.initial_value)? {
                    Err(why) => CheckOutcome::skipped(check.name(), why),
                    Ok(oracle) => {
                        let worst = push_error_columns(&mut table, check.name(), &times, y.coeffs(), &oracle, *t_min, false);
                        CheckOutcome::measured(check.name(), format!("max abs error for t >= {t_min}"), worst, *abs_tol)
                    }
                },
                other => CheckOutcome::skipped(other.name(), "applies to the stochastic commands"),
            };
            checks.push(outcome);
        }
    }
    Ok(RunOutcome {
        table,
        checks,
        details: serde_json::json!({ "input": input, "initial_value": cfg.initial_value }),
    })
}

/// Append `<name>_oracle` and `<name>_error` columns and return the worst
/// (absolute or relative) error over `t >= t_min`.
fn push_error_columns(table: &mut Table, name: &str, times: &[f64], got: &[f64], oracle: &[f64], t_min: f64, relative: bool) -> f64 {
    let err: Vec<f64> = got
        .iter()
        .zip(oracle)
        .map(|(g, o)| if relative { (g - o) / o.abs() } else { g - o })
        .collect();
    let worst = times
        .iter()
        .zip(&err)
        .filter(|(t, _)| **t >= t_min)
        .map(|(_, e)| if e.is_nan() { f64::INFINITY } else { e.abs() })
        .fold(0.0, f64::max);
    table.push(&format!("{name}_oracle"), oracle.to_vec());
    table.push(&format!("{name}_{}", if relative { "rel_error" } else { "error" }), err);
    worst
}

/// Richardson-extrapolated Grünwald-Letnikov values at the block midpoints.
///
/// With an initial value the deviation `x = y - y0` obeys the same left-hand
/// side with forcing `f - (c0/b) y0`, where `c0` is the total zero-order
/// weight on the left and `b` the gain on the right.
fn grunwald_reference(
    sys: &DOSystem,
    basis: &BpfBasis,
    input: &InputSpec,
    initial_value: Option<f64>,
) -> CliResult<Result<Vec<f64>, String>> {
    let Some(model) = input.as_mean_model() else {
        return Ok(Err("the stepper needs a pointwise input, not an impulse".into()));
    };
    if !sys.is_deterministic() {
        return Ok(Err("the system has random parameters".into()));
    }
    let mt = sys.multi_term(&ParamValues::new())?;
    let shift = match initial_value {
        None => 0.0,
        Some(y0) => {
            if mt.rhs.iter().any(|t| t.order != 0.0) {
                return Ok(Err("an initial value needs a pure-gain right-hand side".into()));
            }
            let b: f64 = mt.rhs.iter().map(|t| t.weight).sum();
            let c0: f64 = mt.lhs.iter().filter(|t| t.order == 0.0).map(|t| t.weight).sum();
            if b == 0.0 {
                return Ok(Err("zero right-hand-side gain".into()));
            }
            c0 / b * y0
        }
    };
    let n = basis.n_funcs();
    let fine_step = basis.width() / 4.0;
    let fine: Vec<f64> = (0..=4 * n).map(|k| model.eval(k as f64 * fine_step) - shift).collect();
    let x = GlExtrapolator::new(&mt, fine_step, fine.len())?.solve(&fine)?;
    let y0 = initial_value.unwrap_or(0.0);
    Ok(Ok((0..n).map(|i| y0 + x[2 * i + 1]).collect()))
}

fn white_intensity(cfg: &RunConfig) -> Option<f64> {
    match cfg.forcing.as_ref()?.covariance {
        CovarianceModel::White { intensity } => Some(intensity),
        _ => None,
    }
}

/// Checks shared by `stoch` and `mc`, which both produce a variance series at
/// block midpoints.
fn variance_checks(
    cfg: &RunConfig,
    sys: &DOSystem,
    basis: &BpfBasis,
    variance: &[f64],
    table: &mut Table,
    out: &mut Vec<CheckOutcome>,
    monte_carlo: &mut dyn FnMut(&Check, &mut Table) -> CliResult<CheckOutcome>,
) -> CliResult<()> {
    let times = basis.midpoints();
    for check in &cfg.verify {
        let outcome = match check {
            Check::VarianceDoubleIntegrator { a1, a2, alpha1, alpha2, intensity, t_min, rel_tol } => {
                if white_intensity(cfg) != Some(*intensity) {
                    CheckOutcome::skipped(check.name(), format!("needs white-noise forcing of intensity {intensity}"))
                } else {
                    let oracle = times
                        .iter()
                        .map(|&t| oracles::variance_double_integrator(t, *a1, *a2, *alpha1, *alpha2).map(|v| intensity * v))
                        .collect::<dorder::Result<Vec<f64>>>()?;
                    let worst = push_error_columns(table, check.name(), &times, variance, &oracle, *t_min, true);
                    CheckOutcome::measured(check.name(), format!("max rel error for t >= {t_min}"), worst, *rel_tol)
                }
            }
            Check::VariancePlateau { tail_fraction, rel_tol } => match white_intensity(cfg) {
                None => CheckOutcome::skipped(check.name(), "needs white-noise forcing"),
                Some(_) if !sys.is_deterministic() => CheckOutcome::skipped(check.name(), "the system has random parameters"),
                Some(intensity) => {
                    let from = (1.0 - tail_fraction) * basis.horizon();
                    let tail: Vec<f64> = times.iter().zip(variance).filter(|(t, _)| **t >= from).map(|(_, v)| *v).collect();
                    if tail.is_empty() {
                        CheckOutcome::skipped(check.name(), "tail window holds no blocks")
                    } else {
                        let plateau = tail.iter().sum::<f64>() / tail.len() as f64;
                        let h2 = intensity * oracles::steady_state_variance_frequency(sys)?;
                        let rel = (plateau - h2).abs() / h2;
                        CheckOutcome::measured(check.name(), format!("rel error of tail mean {plateau:.6e} vs H2 variance {h2:.6e}"), rel, *rel_tol)
                    }
                }
            },
            Check::MonteCarlo { .. } => monte_carlo(check, table)?,
            other => CheckOutcome::skipped(other.name(), "applies to the solve command"),
        };
        out.push(outcome);
    }
    Ok(())
}

fn mc_config(cfg: &RunConfig) -> McConfig {
    let s = cfg.mc_settings();
    let d = McConfig::default();
    McConfig {
        samples: s.samples.unwrap_or(config::DEFAULT_MC_SAMPLES),
        seed: s.seed.unwrap_or(config::DEFAULT_MC_SEED),
        halton: s.halton.unwrap_or(d.halton),
        extrapolate: s.extrapolate.unwrap_or(d.extrapolate),
    }
}

/// Worst `|a - b| / se` over `indices`; a zero standard error only tolerates
/// an exact match.
fn worst_z(a: &[f64], b: &[f64], se: &[f64], indices: &[usize]) -> f64 {
    indices
        .iter()
        .map(|&i| {
            let d = (a[i] - b[i]).abs();
            if se[i] > 0.0 {
                d / se[i]
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

fn stoch(cfg: &RunConfig, verify: bool) -> CliResult<RunOutcome> {
    let sys = cfg.build_system()?;
    let basis = cfg.basis()?;
    let spec = cfg.forcing()?;
    let forcing = spec.project(&basis).map_err(|e| CliError::setup("forcing", e))?;
    let grid = stochsolve::system_cubature(&sys).map_err(|e| CliError::setup("cubature", e))?;
    let moments = stochsolve::propagate_moments_on(&sys, &grid, &forcing)?;
    let times = basis.midpoints();
    let mean: Vec<f64> = stochsolve::mean_series(&moments, &times)?.into_iter().map(|p| p.1).collect();
    let variance: Vec<f64> = stochsolve::variance_series(&moments, &times)?.into_iter().map(|p| p.1).collect();
    let mut table = Table::new();
    table.push("t", times);
    table.push("mean", mean.clone());
    table.push("variance", variance.clone());
    let mut checks = Vec::new();
    if verify {
        let mut mc_check = |check: &Check, table: &mut Table| -> CliResult<CheckOutcome> {
            let Check::MonteCarlo { samples, seed, sigmas, stride } = check else {
                unreachable!("only Monte-Carlo checks are routed here")
            };
            let config = McConfig {
                samples: *samples,
                seed: *seed,
                ..mc_config(cfg)
            };
            let r = oracles::mc_moments(&sys, spec, &basis, &config).map_err(|e| CliError::setup("monte_carlo check", e))?;
            let idx: Vec<usize> = ((*stride).max(1) - 1..basis.n_funcs()).step_by((*stride).max(1)).collect();
            let zm = worst_z(&mean, &r.mean, &r.mean_stderr, &idx);
            let zv = worst_z(&variance, &r.variance, &r.variance_stderr, &idx);
            table.push("monte_carlo_mean", r.mean);
            table.push("monte_carlo_variance", r.variance);
            Ok(CheckOutcome::measured(
                check.name(),
                format!("worst |diff|/SE over {} blocks (mean {zm:.3}, variance {zv:.3})", idx.len()),
                zm.max(zv),
                *sigmas,
            ))
        };
        variance_checks(cfg, &sys, &basis, &variance, &mut table, &mut checks, &mut mc_check)?;
    }
    Ok(RunOutcome {
        table,
        checks,
        details: serde_json::json!({ "cubature_nodes": grid.len() }),
    })
}

fn mc(cfg: &RunConfig, verify: bool) -> CliResult<RunOutcome> {
    let sys = cfg.build_system()?;
    let basis = cfg.basis()?;
    let spec = cfg.forcing()?;
    let config = mc_config(cfg);
    let r: McResult = oracles::mc_moments(&sys, spec, &basis, &config)?;
    let mut table = Table::new();
    table.push("t", r.times.clone());
    table.push("mean", r.mean.clone());
    table.push("variance", r.variance.clone());
    table.push("mean_stderr", r.mean_stderr.clone());
    table.push("variance_stderr", r.variance_stderr.clone());
    let mut checks = Vec::new();
    if verify {
        let mut no_mc = |check: &Check, _: &mut Table| Ok(CheckOutcome::skipped(check.name(), "a Monte-Carlo run cannot check itself"));
        variance_checks(cfg, &sys, &basis, &r.variance, &mut table, &mut checks, &mut no_mc)?;
    }
    Ok(RunOutcome {
        table,
        checks,
        details: serde_json::json!({ "samples": r.samples }),
    })
}
