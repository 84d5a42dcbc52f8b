//! Direct access to the reference solutions, one value per line.

use clap::ValueEnum;
use dorder::dosys::{Coefficient, Density, DensityTerm, Sense, Side};
use dorder::{oracles, DOSystem};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleName {
    /// Impulse response of the distributed integrator on [g1, g2].
    Impulse1,
    /// White-noise variance of a1 D^alpha1 y + a2 D^alpha2 y = u.
    Variance3,
    /// Steady-state white-noise variance of the damped second-order system,
    /// i.e. its squared H2 norm.
    H2norm4,
    /// Two-parameter Mittag-Leffler function E_{alpha,beta}(z).
    Ml,
}

#[derive(Debug, Clone)]
pub struct OracleArgs {
    pub name: OracleName,
    pub values: Vec<f64>,
    pub g1: f64,
    pub g2: f64,
    pub a1: f64,
    pub a2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub quad_points: usize,
}

/// Times used when none are given.
fn default_times() -> Vec<f64> {
    (1..=20).map(|k| 0.25 * k as f64).collect()
}

/// The damped system `y'' + 10 ∫_{0.8015}^{0.8893} D^α y dα + y = u`.
pub fn damped_system(quad_points: usize) -> CliResult<DOSystem> {
    DOSystem::new(
        "damped",
        vec![
            DensityTerm::point(Side::Lhs, Sense::Derivative, 2.0, Coefficient::Fixed(1.0)),
            DensityTerm::distributed(
                Side::Lhs,
                Sense::Derivative,
                Density::Constant { value: 1.0 },
                0.8015,
                0.8893,
                quad_points,
                Coefficient::Fixed(10.0),
            ),
            DensityTerm::identity(Side::Lhs, Coefficient::Fixed(1.0)),
            DensityTerm::identity(Side::Rhs, Coefficient::Fixed(1.0)),
        ],
        vec![],
    )
    .map_err(|e| CliError::setup("oracle", e))
}

/// Lines to print on stdout.
pub fn evaluate(args: &OracleArgs) -> CliResult<Vec<String>> {
    let series = |f: &dyn Fn(f64) -> dorder::Result<f64>| -> CliResult<Vec<String>> {
        let times = if args.values.is_empty() { default_times() } else { args.values.clone() };
        if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(CliError::config(format!("times must be finite and nonnegative, got {t}")));
        }
        let mut lines = vec!["t,value".to_string()];
        for t in times {
            lines.push(format!("{t},{}", f(t)?));
        }
        Ok(lines)
    };
    match args.name {
        OracleName::Impulse1 => series(&|t| oracles::impulse_distributed_integrator(t, args.g1, args.g2)),
        OracleName::Variance3 => {
            series(&|t| oracles::variance_double_integrator(t, args.a1, args.a2, args.alpha1, args.alpha2))
        }
        OracleName::H2norm4 => {
            if !args.values.is_empty() {
                return Err(CliError::config("h2norm4 takes no positional values"));
            }
            let v = oracles::steady_state_variance_frequency(&damped_system(args.quad_points)?)?;
            Ok(vec![format!("{v}")])
        }
        OracleName::Ml => match args.values.as_slice() {
            [alpha, beta, z] => Ok(vec![format!("{}", oracles::mittag_leffler(*alpha, *beta, *z)?)]),
            _ => Err(CliError::config("ml needs exactly three values: ALPHA BETA Z")),
        },
    }
}
