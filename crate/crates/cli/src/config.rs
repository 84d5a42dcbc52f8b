//! Run-description files.
//!
//! A file holds one system plus everything needed to drive it: the basis,
//! the deterministic input or the random forcing, Monte-Carlo settings and
//! optional verification checks. Anything left out is filled with a default
//! and the filled-in file is echoed into the manifest, so the manifest alone
//! reproduces the run.

use std::path::Path;

use dorder::dosys::{SystemDescription, TermKind};
use dorder::stochsolve::{ForcingSpec, MeanModel};
use dorder::DOSystem;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_N_BASIS: usize = 512;
pub const DEFAULT_HORIZON: f64 = 5.0;
pub const DEFAULT_MC_SAMPLES: usize = 10_000;
pub const DEFAULT_MC_SEED: u64 = 0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_basis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

/// Deterministic input for `solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    /// Unit Dirac pulse at t = 0.
    Impulse,
    Constant { value: f64 },
    /// Piecewise-linear through the points, held constant outside.
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl InputSpec {
    /// Pointwise value, `None` for the impulse.
    pub fn as_mean_model(&self) -> Option<MeanModel> {
        match self {
            InputSpec::Impulse => None,
            InputSpec::Constant { value } => Some(MeanModel::Constant { value: *value }),
            InputSpec::Table { times, values } => Some(MeanModel::Table {
                times: times.clone(),
                values: values.clone(),
            }),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halton: Option<bool>,
    /// Richardson extrapolation of the Grünwald-Letnikov paths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrapolate: Option<bool>,
}

fn default_t_min() -> f64 {
    0.0
}

fn default_intensity() -> f64 {
    1.0
}

fn default_tail() -> f64 {
    0.1
}

fn default_sigmas() -> f64 {
    3.0
}

fn default_stride() -> usize {
    10
}

/// A tolerance to test in `--verify` mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// Impulse response of `y = ∫_{g1}^{g2} I^α u dα` by branch-cut integral;
    /// max absolute error over midpoints `t >= t_min`.
    ImpulseDistributedIntegrator {
        g1: f64,
        g2: f64,
        #[serde(default = "default_t_min")]
        t_min: f64,
        abs_tol: f64,
    },
    /// Richardson-extrapolated Grünwald-Letnikov path (quarter- and
    /// half-block steps); max absolute error at midpoints.
    GrunwaldLetnikov {
        #[serde(default = "default_t_min")]
        t_min: f64,
        abs_tol: f64,
    },
    /// White-noise variance of `a1 D^{α1} y + a2 D^{α2} y = u` as a
    /// Mittag-Leffler integral; max relative error over `t >= t_min`.
    VarianceDoubleIntegrator {
        a1: f64,
        a2: f64,
        alpha1: f64,
        alpha2: f64,
        #[serde(default = "default_intensity")]
        intensity: f64,
        #[serde(default = "default_t_min")]
        t_min: f64,
        rel_tol: f64,
    },
    /// Mean variance over the last `tail_fraction` of the horizon against
    /// the frequency-domain H₂ variance under white forcing.
    VariancePlateau {
        #[serde(default = "default_tail")]
        tail_fraction: f64,
        rel_tol: f64,
    },
    /// Independent Monte-Carlo estimate; every `stride`-th block must agree
    /// within `sigmas` standard errors in both mean and variance.
    MonteCarlo {
        samples: usize,
        seed: u64,
        #[serde(default = "default_sigmas")]
        sigmas: f64,
        #[serde(default = "default_stride")]
        stride: usize,
    },
}

impl Check {
    pub fn name(&self) -> &'static str {
        match self {
            Check::ImpulseDistributedIntegrator { .. } => "impulse_distributed_integrator",
            Check::GrunwaldLetnikov { .. } => "grunwald_letnikov",
            Check::VarianceDoubleIntegrator { .. } => "variance_double_integrator",
            Check::VariancePlateau { .. } => "variance_plateau",
            Check::MonteCarlo { .. } => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub system: SystemDescription,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputSpec>,
    /// Initial value for derivative-form systems; the deterministic solve
    /// then works on the deviation from it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<ForcingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verify: Vec<Check>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub n_basis: Option<usize>,
    pub horizon: Option<f64>,
    pub quad_points: Option<usize>,
    pub param_order: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub halton: bool,
}

/// Parse a run description, reporting the failing field path and position.
pub fn parse(text: &str, origin: &str) -> CliResult<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let field = if path.is_empty() || path == "." { String::new() } else { format!(" at field `{path}`") };
        CliError::config(format!("{origin}{field} (line {}, column {}): {inner}", inner.line(), inner.column()))
    })?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(CliError::config(format!(
            "{origin}: unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    Ok(cfg)
}

pub fn load(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, &path.display().to_string())
}

impl RunConfig {
    /// Fold defaults and overrides into the file so that every knob is explicit.
    pub fn resolve(mut self, o: &Overrides) -> CliResult<Self> {
        let n = o.n_basis.or(self.basis.n_basis).unwrap_or(DEFAULT_N_BASIS);
        let horizon = o.horizon.or(self.basis.horizon).unwrap_or(DEFAULT_HORIZON);
        self.basis = BasisConfig {
            n_basis: Some(n),
            horizon: Some(horizon),
        };
        for term in &mut self.system.terms {
            if let TermKind::Distributed { quad_points, .. } = &mut term.kind {
                if let Some(q) = o.quad_points {
                    *quad_points = q;
                }
            }
        }
        if let Some(p) = o.param_order {
            for param in &mut self.system.random_params {
                param.quad_order = p;
            }
        }
        let mc = self.monte_carlo.take().unwrap_or_default();
        self.monte_carlo = Some(MonteCarloConfig {
            samples: Some(o.samples.or(mc.samples).unwrap_or(DEFAULT_MC_SAMPLES)),
            seed: Some(o.seed.or(mc.seed).unwrap_or(DEFAULT_MC_SEED)),
            halton: Some(o.halton || mc.halton.unwrap_or(false)),
            extrapolate: Some(mc.extrapolate.unwrap_or(true)),
        });
        Ok(self)
    }

    pub fn n_basis(&self) -> usize {
        self.basis.n_basis.unwrap_or(DEFAULT_N_BASIS)
    }

    pub fn horizon(&self) -> f64 {
        self.basis.horizon.unwrap_or(DEFAULT_HORIZON)
    }

    pub fn basis(&self) -> CliResult<dorder::BpfBasis> {
        dorder::BpfBasis::new(self.n_basis(), self.horizon()).map_err(|e| CliError::setup("basis", e))
    }

    pub fn build_system(&self) -> CliResult<DOSystem> {
        DOSystem::try_from(self.system.clone()).map_err(|e| CliError::setup("system", e))
    }

    pub fn forcing(&self) -> CliResult<&ForcingSpec> {
        let f = self
            .forcing
            .as_ref()
            .ok_or_else(|| CliError::config("this command needs a `forcing` block"))?;
        f.validate().map_err(|e| CliError::setup("forcing", e))?;
        Ok(f)
    }

    pub fn mc_settings(&self) -> MonteCarloConfig {
        self.monte_carlo.clone().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dorder::dosys::DEFAULT_ORDER_QUAD_POINTS;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "system": {"terms": [
            {"side": "lhs", "sense": "derivative", "kind": "point", "order": 1.0},
            {"side": "rhs", "kind": "point", "order": 0.0}
        ]}
    }"#;

    #[test]
    fn defaults_are_filled_in() {
        let cfg = parse(MINIMAL, "t").unwrap().resolve(&Overrides::default()).unwrap();
        assert_eq!(cfg.n_basis(), DEFAULT_N_BASIS);
        assert_eq!(cfg.horizon(), DEFAULT_HORIZON);
        let mc = cfg.mc_settings();
        assert_eq!(mc.samples, Some(DEFAULT_MC_SAMPLES));
        assert_eq!(mc.seed, Some(DEFAULT_MC_SEED));
        assert_eq!(mc.halton, Some(false));
        cfg.build_system().unwrap();
    }

    #[test]
    fn overrides_beat_the_file() {
        let text = MINIMAL.replace("\"system\"", "\"basis\": {\"n_basis\": 16, \"horizon\": 2.0}, \"system\"");
        let o = Overrides {
            n_basis: Some(8),
            ..Default::default()
        };
        let cfg = parse(&text, "t").unwrap().resolve(&o).unwrap();
        assert_eq!(cfg.n_basis(), 8);
        assert_eq!(cfg.horizon(), 2.0);
    }

    #[test]
    fn quad_points_override_reaches_distributed_terms() {
        let text = r#"{"schema_version": 1, "system": {"terms": [
            {"side": "lhs", "kind": "point", "order": 0.0},
            {"side": "rhs", "sense": "integral", "kind": "distributed",
             "density": {"type": "constant", "value": 1.0}, "lower": 0.5, "upper": 0.8}
        ]}}"#;
        let cfg = parse(text, "t").unwrap();
        match &cfg.system.terms[1].kind {
            TermKind::Distributed { quad_points, .. } => assert_eq!(*quad_points, DEFAULT_ORDER_QUAD_POINTS),
            other => panic!("{other:?}"),
        }
        let cfg = cfg
            .resolve(&Overrides {
                quad_points: Some(7),
                ..Default::default()
            })
            .unwrap();
        match &cfg.system.terms[1].kind {
            TermKind::Distributed { quad_points, .. } => assert_eq!(*quad_points, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn diagnostics_name_field_and_line() {
        let text = MINIMAL.replace("\"point\", \"order\": 1.0", "\"point\", \"order\": \"one\"");
        let msg = parse(&text, "cfg.json").unwrap_err().to_string();
        assert!(msg.contains("cfg.json"), "{msg}");
        assert!(msg.contains("system.terms[0]"), "{msg}");
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn schema_version_is_enforced() {
        let text = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(parse(&text, "t").unwrap_err().to_string().contains("schema_version 7"));
        let missing = MINIMAL.replace("\"schema_version\": 1,", "");
        assert!(parse(&missing, "t").is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 1, \"horizn\": 3");
        assert!(parse(&text, "t").unwrap_err().to_string().contains("horizn"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = parse(MINIMAL, "t").unwrap().resolve(&Overrides::default()).unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let again = parse(&text, "t").unwrap().resolve(&Overrides::default()).unwrap();
        assert_eq!(serde_json::to_value(&cfg).unwrap(), serde_json::to_value(&again).unwrap());
    }
}
