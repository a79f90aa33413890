//! Experiment configuration: strict TOML with dotted-path overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Optimize,
    PdeRun,
    Positivity,
    #[serde(rename = "confinement-1d")]
    Confinement1d,
    MflScaling,
    DecayFit,
    AssumptionsCheck,
    LemmaCheck,
    SuccessProb,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Optimize => "optimize",
            Self::PdeRun => "pde-run",
            Self::Positivity => "positivity",
            Self::Confinement1d => "confinement-1d",
            Self::MflScaling => "mfl-scaling",
            Self::DecayFit => "decay-fit",
            Self::AssumptionsCheck => "assumptions-check",
            Self::LemmaCheck => "lemma-check",
            Self::SuccessProb => "success-prob",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub cbo: CboSection,
    #[serde(default)]
    pub pde: PdeSection,
    #[serde(default)]
    pub cutoff: CutoffSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
}

fn default_seed() -> u64 {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Objective and problem dimension shared by every experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSection {
    pub name: String,
    pub dim: usize,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        Self { name: "quadratic".into(), dim: 2 }
    }
}

/// Particle method parameters; `lambda`, `sigma` and `alpha` also drive the PDE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CboSection {
    pub lambda: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub dt: f64,
    pub particles: usize,
    pub steps: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_mean: Option<Vec<f64>>,
    pub init_std: f64,
}

impl Default for CboSection {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            sigma: 0.1,
            alpha: 20.0,
            dt: 0.01,
            particles: 2000,
            steps: 400,
            init_mean: None,
            init_std: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialShape {
    /// `exp(-a / (1 - s²))` with `s = ‖v - center‖ / radius`, zero for `s ≥ 1`.
    Bump,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeSection {
    /// Must agree with `objective.dim` when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Only `cbo_form` is available from the command line.
    pub form: String,
    /// `self_consistent` or `frozen_path` (a fixed consensus point `v_fixed`).
    pub valpha_mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_fixed: Option<Vec<f64>>,
    /// Box half-width.
    #[serde(rename = "L")]
    pub half_width: f64,
    /// Largest mode per axis.
    #[serde(rename = "K")]
    pub modes: usize,
    /// Grid points per axis.
    #[serde(rename = "M")]
    pub grid: usize,
    pub horizon: f64,
    pub cfl: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub initial: InitialShape,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_center: Option<Vec<f64>>,
    /// Bump radius or Gaussian standard deviation.
    pub initial_radius: f64,
    pub initial_sharpness: f64,
    /// Every how many steps a row is written to `mass.csv`.
    pub record_every: usize,
    /// Every how many steps the coefficients are written; 0 writes only the final state.
    pub snapshot_every: usize,
    pub write_density: bool,
}

impl Default for PdeSection {
    fn default() -> Self {
        Self {
            dim: None,
            form: "cbo_form".into(),
            valpha_mode: "self_consistent".into(),
            v_fixed: None,
            half_width: 8.0,
            modes: 64,
            grid: 256,
            horizon: 0.5,
            cfl: cbolab_core::pde::DEFAULT_CFL,
            dt: None,
            initial: InitialShape::Bump,
            initial_center: None,
            initial_radius: 2.8,
            initial_sharpness: 2.0,
            record_every: 1,
            snapshot_every: 0,
            write_density: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoffSection {
    pub enabled: bool,
    pub r: f64,
    pub n: f64,
    pub plateau_scale: f64,
}

impl Default for CutoffSection {
    fn default() -> Self {
        Self { enabled: true, r: 6.5, n: 6.5, plateau_scale: 0.72 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum W2Target {
    /// The known minimizer of the objective.
    Minimizer,
    /// The consensus point of the current step.
    Consensus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientKind {
    /// `G = ‖v - c‖²`, `J = v - c`.
    Cbo,
    /// `G = ‖v - c‖^g_power`, `‖J‖ = ‖v - c‖^j_power`, `J ∥ v - c`.
    Power,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub w2_target: W2Target,
    pub w2_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_end: Option<f64>,
    pub rate_range: [f64; 2],
    pub min_r_squared: f64,

    pub sizes: Vec<usize>,
    pub reference_size: usize,
    pub horizon: f64,
    pub replicates: usize,
    pub slope_range: [f64; 2],

    pub annulus: [f64; 2],
    pub positivity_floor: f64,
    pub mass_tol: f64,
    pub confinement_tol: f64,

    pub coefficients: CoefficientKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    pub g_power: f64,
    pub j_power: f64,
    pub max_order: usize,
    pub ratio_bound: f64,
    pub sample_radius: f64,
    pub samples: usize,
    pub refine_tol: f64,

    pub runs: usize,
    pub epsilon: f64,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            w2_target: W2Target::Minimizer,
            w2_tol: 1e-6,
            fit_start: None,
            fit_end: None,
            rate_range: [1.0, 2.0],
            min_r_squared: 0.95,
            sizes: vec![64, 256, 1024, 4096],
            reference_size: 16384,
            horizon: 1.0,
            replicates: 4,
            slope_range: [-1.3, -0.7],
            annulus: [0.25, 5.0],
            positivity_floor: 1e-12,
            mass_tol: 1e-3,
            confinement_tol: 1e-8,
            coefficients: CoefficientKind::Cbo,
            center: None,
            g_power: 2.0,
            j_power: 1.0,
            max_order: 2,
            ratio_bound: f64::INFINITY,
            sample_radius: 10.0,
            samples: 10_000,
            refine_tol: 0.05,
            runs: 100,
            epsilon: 0.25,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_override_value(value: &str) -> Value {
    match format!("v = {value}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(value.into())),
        Err(_) => Value::String(value.into()),
    }
}

/// Applies `key.path=value` to a raw table, creating intermediate tables.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<(), ConfigError> {
    let Some((key, value)) = assignment.split_once('=') else {
        return err(format!("override `{assignment}` is not of the form key=value"));
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return err(format!("override key `{key}` has an empty component"));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cursor = table;
    for (depth, part) in parents.iter().enumerate() {
        let entry = cursor.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cursor = match entry {
            Value::Table(t) => t,
            _ => return err(format!("override `{key}`: `{}` is not a table", parts[..=depth].join("."))),
        };
    }
    cursor.insert(last.to_string(), parse_override_value(value.trim()));
    Ok(())
}

impl ExperimentConfig {
    pub fn from_table(table: Table) -> Result<Self, ConfigError> {
        let cfg: Self = serde_path_to_error::deserialize(Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                ConfigError(format!("config error: {inner}"))
            } else {
                ConfigError(format!("config error at `{path}`: {inner}"))
            }
        })?;
        cfg.resolved()
    }

    pub fn from_str_with(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: Table = text.parse().map_err(|e| ConfigError(format!("config is not valid TOML: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_str_with(&text, overrides)
            .map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    /// Fills dimension-dependent defaults and validates cross-field constraints.
    fn resolved(mut self) -> Result<Self, ConfigError> {
        let dim = self.objective.dim;
        if dim == 0 {
            return err("config error at `objective.dim`: dimension must be positive");
        }
        let zeros = vec![0.0; dim];
        let init_mean = self.cbo.init_mean.get_or_insert_with(|| zeros.clone());
        check_len("cbo.init_mean", init_mean, dim)?;
        let default_center = if dim == 1 { vec![-2.25] } else { vec![2.0; dim] };
        check_len("pde.initial_center", self.pde.initial_center.get_or_insert(default_center), dim)?;
        check_len("pde.v_fixed", self.pde.v_fixed.get_or_insert_with(|| zeros.clone()), dim)?;
        check_len("diagnostics.center", self.diagnostics.center.get_or_insert_with(|| zeros.clone()), dim)?;
        if *self.pde.dim.get_or_insert(dim) != dim {
            return err(format!("config error at `pde.dim`: {} differs from objective.dim = {dim}", self.pde.dim.unwrap_or(0)));
        }
        if self.pde.form != "cbo_form" {
            return err(format!("config error at `pde.form`: `{}` is not available here (expected cbo_form)", self.pde.form));
        }
        if !matches!(self.pde.valpha_mode.as_str(), "self_consistent" | "frozen_path") {
            return err(format!(
                "config error at `pde.valpha_mode`: unknown mode `{}` (expected self_consistent or frozen_path)",
                self.pde.valpha_mode
            ));
        }
        if self.pde.record_every == 0 {
            return err("config error at `pde.record_every`: must be at least 1");
        }
        Ok(self)
    }

    /// The fully resolved config as TOML; loading it back yields the same config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}

fn check_len(key: &str, v: &[f64], dim: usize) -> Result<(), ConfigError> {
    if v.len() != dim {
        return err(format!("config error at `{key}`: expected {dim} components, got {}", v.len()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_dimension_dependent_fields() {
        let cfg = ExperimentConfig::from_str_with("experiment = \"optimize\"", &[]).unwrap();
        assert_eq!(cfg.cbo.init_mean, Some(vec![0.0, 0.0]));
        assert_eq!(cfg.pde.initial_center, Some(vec![2.0, 2.0]));
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let e = ExperimentConfig::from_str_with("experiment = \"optimize\"\n[cbo]\nsigmaa = 1.0\n", &[]).unwrap_err();
        assert!(e.0.contains("cbo") && e.0.contains("sigmaa"), "{e}");
        let e = ExperimentConfig::from_str_with("experiment = \"optimize\"\nbogus = 1\n", &[]).unwrap_err();
        assert!(e.0.contains("bogus"), "{e}");
    }

    #[test]
    fn type_errors_point_at_the_key() {
        let e = ExperimentConfig::from_str_with("experiment = \"optimize\"\n[cbo]\nsigma = \"x\"\n", &[]).unwrap_err();
        assert!(e.0.contains("`cbo.sigma`"), "{e}");
    }

    #[test]
    fn overrides_parse_typed_values() {
        let overrides = vec!["cbo.sigma=0.25".into(), "objective.name=rastrigin".into(), "cbo.init_mean=[1, 2]".into()];
        let cfg = ExperimentConfig::from_str_with("experiment = \"optimize\"", &overrides).unwrap();
        assert_eq!(cfg.cbo.sigma, 0.25);
        assert_eq!(cfg.objective.name, "rastrigin");
        assert_eq!(cfg.cbo.init_mean, Some(vec![1.0, 2.0]));
        let mut t = Table::new();
        assert!(apply_override(&mut t, "novalue").is_err());
        assert!(apply_override(&mut t, "a..b=1").is_err());
        t.insert("seed".into(), Value::Integer(3));
        assert!(apply_override(&mut t, "seed.x=1").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ExperimentConfig::from_str_with("experiment = \"confinement-1d\"\n[objective]\ndim = 1\n", &[]).unwrap();
        let again = ExperimentConfig::from_str_with(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.diagnostics.ratio_bound, f64::INFINITY);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let e = ExperimentConfig::from_str_with("experiment = \"optimize\"\n[cbo]\ninit_mean = [1.0]\n", &[]).unwrap_err();
        assert!(e.0.contains("cbo.init_mean"), "{e}");
    }
}
