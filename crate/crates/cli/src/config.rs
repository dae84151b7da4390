//! JSON run configuration: parsing, defaults and validation.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wentzell_core::{FractionalParams, GeometrySpec, Mesh64, NonlinearitySpec, ProbeGrid};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration at `{path}`: {message}")]
    Field { path: String, message: String },
    #[error("constraint violated: {0}")]
    Constraint(String),
}

impl ConfigError {
    fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Field {
            path: path.into(),
            message: message.into(),
        }
    }

    /// JSON path of the offending key, when there is one.
    pub fn path(&self) -> Option<&str> {
        match self {
            ConfigError::Field { path, .. } => Some(path),
            _ => None,
        }
    }
}

/// A closed-form field sampled at the mesh nodes, with `x` across the
/// thickness and `y` along the periodic direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldTerm {
    Constant {
        value: f64,
    },
    /// `amplitude · cos(π(kx·x + ky·y) + phase)`.
    Cosine {
        amplitude: f64,
        #[serde(default)]
        kx: f64,
        #[serde(default)]
        ky: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `amplitude · |x − center|`.
    Abs {
        amplitude: f64,
        center: f64,
    },
    /// `amplitude · (x − center)^power` with a nonnegative integer power.
    Monomial {
        amplitude: f64,
        #[serde(default)]
        center: f64,
        power: u32,
    },
}

impl FieldTerm {
    fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            FieldTerm::Constant { value } => value,
            FieldTerm::Cosine { amplitude, kx, ky, phase } => amplitude * (PI * (kx * x + ky * y) + phase).cos(),
            FieldTerm::Abs { amplitude, center } => amplitude * (x - center).abs(),
            FieldTerm::Monomial { amplitude, center, power } => amplitude * (x - center).powi(power as i32),
        }
    }

    fn validate(&self, path: &str) -> Result<(), ConfigError> {
        let values: &[f64] = match self {
            FieldTerm::Constant { value } => &[*value],
            FieldTerm::Cosine { amplitude, kx, ky, phase } => &[*amplitude, *kx, *ky, *phase],
            FieldTerm::Abs { amplitude, center } => &[*amplitude, *center],
            FieldTerm::Monomial { amplitude, center, .. } => &[*amplitude, *center],
        };
        if values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ConfigError::field(path, "field parameters must be finite"))
        }
    }
}

pub fn sample_field(mesh: &Mesh64, terms: &[FieldTerm]) -> Vec<f64> {
    mesh.sample(|x, y| terms.iter().map(|t| t.eval(x, y)).sum())
}

/// One modal coefficient; `mode` is 1-based as in `eigs.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalImpulse {
    pub mode: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Modes {
        #[serde(default)]
        displacement: Vec<ModalImpulse>,
        #[serde(default)]
        velocity: Vec<ModalImpulse>,
    },
    Field {
        #[serde(default)]
        displacement: Vec<FieldTerm>,
        #[serde(default)]
        velocity: Vec<FieldTerm>,
    },
    /// Uniform coefficients in `[-scale, scale]` on the first `modes` modes,
    /// drawn from the run seed.
    RandomModes { modes: usize, scale: f64 },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Modes {
            displacement: vec![ModalImpulse { mode: 1, value: 0.1 }],
            velocity: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "one_usize")]
    pub sample_stride: usize,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalerkinConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub convergence: Vec<usize>,
}

fn default_n() -> usize {
    8
}

impl Default for GalerkinConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            convergence: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundOffset {
    /// `kinetic + elastic ≤ E(0)` plus the tolerance.
    #[default]
    Zero,
    /// Adds `2C_δ t` with `C_δ` fitted by the balance check.
    Fitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    #[serde(default = "yes")]
    pub energy: bool,
    #[serde(default = "yes")]
    pub identity: bool,
    #[serde(default = "default_identity_tol")]
    pub identity_tolerance: f64,
    #[serde(default = "yes")]
    pub weak_residual: bool,
    #[serde(default = "default_weak_tol")]
    pub weak_residual_tolerance: f64,
    #[serde(default = "default_test_modes")]
    pub weak_residual_modes: usize,
    #[serde(default = "yes")]
    pub balance: bool,
    #[serde(default = "yes")]
    pub sign_growth: bool,
    #[serde(default = "yes")]
    pub a_priori_bound: bool,
    #[serde(default)]
    pub bound_offset: BoundOffset,
}

fn yes() -> bool {
    true
}

fn default_identity_tol() -> f64 {
    1e-8
}

fn default_weak_tol() -> f64 {
    1e-6
}

fn default_test_modes() -> usize {
    4
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            energy: true,
            identity: true,
            identity_tolerance: default_identity_tol(),
            weak_residual: true,
            weak_residual_tolerance: default_weak_tol(),
            weak_residual_modes: default_test_modes(),
            balance: true,
            sign_growth: true,
            a_priori_bound: true,
            bound_offset: BoundOffset::Zero,
        }
    }
}

/// Data of the stationary problem `−Δu = p₁` in the bulk with
/// `∂ₙu − Δ_Γu + u = p₂` on the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BvpConfig {
    #[serde(default)]
    pub bulk: Vec<FieldTerm>,
    #[serde(default)]
    pub boundary: Vec<FieldTerm>,
}

/// The file as written, before defaults that depend on other sections.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    geometry: GeometrySpec,
    #[serde(default)]
    fractional: FractionalParams,
    #[serde(default)]
    nonlinearity: Option<NonlinearitySpec>,
    #[serde(default)]
    initial_data: InitialData,
    time: TimeConfig,
    #[serde(default)]
    galerkin: GalerkinConfig,
    #[serde(default)]
    checks: ChecksConfig,
    #[serde(default)]
    balance_grid: ProbeGrid,
    #[serde(default)]
    bvp: BvpConfig,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
}

/// Fully resolved configuration; serializing it gives the echo written to
/// the summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub geometry: GeometrySpec,
    pub fractional: FractionalParams,
    pub nonlinearity: NonlinearitySpec,
    pub initial_data: InitialData,
    pub time: TimeConfig,
    pub galerkin: GalerkinConfig,
    pub checks: ChecksConfig,
    pub balance_grid: ProbeGrid,
    pub bvp: BvpConfig,
    /// Not part of the echo: moving the output does not change a run.
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::field(if path == "." { String::from("$") } else { path }, e.inner().to_string())
    })?;
    de.end().map_err(|e| ConfigError::field("$", e.to_string()))?;
    resolve(raw)
}

fn resolve(raw: RawConfig) -> Result<RunConfig, ConfigError> {
    if raw.schema_version != SCHEMA_VERSION {
        return Err(ConfigError::field(
            "schema_version",
            format!("unsupported version {}, expected {SCHEMA_VERSION}", raw.schema_version),
        ));
    }
    let core_err = |e: wentzell_core::Error| match e {
        wentzell_core::Error::Config { field, message } => ConfigError::Field { path: field, message },
        other => ConfigError::field("$", other.to_string()),
    };
    raw.geometry.validate().map_err(core_err)?;
    raw.fractional.validate().map_err(core_err)?;

    let omega = raw.fractional.omega;
    let nonlinearity = match raw.nonlinearity {
        Some(spec) => {
            spec.validate().map_err(core_err)?;
            if !(spec.epsilon > 0.0 && spec.epsilon < omega) {
                return Err(ConfigError::Constraint(format!(
                    "ε ∈ (0, ω) required, got ε = {} with ω = {omega} (nonlinearity.epsilon)",
                    spec.epsilon
                )));
            }
            spec
        }
        None => NonlinearitySpec::default().with_epsilon(omega / 2.0),
    };

    let time = raw.time;
    if !(time.dt > 0.0 && time.dt.is_finite()) {
        return Err(ConfigError::field("time.dt", "must be a positive finite number"));
    }
    if !(time.t_end.is_finite() && time.dt < time.t_end) {
        return Err(ConfigError::Constraint(format!(
            "dt < T required, got dt = {} and T = {} (time.dt, time.t_end)",
            time.dt, time.t_end
        )));
    }
    if time.sample_stride < 1 {
        return Err(ConfigError::field("time.sample_stride", "must be at least 1"));
    }

    let galerkin = raw.galerkin;
    if galerkin.n < 1 {
        return Err(ConfigError::field("galerkin.n", "must be at least 1"));
    }
    if galerkin.convergence.contains(&0) {
        return Err(ConfigError::field("galerkin.convergence", "dimensions must be positive"));
    }
    if galerkin.convergence.windows(2).any(|w| w[0] > w[1]) {
        return Err(ConfigError::field("galerkin.convergence", "dimensions must be nondecreasing"));
    }

    let checks = raw.checks;
    for (path, v) in [
        ("checks.identity_tolerance", checks.identity_tolerance),
        ("checks.weak_residual_tolerance", checks.weak_residual_tolerance),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ConfigError::field(path, "must be a positive finite number"));
        }
    }
    if checks.weak_residual_modes < 1 {
        return Err(ConfigError::field("checks.weak_residual_modes", "must be at least 1"));
    }

    validate_initial_data(&raw.initial_data)?;
    for (name, terms) in [("bulk", &raw.bvp.bulk), ("boundary", &raw.bvp.boundary)] {
        for (i, t) in terms.iter().enumerate() {
            t.validate(&format!("bvp.{name}[{i}]"))?;
        }
    }
    raw.balance_grid
        .validate()
        .map_err(|e| ConfigError::field("balance_grid", e.to_string()))?;

    Ok(RunConfig {
        schema_version: raw.schema_version,
        geometry: raw.geometry,
        fractional: raw.fractional,
        nonlinearity,
        initial_data: raw.initial_data,
        time,
        galerkin,
        checks,
        balance_grid: raw.balance_grid,
        bvp: raw.bvp,
        output_dir: raw.output_dir,
        seed: raw.seed,
    })
}

fn validate_initial_data(data: &InitialData) -> Result<(), ConfigError> {
    match data {
        InitialData::Modes { displacement, velocity } => {
            for (name, list) in [("displacement", displacement), ("velocity", velocity)] {
                for (i, m) in list.iter().enumerate() {
                    if m.mode < 1 {
                        return Err(ConfigError::field(
                            format!("initial_data.{name}[{i}].mode"),
                            "modes are numbered from 1",
                        ));
                    }
                    if !m.value.is_finite() {
                        return Err(ConfigError::field(format!("initial_data.{name}[{i}].value"), "must be finite"));
                    }
                }
            }
        }
        InitialData::Field { displacement, velocity } => {
            for (name, list) in [("displacement", displacement), ("velocity", velocity)] {
                for (i, t) in list.iter().enumerate() {
                    t.validate(&format!("initial_data.{name}[{i}]"))?;
                }
            }
        }
        InitialData::RandomModes { modes, scale } => {
            if *modes < 1 {
                return Err(ConfigError::field("initial_data.modes", "must be at least 1"));
            }
            if !(scale.is_finite() && *scale >= 0.0) {
                return Err(ConfigError::field("initial_data.scale", "must be a nonnegative finite number"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "geometry": { "kind": "interval", "length": 1.0, "bulk_elements": 16 },
        "time": { "t_end": 1.0, "dt": 0.01 }
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        assert_eq!(cfg.fractional, FractionalParams::default());
        assert_eq!(cfg.time.sample_stride, 1);
        assert_eq!(cfg.galerkin.n, 8);
        assert!(cfg.nonlinearity.is_linear());
        assert!(cfg.nonlinearity.epsilon < cfg.fractional.omega);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn theta_out_of_range_names_the_key() {
        let text = MINIMAL.replace("\"time\"", "\"fractional\": { \"theta\": 0.3 }, \"time\"");
        let err = parse_config_str(&text).unwrap_err();
        assert_eq!(err.path(), Some("fractional.theta"));
        assert!(err.to_string().contains("[1/2, 1]"));
    }

    #[test]
    fn type_errors_carry_the_json_path() {
        let text = MINIMAL.replace("\"bulk_elements\": 16", "\"bulk_elements\": \"many\"");
        let err = parse_config_str(&text).unwrap_err();
        assert_eq!(err.path(), Some("geometry.bulk_elements"));
        let text = MINIMAL.replace("\"dt\": 0.01", "\"dt\": 0.01, \"stride\": 2");
        assert!(parse_config_str(&text).unwrap_err().path().unwrap().starts_with("time"));
        let text = MINIMAL.replace("\"schema_version\": 1,", "");
        assert!(parse_config_str(&text).unwrap_err().to_string().contains("schema_version"));
    }

    #[test]
    fn epsilon_equal_to_omega_is_a_constraint_error() {
        let text = MINIMAL.replace(
            "\"time\"",
            "\"fractional\": { \"omega\": 0.5 }, \"nonlinearity\": { \"epsilon\": 0.5 }, \"time\"",
        );
        let err = parse_config_str(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Constraint(_)));
        assert!(err.to_string().contains("ε ∈ (0, ω)"));
    }

    #[test]
    fn time_constraints() {
        let text = MINIMAL.replace("\"dt\": 0.01", "\"dt\": 2.0");
        assert!(matches!(parse_config_str(&text).unwrap_err(), ConfigError::Constraint(_)));
        let text = MINIMAL.replace("\"dt\": 0.01", "\"dt\": 0.01, \"sample_stride\": 0");
        assert_eq!(parse_config_str(&text).unwrap_err().path(), Some("time.sample_stride"));
    }

    #[test]
    fn field_terms_evaluate() {
        let t = FieldTerm::Cosine {
            amplitude: 2.0,
            kx: 1.0,
            ky: 0.0,
            phase: 0.0,
        };
        assert!((t.eval(0.5, 0.0)).abs() < 1e-15);
        let a = FieldTerm::Abs {
            amplitude: 1.0,
            center: 0.5,
        };
        assert_eq!(a.eval(0.0, 3.0), 0.5);
    }
}
