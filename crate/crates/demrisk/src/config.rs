//! Run configuration: a single JSON document describing the policy, cohort,
//! demographic and financial bases, and simulation controls. The schema is
//! validated before any computation, with path-qualified error messages.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::contract::{
    Cohort, ContractError, Loadings, PolicyKind, PolicySpec, PremiumType, SurrenderPenalty,
};
use crate::curve::{load_yield_curve, CurveError, Discounting, VasicekParams, YieldCurve};
use crate::engine::SimulationConfig;
use crate::lifetable::{load_life_table, LifeTable, ScalingSchedule, TableError};
use crate::profit::ExpenseAssumptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("config.{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("config.{key}: file not found: {file}")]
    MissingFile { key: String, file: String },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Contract(#[from] ContractError),
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub policy: PolicyConfig,
    pub cohort: CohortConfig,
    pub lifetables: LifeTablesConfig,
    pub curve: CurveConfig,
    #[serde(default)]
    pub vasicek: VasicekConfig,
    #[serde(default)]
    pub simulation: SimulationSection,
    /// Realized asset return; defaults to the one-year spot rate.
    #[serde(default)]
    pub asset_return: Option<f64>,
    #[serde(default)]
    pub lapse: LapseConfig,
    #[serde(default)]
    pub expenses_realized: ExpenseDeltasConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKindConfig,
    pub issue_age: u32,
    pub duration: u32,
    pub premium_type: PremiumTypeConfig,
    pub technical_rate: f64,
    #[serde(default)]
    pub loadings: LoadingsConfig,
    #[serde(default)]
    pub surrender: Option<SurrenderConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKindConfig {
    PureEndowment,
    Endowment,
    TermInsurance,
}

impl From<PolicyKindConfig> for PolicyKind {
    fn from(k: PolicyKindConfig) -> Self {
        match k {
            PolicyKindConfig::PureEndowment => PolicyKind::PureEndowment,
            PolicyKindConfig::Endowment => PolicyKind::Endowment,
            PolicyKindConfig::TermInsurance => PolicyKind::TermInsurance,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PremiumTypeConfig {
    Single,
    Annual,
}

impl From<PremiumTypeConfig> for PremiumType {
    fn from(p: PremiumTypeConfig) -> Self {
        match p {
            PremiumTypeConfig::Single => PremiumType::Single,
            PremiumTypeConfig::Annual => PremiumType::Annual,
        }
    }
}

/// acquisition and collection load each gross premium; management is a
/// per-year rate on the sum insured.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadingsConfig {
    #[serde(default)]
    pub acquisition: f64,
    #[serde(default)]
    pub collection: f64,
    #[serde(default)]
    pub management: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrenderConfig {
    pub vesting_years: u32,
    pub penalty_rate: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortConfig {
    #[serde(default)]
    pub policyholders: Option<u64>,
    #[serde(default)]
    pub sum_mean: Option<f64>,
    #[serde(default)]
    pub sum_cv: Option<f64>,
    /// Explicit individual sums; replaces the three moment fields.
    #[serde(default)]
    pub sums: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifeTablesConfig {
    pub first_order: PathBuf,
    pub second_order: PathBuf,
    /// Drop table rows below this age; defaults to keeping the whole file.
    #[serde(default)]
    pub min_age: Option<u32>,
    /// Optional scaling applied to the first-order table after loading.
    #[serde(default)]
    pub first_order_scale: Option<ScaleConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScaleConfig {
    Constant {
        factor: f64,
    },
    Linear {
        start_age: u32,
        start_multiplier: f64,
        end_age: u32,
        end_multiplier: f64,
    },
}

impl From<&ScaleConfig> for ScalingSchedule {
    fn from(s: &ScaleConfig) -> Self {
        match *s {
            ScaleConfig::Constant { factor } => ScalingSchedule::Constant(factor),
            ScaleConfig::Linear {
                start_age,
                start_multiplier,
                end_age,
                end_multiplier,
            } => ScalingSchedule::LinearRamp {
                start_age,
                start: start_multiplier,
                end_age,
                end: end_multiplier,
            },
        }
    }
}

/// Exactly one curve source: a CSV file or a flat rate with a horizon.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub flat: Option<f64>,
    #[serde(default)]
    pub maturities: Option<u32>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VasicekConfig {
    /// Mean-reversion speed.
    #[serde(default = "default_mean_reversion")]
    pub a: f64,
    /// Long-run mean; defaults to the longest-maturity spot rate.
    #[serde(default)]
    pub b: Option<f64>,
    /// Volatility per sqrt-year.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Calibration search bounds for the short-rate level.
    #[serde(default = "default_bounds")]
    pub bounds: (f64, f64),
}

fn default_mean_reversion() -> f64 {
    0.1
}

fn default_sigma() -> f64 {
    0.006
}

fn default_bounds() -> (f64, f64) {
    (-0.9, 1.5)
}

impl Default for VasicekConfig {
    fn default() -> Self {
        Self {
            a: default_mean_reversion(),
            b: None,
            sigma: default_sigma(),
            bounds: default_bounds(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_n_sims")]
    pub n_sims: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    /// Valuation times to simulate at.
    #[serde(default = "default_times")]
    pub times: Vec<u32>,
    /// Worker threads; 0 = library default pool.
    #[serde(default)]
    pub threads: usize,
}

fn default_n_sims() -> u64 {
    10_000
}

fn default_confidence() -> f64 {
    0.995
}

fn default_times() -> Vec<u32> {
    vec![0]
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            n_sims: default_n_sims(),
            seed: 0,
            confidence: default_confidence(),
            times: default_times(),
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LapseConfig {
    #[serde(default)]
    pub annual_rate: f64,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpenseDeltasConfig {
    #[serde(default)]
    pub delta_acquisition: f64,
    #[serde(default)]
    pub delta_collection: f64,
    #[serde(default)]
    pub delta_management: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Everything the commands need, built from a validated `RunConfig`.
#[derive(Debug, Clone)]
pub struct ModelInputs {
    pub policy: PolicySpec,
    pub cohort: Cohort,
    pub second_order: LifeTable,
    pub curve: YieldCurve,
    pub vasicek: VasicekParams,
    pub vasicek_bounds: (f64, f64),
    pub simulation: SimulationConfig,
    pub times: Vec<u32>,
    pub asset_return: Option<f64>,
    pub expenses: ExpenseAssumptions,
}

impl ModelInputs {
    pub fn discounting(&self) -> Discounting {
        Discounting::Curve(self.curve.clone())
    }
}

impl RunConfig {
    /// Reads and parses a config file; `raw` is echoed into JSON reports.
    pub fn load(path: impl AsRef<Path>) -> Result<(RunConfig, serde_json::Value), ConfigError> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: display.clone(),
            source,
        })?;
        let raw: serde_json::Value =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
                path: display.clone(),
                source,
            })?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: display,
            source,
        })?;
        cfg.validate(path.parent())?;
        Ok((cfg, raw))
    }

    /// Schema and referenced-file validation; all computation happens later.
    pub fn validate(&self, base_dir: Option<&Path>) -> Result<(), ConfigError> {
        match (&self.curve.path, self.curve.flat) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(invalid(
                    "curve",
                    "exactly one of `path` or `flat` must be set",
                ));
            }
            (None, Some(rate)) => {
                if rate <= -1.0 {
                    return Err(invalid("curve.flat", "rate must exceed -1"));
                }
                if self.curve.maturities.unwrap_or(60) == 0 {
                    return Err(invalid("curve.maturities", "must be at least 1"));
                }
            }
            (Some(_), None) => {}
        }
        match (&self.cohort.sums, self.cohort.policyholders) {
            (Some(sums), _) => {
                if sums.is_empty() {
                    return Err(invalid("cohort.sums", "must not be empty"));
                }
            }
            (None, Some(_)) => {
                if self.cohort.sum_mean.is_none() {
                    return Err(invalid(
                        "cohort.sum_mean",
                        "required when `sums` is not given",
                    ));
                }
            }
            (None, None) => {
                return Err(invalid(
                    "cohort",
                    "either `sums` or (`policyholders`, `sum_mean`, `sum_cv`) must be given",
                ));
            }
        }
        if !(self.simulation.confidence > 0.5 && self.simulation.confidence < 1.0) {
            return Err(invalid("simulation.confidence", "must lie in (0.5, 1)"));
        }
        if self.simulation.n_sims == 0 {
            return Err(invalid("simulation.n_sims", "must be at least 1"));
        }
        if self.simulation.times.is_empty() {
            return Err(invalid("simulation.times", "must not be empty"));
        }
        for &t in &self.simulation.times {
            if t >= self.policy.duration {
                return Err(invalid(
                    "simulation.times",
                    format!(
                        "time {t} is not before the policy duration {}",
                        self.policy.duration
                    ),
                ));
            }
        }
        if !(0.0..1.0).contains(&self.lapse.annual_rate) {
            return Err(invalid("lapse.annual_rate", "must lie in [0, 1)"));
        }
        if self.output.formats.is_empty() {
            return Err(invalid("output.formats", "must not be empty"));
        }
        if let Some(p) = &self.curve.path {
            let file = resolve(base_dir, p);
            if !file.exists() {
                return Err(ConfigError::MissingFile {
                    key: "curve.path".into(),
                    file: file.display().to_string(),
                });
            }
        }
        for (key, p) in [
            ("lifetables.first_order", &self.lifetables.first_order),
            ("lifetables.second_order", &self.lifetables.second_order),
        ] {
            let file = resolve(base_dir, p);
            if !file.exists() {
                return Err(ConfigError::MissingFile {
                    key: key.into(),
                    file: file.display().to_string(),
                });
            }
        }
        Ok(())
    }

    /// Loads tables and the curve and assembles the domain objects.
    /// `base_dir` anchors relative file paths (normally the config's parent).
    pub fn build(&self, base_dir: Option<&Path>) -> Result<ModelInputs, ConfigError> {
        let min_age = self.lifetables.min_age.unwrap_or(0);
        let mut first_order =
            load_life_table(resolve(base_dir, &self.lifetables.first_order), min_age)?;
        if let Some(scale) = &self.lifetables.first_order_scale {
            first_order = first_order.scale(&ScalingSchedule::from(scale))?;
        }
        let second_order =
            load_life_table(resolve(base_dir, &self.lifetables.second_order), min_age)?;

        let curve = match (&self.curve.path, self.curve.flat) {
            (Some(p), None) => load_yield_curve(resolve(base_dir, p))?,
            (None, Some(rate)) => YieldCurve::flat(
                0,
                rate,
                self.curve
                    .maturities
                    .unwrap_or(60)
                    .max(self.policy.duration),
            )?,
            _ => unreachable!("validated: exactly one curve source"),
        };

        let policy = PolicySpec {
            kind: self.policy.kind.into(),
            issue_age: self.policy.issue_age,
            duration: self.policy.duration,
            premium_type: self.policy.premium_type.into(),
            technical_rate: self.policy.technical_rate,
            loadings: Loadings {
                acquisition: self.policy.loadings.acquisition,
                collection: self.policy.loadings.collection,
                management: self.policy.loadings.management,
            },
            surrender: self.policy.surrender.map(|s| SurrenderPenalty {
                vesting_years: s.vesting_years,
                penalty_rate: s.penalty_rate,
            }),
            first_order,
        };
        policy.validate()?;

        let cohort = match &self.cohort.sums {
            Some(sums) => Cohort::from_sums(sums.clone())?,
            None => Cohort::from_moments(
                self.cohort.policyholders.expect("validated"),
                self.cohort.sum_mean.expect("validated"),
                self.cohort.sum_cv.unwrap_or(0.0),
            )?,
        };

        let long_spot = curve.spot_rate(curve.max_maturity())?;
        let vasicek = VasicekParams {
            mean_reversion: self.vasicek.a,
            long_run_mean: self.vasicek.b.unwrap_or(long_spot),
            volatility: self.vasicek.sigma,
            initial_short_rate: curve.spot_rate(1)?,
        };
        vasicek.validate()?;

        let simulation = SimulationConfig {
            n_sims: self.simulation.n_sims,
            seed: self.simulation.seed,
            confidence: self.simulation.confidence,
            annual_lapse_rate: self.lapse.annual_rate,
            threads: self.simulation.threads,
        };
        simulation
            .validate()
            .map_err(|e| invalid("simulation", e.to_string()))?;

        Ok(ModelInputs {
            policy,
            cohort,
            second_order,
            curve,
            vasicek,
            vasicek_bounds: self.vasicek.bounds,
            simulation,
            times: self.simulation.times.clone(),
            asset_return: self.asset_return,
            expenses: ExpenseAssumptions {
                delta_acquisition: self.expenses_realized.delta_acquisition,
                delta_collection: self.expenses_realized.delta_collection,
                delta_management: self.expenses_realized.delta_management,
            },
        })
    }
}

fn resolve(base_dir: Option<&Path>, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        match base_dir {
            Some(dir) => dir.join(p),
            None => p.to_path_buf(),
        }
    }
}
