//! The four configuration-driven commands behind the `demrisk` CLI:
//! `value`, `project`, `decompose`, and `simulate`. Each command is pure
//! given (config, input files, seed): repeated runs write byte-identical
//! outputs.
//!
//! Valuations at a future time t use the forward-implied curve rolled t
//! years ahead of the input curve, and the expected portfolio state under
//! second-order survival. Monetary CSV values carry 2 decimals; rates are
//! printed at full precision; the JSON document keeps everything at full
//! precision together with an echo of the run configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, ModelInputs, OutputFormat, RunConfig};
use crate::contract::{
    gross_premium_rate, local_reserve_rate, pure_premium_rate, sum_at_risk, ContractError,
};
use crate::curve::{CurveError, Discounting, YieldCurve};
use crate::engine::{
    local_gaap_theoretical_moments, summarize, EngineError, PathSampler, SummaryRow,
};
use crate::lifetable::TableError;
use crate::profit::{
    demographic_split, expected_demographic_profit, expected_demographic_split, homans_components,
    DemographicSplit, PortfolioState, ProfitDecomposition, ProfitError,
};
use crate::valuation::{best_estimate_rate, epv_rate, ValuationError};

const CLOSURE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error(transparent)]
    Profit(#[from] ProfitError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("closure check failed at t={time}, path {path}: relative error {error:e}")]
    ClosureFailed { time: u32, path: u64, error: f64 },
    #[error("curve horizon {max} does not reach the policy duration {needed}")]
    CurveHorizon { max: u32, needed: u32 },
}

/// Command-line / environment overrides. Resolution order is flag, then
/// environment (`DEMRISK_OUT`, `DEMRISK_THREADS`), then the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

struct Run {
    inputs: ModelInputs,
    raw_config: serde_json::Value,
    out_dir: PathBuf,
    formats: Vec<OutputFormat>,
    seed: u64,
}

impl Run {
    fn prepare(
        config: &RunConfig,
        raw: &serde_json::Value,
        base_dir: Option<&Path>,
        overrides: &Overrides,
    ) -> Result<Self, CommandError> {
        let mut inputs = config.build(base_dir)?;
        if let Some(seed) = overrides.seed {
            inputs.simulation.seed = seed;
        }
        if let Some(threads) = std::env::var("DEMRISK_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
        {
            inputs.simulation.threads = threads;
        }
        let out_dir = overrides
            .out_dir
            .clone()
            .or_else(|| std::env::var("DEMRISK_OUT").ok().map(PathBuf::from))
            .unwrap_or_else(|| config.output.dir.clone());
        let formats = match overrides.format {
            Some(f) => vec![f],
            None => config.output.formats.clone(),
        };
        if inputs.curve.max_maturity() < inputs.policy.duration {
            return Err(CommandError::CurveHorizon {
                max: inputs.curve.max_maturity(),
                needed: inputs.policy.duration,
            });
        }
        let seed = inputs.simulation.seed;
        Ok(Self {
            inputs,
            raw_config: raw.clone(),
            out_dir,
            formats,
            seed,
        })
    }

    fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }

    fn write_file(&self, name: &str, content: &str) -> Result<PathBuf, CommandError> {
        fs::create_dir_all(&self.out_dir).map_err(|source| CommandError::Write {
            path: self.out_dir.display().to_string(),
            source,
        })?;
        let path = self.out_dir.join(name);
        fs::write(&path, content).map_err(|source| CommandError::Write {
            path: path.display().to_string(),
            source,
        })?;
        Ok(path)
    }

    fn write_run_json(
        &self,
        command: &str,
        results: serde_json::Value,
    ) -> Result<PathBuf, CommandError> {
        let doc = serde_json::json!({
            "command": command,
            "seed": self.seed,
            "config": self.raw_config,
            "results": results,
        });
        let text = serde_json::to_string_pretty(&doc).expect("valid JSON document");
        self.write_file("run.json", &text)
    }

    /// Forward-implied curve rolled `t` years ahead of the input curve.
    fn curve_at(&self, t: u32) -> Result<YieldCurve, CommandError> {
        let mut c = self.inputs.curve.clone();
        for _ in 0..t {
            c = c.forward_implied()?;
        }
        Ok(c)
    }

    fn state_at(&self, t: u32) -> Result<PortfolioState, CommandError> {
        Ok(PortfolioState::expected_at(
            self.inputs.policy.clone(),
            self.inputs.cohort.clone(),
            t,
            &self.inputs.second_order,
        )?)
    }
}

fn money(v: f64) -> String {
    format!("{v:.2}")
}

fn rate(v: f64) -> String {
    format!("{v:.12}")
}

fn ratio(v: f64) -> String {
    format!("{v:.6}")
}

// ---------------------------------------------------------------------------
// value
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ValueRow {
    pub t: u32,
    pub gross_premium: f64,
    pub pure_premium: f64,
    pub reserve: f64,
    pub best_estimate: f64,
    pub epv: f64,
    /// Sum-at-risk rate; undefined at t = 0.
    pub sum_at_risk: Option<f64>,
}

#[derive(Debug)]
pub struct ValueReport {
    pub rows: Vec<ValueRow>,
    pub written: Vec<PathBuf>,
}

/// Per-year table of premium rates, reserves, best estimates, expected
/// present values, and sums at risk.
pub fn cmd_value(
    config: &RunConfig,
    raw: &serde_json::Value,
    base_dir: Option<&Path>,
    overrides: &Overrides,
) -> Result<ValueReport, CommandError> {
    let run = Run::prepare(config, raw, base_dir, overrides)?;
    let spec = &run.inputs.policy;
    let table2 = &run.inputs.second_order;
    let b = gross_premium_rate(spec)?;
    let pi = pure_premium_rate(spec)?;
    let mut rows = Vec::with_capacity(spec.duration as usize + 1);
    for t in 0..=spec.duration {
        let disc = if t == spec.duration {
            Discounting::Flat(spec.technical_rate)
        } else {
            Discounting::Curve(run.curve_at(t)?)
        };
        rows.push(ValueRow {
            t,
            gross_premium: b,
            pure_premium: pi,
            reserve: local_reserve_rate(spec, t)?,
            best_estimate: best_estimate_rate(spec, t, table2, &disc)?,
            epv: epv_rate(spec, t, table2)?,
            sum_at_risk: if t == 0 {
                None
            } else {
                Some(sum_at_risk(spec, t)?)
            },
        });
    }

    let mut written = Vec::new();
    if run.wants(OutputFormat::Csv) {
        let mut csv = String::from(
            "t,gross_premium_rate,pure_premium_rate,reserve_rate,best_estimate_rate,epv_rate,sum_at_risk_rate\n",
        );
        for r in &rows {
            let d = r.sum_at_risk.map(rate).unwrap_or_default();
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                r.t,
                rate(r.gross_premium),
                rate(r.pure_premium),
                rate(r.reserve),
                rate(r.best_estimate),
                rate(r.epv),
                d
            )
            .expect("write to string");
        }
        written.push(run.write_file("value.csv", &csv)?);
    }
    if run.wants(OutputFormat::Json) {
        let json_rows: Vec<serde_json::Value> = rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "t": r.t,
                    "gross_premium_rate": r.gross_premium,
                    "pure_premium_rate": r.pure_premium,
                    "reserve_rate": r.reserve,
                    "best_estimate_rate": r.best_estimate,
                    "epv_rate": r.epv,
                    "sum_at_risk_rate": r.sum_at_risk,
                })
            })
            .collect();
        written.push(run.write_run_json("value", serde_json::json!({ "value": json_rows }))?);
    }
    Ok(ValueReport { rows, written })
}

// ---------------------------------------------------------------------------
// project
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct ProjectRow {
    pub t: u32,
    /// Expected market-consistent demographic profit over (t, t+1].
    pub expected_mcv: f64,
    /// Expected local-GAAP demographic profit over (t, t+1].
    pub expected_lg: f64,
}

#[derive(Debug)]
pub struct ProjectReport {
    pub rows: Vec<ProjectRow>,
    pub written: Vec<PathBuf>,
}

/// Expected demographic profit series on both bases for t = 0..n-1: the data
/// behind the profit-release pattern.
pub fn cmd_project(
    config: &RunConfig,
    raw: &serde_json::Value,
    base_dir: Option<&Path>,
    overrides: &Overrides,
) -> Result<ProjectReport, CommandError> {
    let run = Run::prepare(config, raw, base_dir, overrides)?;
    let table2 = &run.inputs.second_order;
    let n = run.inputs.policy.duration;
    let mut rows = Vec::with_capacity(n as usize);
    for t in 0..n {
        let state = run.state_at(t)?;
        let disc = Discounting::Curve(run.curve_at(t)?);
        let expected_mcv = expected_demographic_profit(&state, &disc, table2)?;
        let split = expected_demographic_split(&state, &disc, table2)?;
        rows.push(ProjectRow {
            t,
            expected_mcv,
            expected_lg: split.local_gaap,
        });
    }

    let mut written = Vec::new();
    if run.wants(OutputFormat::Csv) {
        let mut csv = String::from("t,expected_mcv,expected_lg\n");
        for r in &rows {
            writeln!(
                csv,
                "{},{},{}",
                r.t,
                money(r.expected_mcv),
                money(r.expected_lg)
            )
            .expect("write to string");
        }
        written.push(run.write_file("expected_profit.csv", &csv)?);
    }
    if run.wants(OutputFormat::Json) {
        let json_rows: Vec<serde_json::Value> = rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "t": r.t,
                    "expected_mcv": r.expected_mcv,
                    "expected_lg": r.expected_lg,
                })
            })
            .collect();
        written.push(run.write_run_json("project", serde_json::json!({ "project": json_rows }))?);
    }
    Ok(ProjectReport { rows, written })
}

// ---------------------------------------------------------------------------
// decompose
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DecomposeRow {
    pub time: u32,
    pub path: u64,
    pub decomposition: ProfitDecomposition,
    pub split: DemographicSplit,
    pub closure_error: f64,
    pub split_error: f64,
}

#[derive(Debug)]
pub struct DecomposeReport {
    pub rows: Vec<DecomposeRow>,
    pub written: Vec<PathBuf>,
}

/// Per-path dump of the five profit components and the three-way demographic
/// split, with closure columns. Fails (non-zero exit) if any closure exceeds
/// the tolerance.
pub fn cmd_decompose(
    config: &RunConfig,
    raw: &serde_json::Value,
    base_dir: Option<&Path>,
    overrides: &Overrides,
) -> Result<DecomposeReport, CommandError> {
    let run = Run::prepare(config, raw, base_dir, overrides)?;
    let table2 = &run.inputs.second_order;
    let expenses = run.inputs.expenses;
    let mut rows = Vec::new();
    for &t in &run.inputs.times {
        let state = run.state_at(t)?;
        let curve_t = run.curve_at(t)?;
        let sampler = PathSampler::new(
            &state,
            &curve_t,
            table2,
            &run.inputs.vasicek,
            run.inputs.vasicek_bounds,
            &run.inputs.simulation,
            run.inputs.asset_return,
        )?;
        for path in 0..run.inputs.simulation.n_sims {
            let (outcome, be_close) = sampler.sample(path)?;
            let rates = sampler.rates_for(be_close);
            let decomposition =
                homans_components(&state, &outcome, rates.be_open, be_close, &expenses)?;
            let split = demographic_split(&state, &outcome, &rates)?;
            let closure_error = decomposition.closure_error();
            let split_error = (split.total() - decomposition.demographic).abs()
                / decomposition.demographic.abs().max(1.0);
            if closure_error > CLOSURE_TOLERANCE || split_error > CLOSURE_TOLERANCE {
                return Err(CommandError::ClosureFailed {
                    time: t,
                    path,
                    error: closure_error.max(split_error),
                });
            }
            rows.push(DecomposeRow {
                time: t,
                path,
                decomposition,
                split,
                closure_error,
                split_error,
            });
        }
    }

    let mut written = Vec::new();
    if run.wants(OutputFormat::Csv) {
        let mut csv = String::from(
            "t,path,demographic,financial,lapse,expense,residual,total,closure_error,local_gaap,rate_gap,mortality_gap,split_error\n",
        );
        for r in &rows {
            let d = &r.decomposition;
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{:e},{},{},{},{:e}",
                r.time,
                r.path,
                money(d.demographic),
                money(d.financial),
                money(d.lapse),
                money(d.expense),
                money(d.residual),
                money(d.total),
                r.closure_error,
                money(r.split.local_gaap),
                money(r.split.rate_gap),
                money(r.split.mortality_gap),
                r.split_error
            )
            .expect("write to string");
        }
        written.push(run.write_file("decomposition.csv", &csv)?);
    }
    if run.wants(OutputFormat::Json) {
        let json_rows: Vec<serde_json::Value> = rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "t": r.time,
                    "path": r.path,
                    "demographic": r.decomposition.demographic,
                    "financial": r.decomposition.financial,
                    "lapse": r.decomposition.lapse,
                    "expense": r.decomposition.expense,
                    "residual": r.decomposition.residual,
                    "total": r.decomposition.total,
                    "closure_error": r.closure_error,
                    "local_gaap": r.split.local_gaap,
                    "rate_gap": r.split.rate_gap,
                    "mortality_gap": r.split.mortality_gap,
                    "split_error": r.split_error,
                })
            })
            .collect();
        written
            .push(run.write_run_json("decompose", serde_json::json!({ "decompose": json_rows }))?);
    }
    Ok(DecomposeReport { rows, written })
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SimulateColumn {
    pub t: u32,
    pub sums_in_force: f64,
    /// Analytic expected MCV demographic profit.
    pub expected_theoretical: f64,
    pub mcv: SummaryRow,
    /// (level, value) quantiles of the MCV profit distribution.
    pub mcv_quantiles: Vec<(f64, f64)>,
    /// Closed-form local-GAAP moments (mean, std dev, skewness).
    pub lg_theoretical: (f64, f64, f64),
    pub local_gaap: SummaryRow,
    pub undersampled: bool,
}

#[derive(Debug)]
pub struct SimulateReport {
    pub columns: Vec<SimulateColumn>,
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// One-year SCR report at each configured time, on both valuation bases,
/// with the analytic means alongside the simulated ones.
pub fn cmd_simulate(
    config: &RunConfig,
    raw: &serde_json::Value,
    base_dir: Option<&Path>,
    overrides: &Overrides,
) -> Result<SimulateReport, CommandError> {
    let run = Run::prepare(config, raw, base_dir, overrides)?;
    let table2 = &run.inputs.second_order;
    let mut columns = Vec::new();
    let mut warnings = Vec::new();
    for &t in &run.inputs.times {
        let state = run.state_at(t)?;
        let curve_t = run.curve_at(t)?;
        let sim = crate::engine::simulate_one_year_both(
            &state,
            &curve_t,
            table2,
            &run.inputs.vasicek,
            run.inputs.vasicek_bounds,
            &run.inputs.simulation,
        )?;
        let expected_theoretical =
            expected_demographic_profit(&state, &Discounting::Curve(curve_t.clone()), table2)?;
        let lg_theoretical = local_gaap_theoretical_moments(&state, table2)?;
        if sim.mcv.is_undersampled() {
            warnings.push(format!(
                "t={t}: {} paths give fewer than one tail sample at confidence {}",
                run.inputs.simulation.n_sims, run.inputs.simulation.confidence
            ));
        }
        columns.push(SimulateColumn {
            t,
            sums_in_force: state.sums_in_force,
            expected_theoretical,
            mcv: summarize(&sim.mcv)?,
            mcv_quantiles: sim.mcv.quantiles().to_vec(),
            lg_theoretical,
            local_gaap: summarize(&sim.local_gaap)?,
            undersampled: sim.mcv.is_undersampled(),
        });
    }

    let mut written = Vec::new();
    if run.wants(OutputFormat::Csv) {
        let header: String = std::iter::once("statistic".to_string())
            .chain(columns.iter().map(|c| format!("t={}", c.t)))
            .collect::<Vec<_>>()
            .join(",");
        let csv_table = |rows: &[(&str, Vec<String>)]| -> String {
            let mut out = String::new();
            out.push_str(&header);
            out.push('\n');
            for (label, cells) in rows {
                out.push_str(label);
                for cell in cells {
                    out.push(',');
                    out.push_str(cell);
                }
                out.push('\n');
            }
            out
        };
        let mcv_rows = vec![
            (
                "expected_theoretical",
                columns
                    .iter()
                    .map(|c| money(c.expected_theoretical))
                    .collect(),
            ),
            (
                "expected_simulated",
                columns.iter().map(|c| money(c.mcv.mean)).collect(),
            ),
            (
                "expected_on_sums",
                columns
                    .iter()
                    .map(|c| ratio(c.mcv.mean / c.sums_in_force))
                    .collect(),
            ),
            (
                "std_dev",
                columns.iter().map(|c| money(c.mcv.std_dev)).collect(),
            ),
            (
                "skewness",
                columns.iter().map(|c| ratio(c.mcv.skewness)).collect(),
            ),
            ("scr", columns.iter().map(|c| money(c.mcv.scr)).collect()),
            (
                "scr_on_sums",
                columns.iter().map(|c| ratio(c.mcv.scr_ratio)).collect(),
            ),
        ];
        written.push(run.write_file("mcv_results.csv", &csv_table(&mcv_rows))?);
        let lg_rows = vec![
            (
                "expected_theoretical",
                columns.iter().map(|c| money(c.lg_theoretical.0)).collect(),
            ),
            (
                "std_dev_theoretical",
                columns.iter().map(|c| money(c.lg_theoretical.1)).collect(),
            ),
            (
                "skewness_theoretical",
                columns.iter().map(|c| ratio(c.lg_theoretical.2)).collect(),
            ),
            (
                "scr",
                columns.iter().map(|c| money(c.local_gaap.scr)).collect(),
            ),
            (
                "scr_on_sums",
                columns
                    .iter()
                    .map(|c| ratio(c.local_gaap.scr_ratio))
                    .collect(),
            ),
        ];
        written.push(run.write_file("lg_results.csv", &csv_table(&lg_rows))?);
    }
    if run.wants(OutputFormat::Json) {
        let mcv: Vec<serde_json::Value> = columns
            .iter()
            .map(|c| {
                serde_json::json!({
                    "t": c.t,
                    "sums_in_force": c.sums_in_force,
                    "expected_theoretical": c.expected_theoretical,
                    "expected_simulated": c.mcv.mean,
                    "expected_on_sums": c.mcv.mean / c.sums_in_force,
                    "std_dev": c.mcv.std_dev,
                    "skewness": c.mcv.skewness,
                    "degenerate": c.mcv.degenerate,
                    "quantiles": c.mcv_quantiles
                        .iter()
                        .map(|(level, value)| serde_json::json!({"level": level, "value": value}))
                        .collect::<Vec<_>>(),
                    "scr": c.mcv.scr,
                    "scr_on_sums": c.mcv.scr_ratio,
                    "undersampled": c.undersampled,
                })
            })
            .collect();
        let lg: Vec<serde_json::Value> = columns
            .iter()
            .map(|c| {
                serde_json::json!({
                    "t": c.t,
                    "expected_theoretical": c.lg_theoretical.0,
                    "std_dev_theoretical": c.lg_theoretical.1,
                    "skewness_theoretical": c.lg_theoretical.2,
                    "expected_simulated": c.local_gaap.mean,
                    "std_dev": c.local_gaap.std_dev,
                    "skewness": c.local_gaap.skewness,
                    "scr": c.local_gaap.scr,
                    "scr_on_sums": c.local_gaap.scr_ratio,
                })
            })
            .collect();
        written.push(run.write_run_json(
            "simulate",
            serde_json::json!({ "mcv": mcv, "local_gaap": lg }),
        )?);
    }
    Ok(SimulateReport {
        columns,
        written,
        warnings,
    })
}
