//! One-year Monte Carlo simulation of the demographic profit distribution
//! and the 99.5% value-at-risk capital requirement.
//!
//! Each path owns an independent, counter-derived random substream, so the
//! result is bit-identical for a given seed no matter how many worker
//! threads run. Per path the engine draws the number of deaths from a
//! Binomial on the second-order death probability, one LogNormal claim per
//! death, and a standard normal driver for the year-end Vašíček curve.
//! Draw order within a path: deaths, then claim sums, then the curve driver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::contract::ContractError;
use crate::curve::{vasicek_year_curve, CurveError, Discounting, VasicekParams, YieldCurve};
use crate::lifetable::{LifeTable, TableError};
use crate::math::sample_moments;
use crate::profit::{PathOutcome, PortfolioState, ProfitError, YearRates};
use crate::valuation::{calibrate_vasicek, ValuationError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("number of simulations must be at least 1")]
    NoPaths,
    #[error("confidence must lie in (0.5, 1) (got {0})")]
    BadConfidence(f64),
    #[error("annual lapse rate must lie in [0, 1) (got {0})")]
    BadLapseRate(f64),
    #[error("LogNormal mean must be positive (got {0})")]
    NonPositiveMean(f64),
    #[error("coefficient of variation must be non-negative (got {0})")]
    NegativeCv(f64),
    #[error("empty sample set")]
    EmptySamples,
    #[error("at least 3 samples are needed for a summary with skewness (got {0})")]
    TooFewSamples(usize),
    #[error("simulation time {t} is not before the policy duration {n}")]
    TimeBeyondHorizon { t: u32, n: u32 },
    #[error("could not build thread pool: {0}")]
    ThreadPool(String),
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
}

/// Monte Carlo run controls.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub n_sims: u64,
    pub seed: u64,
    /// VaR confidence level, default 0.995.
    pub confidence: f64,
    /// Deterministic annual lapse rate; 0 disables the lapse model.
    pub annual_lapse_rate: f64,
    /// Worker threads; 0 lets the global pool decide.
    pub threads: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_sims: 10_000,
            seed: 0,
            confidence: 0.995,
            annual_lapse_rate: 0.0,
            threads: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.n_sims == 0 {
            return Err(EngineError::NoPaths);
        }
        if !(self.confidence > 0.5 && self.confidence < 1.0) {
            return Err(EngineError::BadConfidence(self.confidence));
        }
        if !(0.0..1.0).contains(&self.annual_lapse_rate) {
            return Err(EngineError::BadLapseRate(self.annual_lapse_rate));
        }
        Ok(())
    }
}

/// Simulated profit distribution with moments, quantiles, and the capital
/// requirement read off the lower tail.
#[derive(Debug, Clone)]
pub struct ProfitDistribution {
    samples: Vec<f64>,
    mean: f64,
    std_dev: f64,
    skewness: f64,
    /// True when the sample has zero variance; skewness is reported as 0.
    degenerate: bool,
    confidence: f64,
    /// (level, empirical quantile) at the standard reporting levels.
    quantiles: Vec<(f64, f64)>,
    scr: f64,
    scr_ratio: f64,
    /// True when fewer than 1/(1-confidence) paths back the tail estimate.
    undersampled: bool,
}

/// Quantile levels retained in every distribution summary.
pub const QUANTILE_LEVELS: [f64; 7] = [0.005, 0.01, 0.05, 0.5, 0.95, 0.99, 0.995];

impl ProfitDistribution {
    /// Builds the distribution from raw profit samples. `sums_in_force`
    /// scales the SCR ratio.
    pub fn from_samples(
        samples: Vec<f64>,
        confidence: f64,
        sums_in_force: f64,
    ) -> Result<Self, EngineError> {
        if samples.is_empty() {
            return Err(EngineError::EmptySamples);
        }
        if !(confidence > 0.5 && confidence < 1.0) {
            return Err(EngineError::BadConfidence(confidence));
        }
        let (mean, std_dev, skew_opt) = sample_moments(&samples);
        let n = samples.len() as f64;
        // A spread below f64 resolution of the sample values is cancellation
        // noise from an analytically certain payoff, not volatility.
        let scale = samples.iter().fold(mean.abs(), |m, x| m.max(x.abs()));
        let degenerate = std_dev <= 1e-12 * scale.max(f64::MIN_POSITIVE);
        // One sort serves the SCR and the whole quantile table.
        let mut sorted = samples.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("profit samples are finite"));
        let scr = -sorted_quantile(&sorted, 1.0 - confidence);
        let quantiles = QUANTILE_LEVELS
            .iter()
            .map(|&level| (level, sorted_quantile(&sorted, level)))
            .collect();
        Ok(Self {
            mean,
            std_dev,
            skewness: if degenerate {
                0.0
            } else {
                skew_opt.unwrap_or(0.0)
            },
            degenerate,
            confidence,
            quantiles,
            scr,
            scr_ratio: if sums_in_force != 0.0 {
                scr / sums_in_force
            } else {
                0.0
            },
            undersampled: n * (1.0 - confidence) < 1.0,
            samples,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std_dev(&self) -> f64 {
        self.std_dev
    }

    pub fn skewness(&self) -> f64 {
        self.skewness
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn scr(&self) -> f64 {
        self.scr
    }

    pub fn scr_ratio(&self) -> f64 {
        self.scr_ratio
    }

    pub fn is_undersampled(&self) -> bool {
        self.undersampled
    }

    /// Standard error of the sample mean.
    pub fn mean_standard_error(&self) -> f64 {
        self.std_dev / (self.samples.len() as f64).sqrt()
    }

    /// Retained (level, value) quantile pairs at [`QUANTILE_LEVELS`].
    pub fn quantiles(&self) -> &[(f64, f64)] {
        &self.quantiles
    }

    /// Empirical quantile by the lower order statistic,
    /// k = ceil(level * n), 1-indexed.
    pub fn quantile(&self, level: f64) -> Result<f64, EngineError> {
        quantile(&self.samples, level)
    }
}

/// LogNormal parameters (mu, sigma) reproducing a target mean and
/// coefficient of variation exactly: sigma^2 = ln(1 + cv^2),
/// mu = ln(mean) - sigma^2 / 2.
pub fn lognormal_params_from_mean_cv(mean: f64, cv: f64) -> Result<(f64, f64), EngineError> {
    if mean <= 0.0 || !mean.is_finite() {
        return Err(EngineError::NonPositiveMean(mean));
    }
    if cv < 0.0 || !cv.is_finite() {
        return Err(EngineError::NegativeCv(cv));
    }
    let s2 = (1.0 + cv * cv).ln();
    let mu = mean.ln() - 0.5 * s2;
    Ok((mu, s2.sqrt()))
}

/// Exact Binomial(lives, q) death count.
pub fn simulate_deaths(lives: u64, q: f64, rng: &mut impl Rng) -> u64 {
    if lives == 0 || q <= 0.0 {
        0
    } else if q >= 1.0 {
        lives
    } else {
        Binomial::new(lives, q)
            .expect("q checked to lie in (0, 1)")
            .sample(rng)
    }
}

/// Independent, counter-derived random substream for one path index.
/// SplitMix64 expands (seed, path) into a 256-bit ChaCha key, so streams for
/// different paths never overlap in practice and the assignment is stable
/// across thread counts.
pub fn path_rng(seed: u64, path: u64) -> ChaCha12Rng {
    fn splitmix64(state: &mut u64) -> u64 {
        *state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }
    let mut state = seed ^ path.wrapping_mul(0xA0761D6478BD642F);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Draws whole policy-year paths for a fixed state. Construction does the
/// one-off work (Vašíček calibration, curve-independent rates); sampling a
/// path index is then cheap, stateless, and safe to run from any thread.
pub struct PathSampler<'a> {
    state: &'a PortfolioState,
    second_order: &'a LifeTable,
    q: f64,
    q_star: f64,
    exposed_lives: u64,
    surrendered: f64,
    ln_mu: f64,
    ln_sigma: f64,
    sum_mean: f64,
    rates_template: YearRates,
    vasicek: Option<VasicekParams>,
    horizon: u32,
    inflow: f64,
    death_benefit: f64,
    accumulate: f64,
    seed: u64,
    asset_return: f64,
}

impl<'a> PathSampler<'a> {
    /// Calibrates and precomputes for simulation at `state.time`. The
    /// realized asset return defaults to the one-year spot rate when not
    /// supplied.
    pub fn new(
        state: &'a PortfolioState,
        curve: &YieldCurve,
        second_order: &'a LifeTable,
        vasicek_base: &VasicekParams,
        vasicek_bounds: (f64, f64),
        config: &SimulationConfig,
        asset_return: Option<f64>,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let spec = &state.policy;
        let t = state.time;
        if t >= spec.duration {
            return Err(EngineError::TimeBeyondHorizon {
                t,
                n: spec.duration,
            });
        }
        let q = second_order.qx(spec.issue_age + t)?;
        let q_star = spec.first_order.qx(spec.issue_age + t)?;
        let (ln_mu, ln_sigma) =
            lognormal_params_from_mean_cv(state.cohort.sum_mean, state.cohort.sum_cv)?;
        let surrendered = config.annual_lapse_rate * state.sums_in_force;
        let exposed_lives =
            state.lives - (config.annual_lapse_rate * state.lives as f64).round() as u64;

        let discounting_open = Discounting::Curve(curve.clone());
        let (vasicek, be_close_certain) = if t + 1 == spec.duration {
            (None, spec.kind.survival_benefit())
        } else {
            let params =
                calibrate_vasicek(curve, spec, t, second_order, vasicek_base, vasicek_bounds)?;
            (Some(params), 0.0)
        };
        let rates_template = YearRates::with_best_estimate_close(
            spec,
            t,
            second_order,
            &discounting_open,
            be_close_certain,
        )?;
        Ok(Self {
            state,
            second_order,
            q,
            q_star,
            exposed_lives,
            surrendered,
            ln_mu,
            ln_sigma,
            sum_mean: state.cohort.sum_mean,
            rates_template,
            vasicek,
            horizon: spec.duration.saturating_sub(t + 1),
            inflow: crate::contract::net_inflow_rate(spec, t)?,
            death_benefit: spec.kind.death_benefit(),
            accumulate: 1.0 + spec.technical_rate,
            seed: config.seed,
            asset_return: match asset_return {
                Some(j) => j,
                None => curve.spot_rate(1)?,
            },
        })
    }

    /// Calibrated Vašíček parameters, when the year-end value is uncertain.
    pub fn calibrated(&self) -> Option<VasicekParams> {
        self.vasicek
    }

    /// Valuation rates for a path with the given year-end best estimate.
    pub fn rates_for(&self, be_close: f64) -> YearRates {
        YearRates {
            be_close,
            ..self.rates_template
        }
    }

    /// Draws path `path`: the full outcome plus the year-end best-estimate
    /// rate under that path's curve. Draw order: deaths, claim sums, curve.
    pub fn sample(&self, path: u64) -> Result<(PathOutcome, f64), EngineError> {
        let mut rng = path_rng(self.seed, path);
        let deaths = simulate_deaths(self.exposed_lives, self.q, &mut rng);
        let sums_died = if self.ln_sigma == 0.0 {
            deaths as f64 * self.sum_mean
        } else {
            let claim = rand_distr::LogNormal::new(self.ln_mu, self.ln_sigma)
                .expect("sigma checked finite and positive");
            let mut total = 0.0;
            for _ in 0..deaths {
                total += claim.sample(&mut rng);
            }
            total
        };
        let staying = self.state.sums_in_force - self.surrendered;
        let sums_end = staying - sums_died;
        let (curve_end, be_close) = match &self.vasicek {
            None => (None, self.rates_template.be_close),
            Some(params) => {
                let draw: f64 = rng.sample(StandardNormal);
                let curve = vasicek_year_curve(params, self.state.time + 1, self.horizon, draw)?;
                let be = crate::valuation::best_estimate_rate(
                    &self.state.policy,
                    self.state.time + 1,
                    self.second_order,
                    &Discounting::Curve(curve.clone()),
                )?;
                (Some(curve), be)
            }
        };
        let outcome = PathOutcome {
            sums_died,
            claims: self.death_benefit * sums_died,
            surrendered: self.surrendered,
            sums_end,
            curve_end,
            asset_return: self.asset_return,
        };
        Ok((outcome, be_close))
    }

    /// MCV demographic profit and local-GAAP profit for one path index.
    fn profits(&self, path: u64) -> Result<(f64, f64), EngineError> {
        let (outcome, be_close) = self.sample(path)?;
        let staying = self.state.sums_in_force - outcome.surrendered;
        let mcv = (self.rates_template.be_open + self.inflow) * staying * self.accumulate
            - outcome.claims
            - outcome.sums_end * be_close;
        let d_b = self.death_benefit - self.rates_template.reserve_close;
        let lg = d_b * (self.q_star * staying - outcome.sums_died);
        Ok((mcv, lg))
    }
}

/// Simulated one-year distributions of the market-consistent demographic
/// profit and its local-GAAP counterpart, from common paths.
pub struct YearSimulation {
    pub mcv: ProfitDistribution,
    pub local_gaap: ProfitDistribution,
    /// Vašíček parameters actually used, when the year-end value is uncertain.
    pub calibrated: Option<VasicekParams>,
}

/// Runs the one-year simulation at `state.time` and aggregates the
/// market-consistent demographic profit distribution.
pub fn simulate_one_year(
    state: &PortfolioState,
    curve: &YieldCurve,
    second_order: &LifeTable,
    vasicek_base: &VasicekParams,
    vasicek_bounds: (f64, f64),
    config: &SimulationConfig,
) -> Result<ProfitDistribution, EngineError> {
    Ok(simulate_one_year_both(
        state,
        curve,
        second_order,
        vasicek_base,
        vasicek_bounds,
        config,
    )?
    .mcv)
}

/// As `simulate_one_year`, returning the local-GAAP distribution from the
/// same paths as well.
pub fn simulate_one_year_both(
    state: &PortfolioState,
    curve: &YieldCurve,
    second_order: &LifeTable,
    vasicek_base: &VasicekParams,
    vasicek_bounds: (f64, f64),
    config: &SimulationConfig,
) -> Result<YearSimulation, EngineError> {
    let sampler = PathSampler::new(
        state,
        curve,
        second_order,
        vasicek_base,
        vasicek_bounds,
        config,
        None,
    )?;
    let run_all = || -> Result<Vec<(f64, f64)>, EngineError> {
        (0..config.n_sims)
            .into_par_iter()
            .map(|path| sampler.profits(path))
            .collect()
    };
    let pairs = if config.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| EngineError::ThreadPool(e.to_string()))?;
        pool.install(run_all)?
    } else {
        run_all()?
    };

    let (mcv_samples, lg_samples): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(YearSimulation {
        mcv: ProfitDistribution::from_samples(mcv_samples, config.confidence, state.sums_in_force)?,
        local_gaap: ProfitDistribution::from_samples(
            lg_samples,
            config.confidence,
            state.sums_in_force,
        )?,
        calibrated: sampler.calibrated(),
    })
}

/// Empirical lower-order-statistic quantile: the k-th smallest sample with
/// k = ceil(level * n). The small slack keeps k exact when level * n is an
/// integer up to binary rounding (0.005 is not representable).
fn quantile(samples: &[f64], level: f64) -> Result<f64, EngineError> {
    if samples.is_empty() {
        return Err(EngineError::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("profit samples are finite"));
    Ok(sorted_quantile(&sorted, level))
}

fn sorted_quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let k = (((level * n as f64) - 1e-9).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Solvency capital requirement: the negated lower order statistic of the
/// profit sample at the 1 - confidence tail,  k = ceil((1-confidence) n).
/// Negative when the expected profit dominates tail risk.
pub fn scr(samples: &[f64], confidence: f64) -> Result<f64, EngineError> {
    if !(confidence > 0.5 && confidence < 1.0) {
        return Err(EngineError::BadConfidence(confidence));
    }
    Ok(-quantile(samples, 1.0 - confidence)?)
}

/// One report row: moments, SCR, and the SCR ratio on in-force sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub degenerate: bool,
    pub scr: f64,
    pub scr_ratio: f64,
}

/// Summarizes a distribution for reporting. Requires at least 3 samples so
/// the skewness is defined; a degenerate sample reports zero skewness with
/// the flag set.
pub fn summarize(dist: &ProfitDistribution) -> Result<SummaryRow, EngineError> {
    if dist.samples().len() < 3 {
        return Err(EngineError::TooFewSamples(dist.samples().len()));
    }
    Ok(SummaryRow {
        mean: dist.mean(),
        std_dev: dist.std_dev(),
        skewness: dist.skewness(),
        degenerate: dist.is_degenerate(),
        scr: dist.scr(),
        scr_ratio: dist.scr_ratio(),
    })
}

/// Closed-form moments (mean, standard deviation, skewness) of the one-year
/// local-GAAP demographic profit: an affine map of the compound
/// Binomial-LogNormal sums eliminated by death, using factorial moments of
/// the Binomial and raw LogNormal moments.
pub fn local_gaap_theoretical_moments(
    state: &PortfolioState,
    second_order: &LifeTable,
) -> Result<(f64, f64, f64), EngineError> {
    let spec = &state.policy;
    let t = state.time;
    if t >= spec.duration {
        return Err(EngineError::TimeBeyondHorizon {
            t,
            n: spec.duration,
        });
    }
    let q = second_order.qx(spec.issue_age + t)?;
    let q_star = spec.first_order.qx(spec.issue_age + t)?;
    let d_b = crate::contract::sum_at_risk(spec, t + 1)?;
    let l = state.lives as f64;
    let (mu, s) = lognormal_params_from_mean_cv(state.cohort.sum_mean, state.cohort.sum_cv)?;
    let m1 = (mu + 0.5 * s * s).exp();
    let m2 = (2.0 * mu + 2.0 * s * s).exp();
    let m3 = (3.0 * mu + 4.5 * s * s).exp();
    // Factorial moments of Binomial(l, q) turn per-claim moments into
    // moments of the compound sum.
    let ez = l * q * m1;
    let ez2 = l * q * m2 + l * (l - 1.0) * q * q * m1 * m1;
    let ez3 = l * q * m3
        + 3.0 * l * (l - 1.0) * q * q * m2 * m1
        + l * (l - 1.0) * (l - 2.0) * q.powi(3) * m1.powi(3);
    let var_z = ez2 - ez * ez;
    let mu3_z = ez3 - 3.0 * ez * ez2 + 2.0 * ez.powi(3);
    let w = state.sums_in_force;
    let mean = d_b * (q_star * w - ez);
    let sd = d_b.abs() * var_z.max(0.0).sqrt();
    let skew = if sd > 0.0 {
        -d_b.powi(3) * mu3_z / (d_b.abs() * var_z.sqrt()).powi(3)
    } else {
        0.0
    };
    Ok((mean, sd, skew))
}

/// Mean and standard error of a sample, for oracle comparisons.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let (m, sd, _) = sample_moments(samples);
    (m, sd / (samples.len() as f64).sqrt())
}
