//! Per-path profit arithmetic: total market-consistent technical profit, its
//! five-way decomposition, the demographic component with its three-way
//! split, and the analytic expectations used as simulation oracles.
//!
//! Amounts are rate formulas multiplied by in-force sums. Openings follow the
//! inception convention: at t = 0 no reserve exists yet, so opening valuation
//! rates are zero and the full first premium enters through the inflow term.
//! Closing values at maturity are the certain terminal benefit.

use thiserror::Error;

use crate::contract::{
    gross_premium_rate, net_inflow_rate, surrender_coefficient, Cohort, ContractError, PolicySpec,
    PremiumType,
};
use crate::curve::{CurveError, Discounting, YieldCurve};
use crate::lifetable::{LifeTable, TableError};
use crate::valuation::{epv_rate, recursion_value_rate, ValuationError};

#[derive(Debug, Error)]
pub enum ProfitError {
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error("second-order death probability is zero at age {age}; safety loading undefined")]
    ZeroMortality { age: u32 },
    #[error("outcome violates sums conservation: |w_t - s - z - w_end| = {gap}")]
    SumsNotConserved { gap: f64 },
}

/// Portfolio snapshot at the start of a policy year.
#[derive(Debug, Clone)]
pub struct PortfolioState {
    /// Completed policy years since issue.
    pub time: u32,
    /// Total sums insured in force (currency).
    pub sums_in_force: f64,
    /// Number of surviving policyholders.
    pub lives: u64,
    pub policy: PolicySpec,
    pub cohort: Cohort,
}

impl PortfolioState {
    /// State at issue: full cohort, initial sums.
    pub fn at_inception(policy: PolicySpec, cohort: Cohort) -> Result<Self, ContractError> {
        policy.validate()?;
        cohort.validate()?;
        let sums = cohort.initial_sums();
        let lives = cohort.policyholders;
        Ok(Self {
            time: 0,
            sums_in_force: sums,
            lives,
            policy,
            cohort,
        })
    }

    /// Expected state after `t` years of second-order mortality: lives are
    /// the rounded expected survivors and the in-force amount keeps the mean
    /// sum per policy, so analytic and simulated means stay consistent.
    pub fn expected_at(
        policy: PolicySpec,
        cohort: Cohort,
        t: u32,
        second_order: &LifeTable,
    ) -> Result<Self, ProfitError> {
        policy.validate()?;
        cohort.validate()?;
        if t > policy.duration {
            return Err(ContractError::TimeOutOfRange {
                t,
                n: policy.duration,
            }
            .into());
        }
        let p = second_order.npx(policy.issue_age, t)?;
        let lives = (cohort.policyholders as f64 * p).round().max(1.0) as u64;
        let sums = lives as f64 * cohort.sum_mean;
        Ok(Self {
            time: t,
            sums_in_force: sums,
            lives,
            policy,
            cohort,
        })
    }
}

/// What one simulated (or constructed) policy year produced.
#[derive(Debug, Clone)]
pub struct PathOutcome {
    /// Sums insured eliminated by death during the year (currency).
    pub sums_died: f64,
    /// Claims paid at the end of the year: death claims for death covers,
    /// zero for pure endowments before maturity.
    pub claims: f64,
    /// Sums surrendered at the start of the year.
    pub surrendered: f64,
    /// Sums in force at the end of the year; always
    /// `sums_in_force - surrendered - sums_died`.
    pub sums_end: f64,
    /// Simulated year-end curve; `None` in the final policy year, when the
    /// closing value is the certain terminal benefit.
    pub curve_end: Option<YieldCurve>,
    /// Realized asset return over the year.
    pub asset_return: f64,
}

impl PathOutcome {
    /// Checks the conservation identity against a state.
    pub fn validate(&self, state: &PortfolioState) -> Result<(), ProfitError> {
        let gap = (state.sums_in_force - self.surrendered - self.sums_died - self.sums_end).abs();
        let scale = state.sums_in_force.abs().max(1.0);
        if gap > 1e-9 * scale {
            return Err(ProfitError::SumsNotConserved { gap });
        }
        Ok(())
    }
}

/// Five-component split of the technical profit: demographic, financial,
/// lapse, expense, and residual. `total` is the direct evaluation of the
/// technical-profit formula; the five components sum to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfitDecomposition {
    pub demographic: f64,
    pub financial: f64,
    pub lapse: f64,
    pub expense: f64,
    pub residual: f64,
    pub total: f64,
}

impl ProfitDecomposition {
    pub fn component_sum(&self) -> f64 {
        self.demographic + self.financial + self.lapse + self.expense + self.residual
    }

    /// Closure gap |sum of components - total| relative to the larger of the
    /// component magnitudes and one currency unit.
    pub fn closure_error(&self) -> f64 {
        let scale = [
            self.demographic,
            self.financial,
            self.lapse,
            self.expense,
            self.residual,
            self.total,
        ]
        .iter()
        .fold(1.0_f64, |m, c| m.max(c.abs()));
        (self.component_sum() - self.total).abs() / scale
    }
}

/// Three-way split of the demographic profit: the local-GAAP component, the
/// risk-free-versus-technical-rate gap, and the realistic-versus-prudential
/// mortality gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemographicSplit {
    pub local_gaap: f64,
    pub rate_gap: f64,
    pub mortality_gap: f64,
}

impl DemographicSplit {
    pub fn total(&self) -> f64 {
        self.local_gaap + self.rate_gap + self.mortality_gap
    }
}

/// Differences between first-order expense assumptions and realized ones
/// (first-order minus realistic). All zero when expenses come in as priced.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExpenseAssumptions {
    pub delta_acquisition: f64,
    pub delta_collection: f64,
    pub delta_management: f64,
}

impl ExpenseAssumptions {
    fn premium_delta(&self) -> f64 {
        self.delta_acquisition + self.delta_collection
    }
}

/// Valuation rates entering one profit year (t, t+1]. Opening rates are zero
/// at inception; closing rates take the certain terminal benefit at maturity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YearRates {
    pub be_open: f64,
    pub epv_open: f64,
    pub reserve_open: f64,
    pub be_close: f64,
    pub epv_close: f64,
    pub reserve_close: f64,
}

impl YearRates {
    /// Curve-independent parts plus a caller-supplied year-end best estimate
    /// (the engine recomputes only `be_close` per path).
    pub fn with_best_estimate_close(
        spec: &PolicySpec,
        t: u32,
        second_order: &LifeTable,
        discounting_open: &Discounting,
        be_close: f64,
    ) -> Result<Self, ProfitError> {
        let (be_open, epv_open, reserve_open) = if t == 0 {
            (0.0, 0.0, 0.0)
        } else {
            (
                crate::valuation::best_estimate_rate(spec, t, second_order, discounting_open)?,
                epv_rate(spec, t, second_order)?,
                crate::contract::local_reserve_rate(spec, t)?,
            )
        };
        let flat = Discounting::Flat(spec.technical_rate);
        let epv_close = recursion_value_rate(spec, t + 1, second_order, &flat)?;
        let reserve_close = if t + 1 == spec.duration {
            spec.kind.survival_benefit()
        } else {
            crate::contract::local_reserve_rate(spec, t + 1)?
        };
        Ok(Self {
            be_open,
            epv_open,
            reserve_open,
            be_close,
            epv_close,
            reserve_close,
        })
    }

    /// Full set of rates for a year whose closing curve is known.
    pub fn compute(
        spec: &PolicySpec,
        t: u32,
        second_order: &LifeTable,
        discounting_open: &Discounting,
        discounting_close: &Discounting,
    ) -> Result<Self, ProfitError> {
        let be_close = recursion_value_rate(spec, t + 1, second_order, discounting_close)?;
        Self::with_best_estimate_close(spec, t, second_order, discounting_open, be_close)
    }

    /// Complete sum-at-risk rate for the year: death benefit minus the
    /// closing first-order reserve.
    pub fn sum_at_risk(&self, spec: &PolicySpec) -> f64 {
        spec.kind.death_benefit() - self.reserve_close
    }
}

/// Gross premium instalment rate due at time `t` (zero once premiums stop).
fn gross_premium_due(spec: &PolicySpec, t: u32) -> Result<f64, ContractError> {
    let due = match spec.premium_type {
        PremiumType::Annual => t < spec.duration,
        PremiumType::Single => t == 0,
    };
    if due {
        gross_premium_rate(spec)
    } else {
        Ok(0.0)
    }
}

/// Total market-consistent technical profit of the year, in currency:
///
///   [BE_t + B - E - S](1 + j_realized) - [X + BE_{t+1}]
///
/// with premiums collected on non-surrendered sums, realized expenses from
/// the first-order loadings net of the deltas, and surrender payouts at the
/// penalized opening best estimate.
pub fn technical_profit_mcv(
    state: &PortfolioState,
    outcome: &PathOutcome,
    be_open: f64,
    be_close: f64,
    expenses: &ExpenseAssumptions,
) -> Result<f64, ProfitError> {
    let spec = &state.policy;
    let t = state.time;
    let w = state.sums_in_force;
    let staying = w - outcome.surrendered;
    let b = gross_premium_due(spec, t)?;
    let premiums = b * staying;
    let realized_premium_fraction = spec.loadings.premium_fraction() - expenses.premium_delta();
    let realized_management = spec.loadings.management - expenses.delta_management;
    let expense_outgo = realized_premium_fraction * b * staying + realized_management * w;
    let surrender_outgo = surrender_coefficient(spec, t) * be_open * outcome.surrendered;
    let invested = be_open * w + premiums - expense_outgo - surrender_outgo;
    Ok(invested * (1.0 + outcome.asset_return) - outcome.claims - outcome.sums_end * be_close)
}

/// Demographic profit of the year (currency): year-start reserves and net
/// inflow accumulated at the technical rate, less claims and the year-end
/// best estimate on surviving sums.
pub fn demographic_profit(
    state: &PortfolioState,
    outcome: &PathOutcome,
    be_open: f64,
    be_close: f64,
) -> Result<f64, ProfitError> {
    let spec = &state.policy;
    let staying = state.sums_in_force - outcome.surrendered;
    let inflow = net_inflow_rate(spec, state.time)?;
    Ok((be_open + inflow) * staying * (1.0 + spec.technical_rate)
        - outcome.claims
        - outcome.sums_end * be_close)
}

/// Demographic profit via the sum-at-risk form: the local-GAAP term plus the
/// accumulated best-estimate-versus-reserve jumps. Agrees with
/// `demographic_profit` to float precision; keeping both routes makes the
/// identity testable.
pub fn demographic_profit_via_sum_at_risk(
    state: &PortfolioState,
    outcome: &PathOutcome,
    rates: &YearRates,
) -> Result<f64, ProfitError> {
    let spec = &state.policy;
    let staying = state.sums_in_force - outcome.surrendered;
    let lg = local_gaap_profit(state, outcome, rates)?;
    let accumulate = 1.0 + spec.technical_rate;
    Ok(
        lg + (rates.be_open - rates.reserve_open) * staying * accumulate
            - outcome.sums_end * (rates.be_close - rates.reserve_close),
    )
}

/// Demographic profit in the local accounting framework: the complete
/// sum-at-risk times the mortality surprise.
pub fn local_gaap_profit(
    state: &PortfolioState,
    outcome: &PathOutcome,
    rates: &YearRates,
) -> Result<f64, ProfitError> {
    let spec = &state.policy;
    let q_star = spec.first_order.qx(spec.issue_age + state.time)?;
    let staying = state.sums_in_force - outcome.surrendered;
    Ok(rates.sum_at_risk(spec) * (q_star * staying - outcome.sums_died))
}

/// The five-component decomposition of the technical profit.
pub fn homans_components(
    state: &PortfolioState,
    outcome: &PathOutcome,
    be_open: f64,
    be_close: f64,
    expenses: &ExpenseAssumptions,
) -> Result<ProfitDecomposition, ProfitError> {
    let spec = &state.policy;
    let t = state.time;
    let w = state.sums_in_force;
    let staying = w - outcome.surrendered;
    let j_star = spec.technical_rate;
    let spread = outcome.asset_return - j_star;
    let b = gross_premium_due(spec, t)?;
    let net_premium = crate::contract::net_premium_due(spec, t)?;
    let g_star = surrender_coefficient(spec, t);
    let management = spec.loadings.management;

    let demographic = demographic_profit(state, outcome, be_open, be_close)?;
    let financial = spread
        * (be_open * w + net_premium * staying
            - management * w
            - g_star * be_open * outcome.surrendered);
    let lapse = (be_open * (1.0 - g_star) - management) * (1.0 + j_star) * outcome.surrendered;
    let delta_leg = expenses.premium_delta() * b * staying + expenses.delta_management * w;
    let expense = (1.0 + j_star) * delta_leg;
    let residual = spread * delta_leg;
    let total = technical_profit_mcv(state, outcome, be_open, be_close, expenses)?;
    Ok(ProfitDecomposition {
        demographic,
        financial,
        lapse,
        expense,
        residual,
        total,
    })
}

/// Three-way split of the demographic profit. The pieces close back to the
/// sum-at-risk form of the demographic profit exactly.
pub fn demographic_split(
    state: &PortfolioState,
    outcome: &PathOutcome,
    rates: &YearRates,
) -> Result<DemographicSplit, ProfitError> {
    let spec = &state.policy;
    let staying = state.sums_in_force - outcome.surrendered;
    let accumulate = 1.0 + spec.technical_rate;
    let local_gaap = local_gaap_profit(state, outcome, rates)?;
    let open_rate_jump = rates.be_open - rates.epv_open;
    let close_rate_jump = rates.be_close - rates.epv_close;
    let rate_gap = staying * (open_rate_jump * accumulate - close_rate_jump)
        + close_rate_jump * outcome.sums_died;
    let open_mort_jump = rates.epv_open - rates.reserve_open;
    let close_mort_jump = rates.epv_close - rates.reserve_close;
    let mortality_gap = staying * (open_mort_jump * accumulate - close_mort_jump)
        + close_mort_jump * outcome.sums_died;
    Ok(DemographicSplit {
        local_gaap,
        rate_gap,
        mortality_gap,
    })
}

/// Analytic expected demographic profit over (t, t+1], with no lapses: the
/// year-end best estimate is taken under the forward-implied curve, matching
/// the Vašíček calibration target. Zero for t >= 1 whenever the one-year spot
/// rate equals the technical rate.
pub fn expected_demographic_profit(
    state: &PortfolioState,
    discounting: &Discounting,
    second_order: &LifeTable,
) -> Result<f64, ProfitError> {
    let spec = &state.policy;
    let t = state.time;
    let w = state.sums_in_force;
    let be_open = if t == 0 {
        0.0
    } else {
        crate::valuation::best_estimate_rate(spec, t, second_order, discounting)?
    };
    let inflow = net_inflow_rate(spec, t)?;
    let q = second_order.qx(spec.issue_age + t)?;
    let be_close = if t + 1 == spec.duration {
        spec.kind.survival_benefit()
    } else {
        let next_disc = discounting.forward_implied()?;
        recursion_value_rate(spec, t + 1, second_order, &next_disc)?
    };
    Ok(w * ((be_open + inflow) * (1.0 + spec.technical_rate)
        - q * spec.kind.death_benefit()
        - (1.0 - q) * be_close))
}

/// Analytic expectations of the three demographic components (no lapses).
/// For t >= 1 the local-GAAP and mortality-gap means cancel exactly.
pub fn expected_demographic_split(
    state: &PortfolioState,
    discounting: &Discounting,
    second_order: &LifeTable,
) -> Result<DemographicSplit, ProfitError> {
    let spec = &state.policy;
    let t = state.time;
    let w = state.sums_in_force;
    let q = second_order.qx(spec.issue_age + t)?;
    let p = 1.0 - q;
    let accumulate = 1.0 + spec.technical_rate;
    let be_close = if t + 1 == spec.duration {
        spec.kind.survival_benefit()
    } else {
        let next_disc = discounting.forward_implied()?;
        recursion_value_rate(spec, t + 1, second_order, &next_disc)?
    };
    let flat = Discounting::Flat(spec.technical_rate);
    let epv_close = recursion_value_rate(spec, t + 1, second_order, &flat)?;
    let reserve_close = if t + 1 == spec.duration {
        spec.kind.survival_benefit()
    } else {
        crate::contract::local_reserve_rate(spec, t + 1)?
    };
    let (be_open, epv_open, reserve_open) = if t == 0 {
        (0.0, 0.0, 0.0)
    } else {
        (
            crate::valuation::best_estimate_rate(spec, t, second_order, discounting)?,
            epv_rate(spec, t, second_order)?,
            crate::contract::local_reserve_rate(spec, t)?,
        )
    };
    let q_star = spec.first_order.qx(spec.issue_age + t)?;
    let d_b = spec.kind.death_benefit() - reserve_close;
    let local_gaap = d_b * w * (q_star - q);
    let rate_gap = w * ((be_open - epv_open) * accumulate - p * (be_close - epv_close));
    let mortality_gap =
        w * ((epv_open - reserve_open) * accumulate - p * (epv_close - reserve_close));
    Ok(DemographicSplit {
        local_gaap,
        rate_gap,
        mortality_gap,
    })
}

/// Implicit safety loading at time `t`: the relative margin of first-order
/// over second-order mortality, (q* - q) / q.
pub fn safety_loading(
    t: u32,
    first_order: &LifeTable,
    second_order: &LifeTable,
    issue_age: u32,
) -> Result<f64, ProfitError> {
    let age = issue_age + t;
    let q_star = first_order.qx(age)?;
    let q = second_order.qx(age)?;
    if q == 0.0 {
        return Err(ProfitError::ZeroMortality { age });
    }
    Ok((q_star - q) / q)
}
