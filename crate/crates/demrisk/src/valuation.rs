//! Market-consistent quantities: best-estimate rates on realistic mortality
//! and the risk-free curve, their flat-rate analogue, and the recursive
//! identities that tie year-start and year-end values together.
//!
//! `best_estimate_rate` and `epv_rate` report zero at maturity (the benefit
//! has just been paid); inside the recursion identities the year-end value at
//! maturity is instead the certain terminal benefit, still to be paid.

use thiserror::Error;

use crate::contract::{
    net_inflow_rate, net_premium_due, prospective_value_rate, ContractError, PolicySpec,
    PremiumType,
};
use crate::curve::{calibrate_vasicek_level, CurveError, Discounting, VasicekParams, YieldCurve};
use crate::lifetable::{LifeTable, TableError};

#[derive(Debug, Error)]
pub enum ValuationError {
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("curve horizon {horizon} does not cover the remaining {needed} policy years")]
    CurveTooShort { horizon: u32, needed: u32 },
    #[error("calibration needs an uncertain year-end value (t + 1 must be below the duration)")]
    NothingToCalibrate,
}

/// Second-order valuation basis: realistic mortality plus a discounting leg
/// (risk-free curve or flat rate).
#[derive(Debug, Clone)]
pub struct ValuationBasis {
    pub discounting: Discounting,
    pub mortality: LifeTable,
}

impl ValuationBasis {
    pub fn new(discounting: Discounting, mortality: LifeTable) -> Self {
        Self {
            discounting,
            mortality,
        }
    }

    pub fn best_estimate(&self, spec: &PolicySpec, t: u32) -> Result<f64, ValuationError> {
        best_estimate_rate(spec, t, &self.mortality, &self.discounting)
    }
}

fn check_coverage(spec: &PolicySpec, t: u32, disc: &Discounting) -> Result<(), ValuationError> {
    let needed = spec.duration - t;
    if let Some(horizon) = disc.horizon() {
        if horizon < needed {
            return Err(ValuationError::CurveTooShort { horizon, needed });
        }
    }
    Ok(())
}

/// Best-estimate rate at time `t`: expected present value of benefits and
/// management expenses net of future premiums, on realistic mortality and the
/// supplied discounting. Returns 0 at `t = n` (benefit already paid).
pub fn best_estimate_rate(
    spec: &PolicySpec,
    t: u32,
    mortality: &LifeTable,
    discounting: &Discounting,
) -> Result<f64, ValuationError> {
    if t == spec.duration {
        return Ok(0.0);
    }
    check_coverage(spec, t, discounting)?;
    Ok(prospective_value_rate(spec, t, mortality, discounting)?)
}

/// Expected present value on realistic mortality discounted at the locked
/// technical rate. Differs from the best estimate only in the discounting.
pub fn epv_rate(spec: &PolicySpec, t: u32, mortality: &LifeTable) -> Result<f64, ValuationError> {
    best_estimate_rate(spec, t, mortality, &Discounting::Flat(spec.technical_rate))
}

/// Year-end value used inside recursions and profit arithmetic: the plain
/// prospective value before `n`, the certain terminal benefit at `n`.
pub(crate) fn recursion_value_rate(
    spec: &PolicySpec,
    u: u32,
    mortality: &LifeTable,
    discounting: &Discounting,
) -> Result<f64, ValuationError> {
    if u == spec.duration {
        return Ok(spec.kind.survival_benefit());
    }
    best_estimate_rate(spec, u, mortality, discounting)
}

/// Value at `t` with the premium due at `t` still outstanding. Only a single
/// premium at issue needs adjusting: valuations treat it as already
/// collected, while the recursion accumulates it explicitly.
fn pre_collection_value(spec: &PolicySpec, t: u32, value: f64) -> Result<f64, ValuationError> {
    if spec.premium_type == PremiumType::Single && t == 0 {
        Ok(value - net_premium_due(spec, 0)?)
    } else {
        Ok(value)
    }
}

/// Residual of the market-consistent one-year recursion:
///
///   (be_t + pi_t)(1 + i_t(0,1)) - q_{x+t} * DB - p_{x+t} * be_{t+1}
///
/// with `be_{t+1}` taken under the forward-implied curve and the same
/// realistic table at both dates. Zero (to float precision) for every
/// contract kind and premium type.
pub fn market_recursion_residual(
    spec: &PolicySpec,
    t: u32,
    basis: &ValuationBasis,
) -> Result<f64, ValuationError> {
    residual_on(spec, t, &basis.mortality, &basis.discounting)
}

/// Flat-rate form of the recursion residual: discounting at the technical
/// rate on realistic mortality, where the forward-implied curve is the same
/// flat rate and the identity is exact.
pub fn epv_recursion_residual(
    spec: &PolicySpec,
    t: u32,
    mortality: &LifeTable,
) -> Result<f64, ValuationError> {
    residual_on(spec, t, mortality, &Discounting::Flat(spec.technical_rate))
}

fn residual_on(
    spec: &PolicySpec,
    t: u32,
    mortality: &LifeTable,
    discounting: &Discounting,
) -> Result<f64, ValuationError> {
    if t >= spec.duration {
        return Err(ValuationError::Contract(ContractError::TimeOutOfRange {
            t,
            n: spec.duration,
        }));
    }
    let opening = best_estimate_rate(spec, t, mortality, discounting)?;
    let invested = pre_collection_value(spec, t, opening)? + net_inflow_rate(spec, t)?;
    let one_year = discounting.one_year_spot()?;
    let closing = if t + 1 == spec.duration {
        spec.kind.survival_benefit()
    } else {
        let next_disc = discounting.forward_implied()?;
        recursion_value_rate(spec, t + 1, mortality, &next_disc)?
    };
    let q = mortality.qx(spec.issue_age + t)?;
    Ok(invested * (1.0 + one_year) - q * spec.kind.death_benefit() - (1.0 - q) * closing)
}

/// Calibrates the Vašíček short-rate level for policy year (t, t+1]: the
/// quadrature mean of the year-end best estimate must equal the best estimate
/// under the forward-implied curve. Fixed (a, b, sigma) come from `base`;
/// only the initial short rate is solved for, inside `bounds`.
pub fn calibrate_vasicek(
    curve_t: &YieldCurve,
    spec: &PolicySpec,
    t: u32,
    mortality: &LifeTable,
    base: &VasicekParams,
    bounds: (f64, f64),
) -> Result<VasicekParams, ValuationError> {
    if t + 1 >= spec.duration {
        return Err(ValuationError::NothingToCalibrate);
    }
    let forward_curve = curve_t.forward_implied()?;
    let target = best_estimate_rate(spec, t + 1, mortality, &Discounting::Curve(forward_curve))?;
    let horizon = spec.duration - t - 1;
    calibrate_vasicek_level(
        base,
        curve_t.valuation_time() + 1,
        horizon,
        bounds,
        target,
        |curve| best_estimate_rate(spec, t + 1, mortality, &Discounting::Curve(curve.clone())),
    )
}

/// Quadrature mean of the year-end best estimate under given Vašíček
/// parameters; used to report calibration residuals.
pub fn vasicek_mean_best_estimate(
    params: &VasicekParams,
    spec: &PolicySpec,
    t: u32,
    mortality: &LifeTable,
) -> Result<f64, ValuationError> {
    if t + 1 >= spec.duration {
        return Err(ValuationError::NothingToCalibrate);
    }
    let horizon = spec.duration - t - 1;
    crate::math::normal_expectation(crate::curve::QUADRATURE_ORDER, |draw| {
        let curve = crate::curve::vasicek_year_curve(params, t + 1, horizon, draw)?;
        best_estimate_rate(spec, t + 1, mortality, &Discounting::Curve(curve))
    })
}
