//! Policy definitions and first-order (pricing) quantities: pure and gross
//! premium rates, the complete local-GAAP reserve, sum-at-risk, and the
//! surrender penalty coefficient.
//!
//! Conventions, used consistently by the valuation and profit modules:
//! - premiums fall due at the start of each year in force; death benefits are
//!   paid at the end of the year of death; survival benefits at maturity;
//! - the collection loading finances a per-year expense charged on the sum
//!   insured at the start of every coverage year, and is reserved
//!   prospectively; acquisition and management loadings are premium
//!   proportional and earned as incurred;
//! - reserve-style values at time t count premium instalments due at times
//!   t, t+1, ... (annuity-due), so the annual-premium reserve is zero at
//!   issue; a single premium is treated as collected at issue and never
//!   appears in a valuation at t >= 0.

use thiserror::Error;

use crate::curve::{CurveError, Discounting};
use crate::lifetable::{LifeTable, TableError};

#[derive(Debug, Error)]
pub enum ContractError {
    #[error("policy duration must be at least 1 year")]
    ZeroDuration,
    #[error("premium loadings must satisfy 0 <= acquisition + collection < 1 (got {0})")]
    LoadingsOutOfRange(f64),
    #[error("management loading must be non-negative (got {0})")]
    NegativeManagementLoading(f64),
    #[error("technical rate must exceed -1 (got {0})")]
    TechnicalRateOutOfRange(f64),
    #[error("surrender penalty needs vesting_years > 0 and penalty_rate below the technical rate")]
    InvalidSurrenderPenalty,
    #[error("first-order table {table:?} does not cover ages {from}..={to}")]
    TableCoverage { table: String, from: u32, to: u32 },
    #[error("time {t} outside policy duration {n}")]
    TimeOutOfRange { t: u32, n: u32 },
    #[error("premium annuity is degenerate")]
    DegenerateAnnuity,
    #[error("cohort must have at least one policyholder")]
    EmptyCohort,
    #[error("mean sum insured must be positive (got {0})")]
    NonPositiveSumMean(f64),
    #[error("coefficient of variation must be non-negative (got {0})")]
    NegativeSumCv(f64),
    #[error(
        "explicit sums: expected {expected} positive entries, found {found} (positive: {positive})"
    )]
    BadExplicitSums {
        expected: u64,
        found: usize,
        positive: bool,
    },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

/// The three non-participating contract shapes handled by the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// Lump sum on survival at maturity only.
    PureEndowment,
    /// Lump sum at the end of the year of death, or at maturity on survival.
    Endowment,
    /// Lump sum at the end of the year of death only.
    TermInsurance,
}

impl PolicyKind {
    /// Death benefit per unit sum insured.
    pub fn death_benefit(self) -> f64 {
        match self {
            PolicyKind::PureEndowment => 0.0,
            PolicyKind::Endowment | PolicyKind::TermInsurance => 1.0,
        }
    }

    /// Maturity benefit per unit sum insured.
    pub fn survival_benefit(self) -> f64 {
        match self {
            PolicyKind::TermInsurance => 0.0,
            PolicyKind::Endowment | PolicyKind::PureEndowment => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PremiumType {
    Single,
    Annual,
}

/// Expense loading coefficients.
///
/// `acquisition` and `collection` are fractions of each gross premium;
/// `management` is a per-year rate on the sum insured, charged at the start
/// of every coverage year.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Loadings {
    pub acquisition: f64,
    pub collection: f64,
    pub management: f64,
}

impl Loadings {
    /// Combined premium-proportional loading.
    pub fn premium_fraction(&self) -> f64 {
        self.acquisition + self.collection
    }
}

/// Surrender penalty: nothing is paid before `vesting_years`; afterwards the
/// payout is the reserve discounted at `penalty_rate` to maturity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrenderPenalty {
    pub vesting_years: u32,
    pub penalty_rate: f64,
}

/// A non-participating life insurance contract plus its locked pricing bases.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub issue_age: u32,
    pub duration: u32,
    pub premium_type: PremiumType,
    /// Technical interest rate locked at pricing.
    pub technical_rate: f64,
    pub loadings: Loadings,
    pub surrender: Option<SurrenderPenalty>,
    /// First-order (prudential) mortality table locked at pricing.
    pub first_order: LifeTable,
}

impl PolicySpec {
    pub fn validate(&self) -> Result<(), ContractError> {
        if self.duration == 0 {
            return Err(ContractError::ZeroDuration);
        }
        let pf = self.loadings.premium_fraction();
        if !(0.0..1.0).contains(&pf) {
            return Err(ContractError::LoadingsOutOfRange(pf));
        }
        if self.loadings.management < 0.0 {
            return Err(ContractError::NegativeManagementLoading(
                self.loadings.management,
            ));
        }
        if self.technical_rate <= -1.0 || !self.technical_rate.is_finite() {
            return Err(ContractError::TechnicalRateOutOfRange(self.technical_rate));
        }
        if let Some(s) = self.surrender {
            if s.vesting_years == 0
                || s.penalty_rate >= self.technical_rate
                || s.penalty_rate.is_nan()
            {
                return Err(ContractError::InvalidSurrenderPenalty);
            }
        }
        let last_needed = self.issue_age + self.duration - 1;
        if self.issue_age < self.first_order.min_age() || last_needed > self.first_order.max_age() {
            return Err(ContractError::TableCoverage {
                table: self.first_order.name().to_string(),
                from: self.issue_age,
                to: last_needed,
            });
        }
        Ok(())
    }

    fn check_time(&self, t: u32) -> Result<(), ContractError> {
        if t > self.duration {
            return Err(ContractError::TimeOutOfRange {
                t,
                n: self.duration,
            });
        }
        Ok(())
    }
}

/// Insured population behind one policy form: policyholder count and the
/// size distribution of the individual sums insured.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub policyholders: u64,
    /// Mean individual sum insured (currency).
    pub sum_mean: f64,
    /// Coefficient of variation of the individual sums.
    pub sum_cv: f64,
    /// Optional explicit individual sums; when present their count equals
    /// `policyholders` and the initial in-force amount is their total.
    pub per_policy_sums: Option<Vec<f64>>,
}

impl Cohort {
    pub fn from_moments(
        policyholders: u64,
        sum_mean: f64,
        sum_cv: f64,
    ) -> Result<Self, ContractError> {
        let c = Self {
            policyholders,
            sum_mean,
            sum_cv,
            per_policy_sums: None,
        };
        c.validate()?;
        Ok(c)
    }

    /// Derives mean and CV (population denominator) from explicit sums.
    pub fn from_sums(sums: Vec<f64>) -> Result<Self, ContractError> {
        if sums.is_empty() || sums.iter().any(|&c| c <= 0.0 || c.is_nan()) {
            return Err(ContractError::BadExplicitSums {
                expected: sums.len() as u64,
                found: sums.len(),
                positive: false,
            });
        }
        let n = sums.len() as f64;
        let mean = sums.iter().sum::<f64>() / n;
        let var = sums.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
        let cv = var.sqrt() / mean;
        let c = Self {
            policyholders: sums.len() as u64,
            sum_mean: mean,
            sum_cv: cv,
            per_policy_sums: Some(sums),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ContractError> {
        if self.policyholders == 0 {
            return Err(ContractError::EmptyCohort);
        }
        if self.sum_mean <= 0.0 || self.sum_mean.is_nan() {
            return Err(ContractError::NonPositiveSumMean(self.sum_mean));
        }
        if self.sum_cv < 0.0 {
            return Err(ContractError::NegativeSumCv(self.sum_cv));
        }
        if let Some(sums) = &self.per_policy_sums {
            if sums.len() as u64 != self.policyholders
                || sums.iter().any(|&c| c <= 0.0 || c.is_nan())
            {
                return Err(ContractError::BadExplicitSums {
                    expected: self.policyholders,
                    found: sums.len(),
                    positive: sums.iter().all(|&c| c > 0.0),
                });
            }
        }
        Ok(())
    }

    /// Total sums insured at inception.
    pub fn initial_sums(&self) -> f64 {
        match &self.per_policy_sums {
            Some(sums) => sums.iter().sum(),
            None => self.policyholders as f64 * self.sum_mean,
        }
    }
}

// ---------------------------------------------------------------------------
// Expected-present-value primitives shared with the valuation module.
// ---------------------------------------------------------------------------

/// EPV of an annuity-due of 1 payable at the start of each of the next
/// `years` years while a life aged `age` survives.
pub(crate) fn survival_annuity_due(
    table: &LifeTable,
    age: u32,
    years: u32,
    disc: &Discounting,
) -> Result<f64, ContractError> {
    let mut total = 0.0;
    for h in 0..years {
        let p = table.npx(age, h)?;
        if p == 0.0 {
            break;
        }
        total += p * disc.factor(h)?;
    }
    Ok(total)
}

/// EPV of 1 paid at the end of the year of death within `years` years.
pub(crate) fn death_benefit_epv(
    table: &LifeTable,
    age: u32,
    years: u32,
    disc: &Discounting,
) -> Result<f64, ContractError> {
    let mut total = 0.0;
    for h in 0..years {
        let dq = table.deferred_qx(age, h)?;
        total += dq * disc.factor(h + 1)?;
    }
    Ok(total)
}

/// EPV of 1 paid on survival `years` years ahead.
pub(crate) fn pure_endowment_epv(
    table: &LifeTable,
    age: u32,
    years: u32,
    disc: &Discounting,
) -> Result<f64, ContractError> {
    Ok(table.npx(age, years)? * disc.factor(years)?)
}

/// EPV of the contractual benefits of `kind` over the next `years` years.
pub(crate) fn benefit_epv(
    kind: PolicyKind,
    table: &LifeTable,
    age: u32,
    years: u32,
    disc: &Discounting,
) -> Result<f64, ContractError> {
    let mut total = 0.0;
    if kind.death_benefit() > 0.0 {
        total += kind.death_benefit() * death_benefit_epv(table, age, years, disc)?;
    }
    if kind.survival_benefit() > 0.0 {
        total += kind.survival_benefit() * pure_endowment_epv(table, age, years, disc)?;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Premium rates
// ---------------------------------------------------------------------------

/// Equivalence-principle pure premium rate on the first-order basis
/// (per unit sum insured, per instalment).
pub fn pure_premium_rate(spec: &PolicySpec) -> Result<f64, ContractError> {
    spec.validate()?;
    let disc = Discounting::Flat(spec.technical_rate);
    let benefits = benefit_epv(
        spec.kind,
        &spec.first_order,
        spec.issue_age,
        spec.duration,
        &disc,
    )?;
    match spec.premium_type {
        PremiumType::Single => Ok(benefits),
        PremiumType::Annual => {
            let annuity =
                survival_annuity_due(&spec.first_order, spec.issue_age, spec.duration, &disc)?;
            if annuity <= 0.0 {
                return Err(ContractError::DegenerateAnnuity);
            }
            Ok(benefits / annuity)
        }
    }
}

/// Gross premium rate per instalment: the pure premium grossed up for the
/// per-year management expense and the premium-proportional loadings. A
/// single premium funds the whole management expense stream up front.
pub fn gross_premium_rate(spec: &PolicySpec) -> Result<f64, ContractError> {
    spec.validate()?;
    let denom = 1.0 - spec.loadings.premium_fraction();
    if denom <= 0.0 {
        return Err(ContractError::LoadingsOutOfRange(
            spec.loadings.premium_fraction(),
        ));
    }
    let pi = pure_premium_rate(spec)?;
    let expense_epv = match spec.premium_type {
        PremiumType::Annual => spec.loadings.management,
        PremiumType::Single => {
            spec.loadings.management
                * survival_annuity_due(
                    &spec.first_order,
                    spec.issue_age,
                    spec.duration,
                    &Discounting::Flat(spec.technical_rate),
                )?
        }
    };
    Ok((pi + expense_epv) / denom)
}

/// Premium cash collected at time `t`, net of premium-proportional loadings.
/// Computed from the pure premium directly so that recursion identities hold
/// to machine precision.
pub fn net_premium_due(spec: &PolicySpec, t: u32) -> Result<f64, ContractError> {
    spec.check_time(t)?;
    let due = match spec.premium_type {
        PremiumType::Annual => t < spec.duration,
        PremiumType::Single => t == 0,
    };
    if !due {
        return Ok(0.0);
    }
    let pi = pure_premium_rate(spec)?;
    match spec.premium_type {
        PremiumType::Annual => Ok(pi + spec.loadings.management),
        PremiumType::Single => Ok(pi
            + spec.loadings.management
                * survival_annuity_due(
                    &spec.first_order,
                    spec.issue_age,
                    spec.duration,
                    &Discounting::Flat(spec.technical_rate),
                )?),
    }
}

/// Net cash inflow rate at the start of year `t`: premium collected minus the
/// per-year management expense. For annual premiums this is the classical
/// constant pure premium rate.
pub fn net_inflow_rate(spec: &PolicySpec, t: u32) -> Result<f64, ContractError> {
    spec.check_time(t)?;
    let expense = if t < spec.duration {
        spec.loadings.management
    } else {
        0.0
    };
    Ok(net_premium_due(spec, t)? - expense)
}

// ---------------------------------------------------------------------------
// Reserves and sums at risk
// ---------------------------------------------------------------------------

/// Generic prospective value at time `t` on an arbitrary (mortality,
/// discounting) basis: benefits plus the management-expense stream minus the
/// net premiums still to come. At `t = n` it returns the maturity benefit
/// about to be paid.
pub(crate) fn prospective_value_rate(
    spec: &PolicySpec,
    t: u32,
    mortality: &LifeTable,
    disc: &Discounting,
) -> Result<f64, ContractError> {
    spec.check_time(t)?;
    if t == spec.duration {
        return Ok(spec.kind.survival_benefit());
    }
    let age = spec.issue_age + t;
    let years = spec.duration - t;
    let benefits = benefit_epv(spec.kind, mortality, age, years, disc)?;
    let annuity = survival_annuity_due(mortality, age, years, disc)?;
    let expenses = spec.loadings.management * annuity;
    let premiums = match spec.premium_type {
        PremiumType::Annual => net_premium_due(spec, t)? * annuity,
        // A single premium is collected at issue; no valuation at t >= 0
        // carries it as a future inflow.
        PremiumType::Single => 0.0,
    };
    Ok(benefits + expenses - premiums)
}

/// Complete prospective reserve rate on the locked first-order bases
/// (prudential mortality, technical rate), including the expense reserve.
/// Zero at issue for annual premiums; equal to the maturity benefit at t = n.
pub fn local_reserve_rate(spec: &PolicySpec, t: u32) -> Result<f64, ContractError> {
    prospective_value_rate(
        spec,
        t,
        &spec.first_order,
        &Discounting::Flat(spec.technical_rate),
    )
}

/// Complete sum-at-risk rate at time `t+1`: death benefit minus the year-end
/// complete reserve. Negative for pure endowments.
pub fn sum_at_risk(spec: &PolicySpec, t_plus_1: u32) -> Result<f64, ContractError> {
    if t_plus_1 == 0 {
        return Err(ContractError::TimeOutOfRange {
            t: 0,
            n: spec.duration,
        });
    }
    Ok(spec.kind.death_benefit() - local_reserve_rate(spec, t_plus_1)?)
}

/// Surrender penalty coefficient g*_t: zero before vesting, then the reserve
/// discount factor (1 + penalty_rate)^-(n - t). Zero when the contract has no
/// surrender value at all.
pub fn surrender_coefficient(spec: &PolicySpec, t: u32) -> f64 {
    match spec.surrender {
        None => 0.0,
        Some(s) => {
            if t < s.vesting_years {
                0.0
            } else {
                let to_maturity = spec.duration.saturating_sub(t);
                (1.0 + s.penalty_rate).powi(-(to_maturity as i32))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifetable::LifeTable;
    use proptest::prelude::*;

    fn flat_table(q: f64, min_age: u32, terminal: u32) -> LifeTable {
        let mut qx = vec![q; (terminal - min_age) as usize];
        qx.push(1.0);
        LifeTable::new("flat", min_age, qx).unwrap()
    }

    fn spec(
        kind: PolicyKind,
        premium_type: PremiumType,
        duration: u32,
        q: f64,
        rate: f64,
    ) -> PolicySpec {
        PolicySpec {
            kind,
            issue_age: 40,
            duration,
            premium_type,
            technical_rate: rate,
            loadings: Loadings::default(),
            surrender: None,
            first_order: flat_table(q, 40, 120),
        }
    }

    #[test]
    fn one_year_pure_endowment_single_premium() {
        let s = spec(PolicyKind::PureEndowment, PremiumType::Single, 1, 0.1, 0.0);
        assert!((pure_premium_rate(&s).unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn one_year_term_single_premium() {
        let s = spec(PolicyKind::TermInsurance, PremiumType::Single, 1, 0.1, 0.0);
        assert!((pure_premium_rate(&s).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn one_year_endowment_single_premium_is_certain_unit() {
        let s = spec(PolicyKind::Endowment, PremiumType::Single, 1, 0.37, 0.0);
        assert!((pure_premium_rate(&s).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gross_equals_pure_without_loadings() {
        let s = spec(PolicyKind::Endowment, PremiumType::Annual, 10, 0.01, 0.01);
        assert_eq!(
            gross_premium_rate(&s).unwrap(),
            pure_premium_rate(&s).unwrap()
        );
    }

    #[test]
    fn gross_premium_with_management_loading() {
        let mut s = spec(PolicyKind::PureEndowment, PremiumType::Single, 1, 0.1, 0.0);
        s.loadings.management = 0.1;
        // pi = 0.9, annuity-due over one year = 1, so b = (0.9 + 0.1) / 1.
        assert!((gross_premium_rate(&s).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn full_premium_loading_is_rejected() {
        let mut s = spec(PolicyKind::Endowment, PremiumType::Annual, 10, 0.01, 0.01);
        s.loadings.acquisition = 0.6;
        s.loadings.collection = 0.4;
        assert!(matches!(
            gross_premium_rate(&s),
            Err(ContractError::LoadingsOutOfRange(_))
        ));
    }

    #[test]
    fn reserve_at_maturity_is_the_terminal_benefit() {
        let s = spec(PolicyKind::Endowment, PremiumType::Annual, 10, 0.01, 0.01);
        assert_eq!(local_reserve_rate(&s, 10).unwrap(), 1.0);
        let s = spec(
            PolicyKind::TermInsurance,
            PremiumType::Annual,
            10,
            0.01,
            0.01,
        );
        assert_eq!(local_reserve_rate(&s, 10).unwrap(), 0.0);
    }

    #[test]
    fn annual_premium_reserve_is_zero_at_issue() {
        for kind in [
            PolicyKind::PureEndowment,
            PolicyKind::Endowment,
            PolicyKind::TermInsurance,
        ] {
            let s = spec(kind, PremiumType::Annual, 20, 0.02, 0.01);
            assert!(local_reserve_rate(&s, 0).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn two_year_pure_endowment_single_premium_reserve() {
        let s = spec(PolicyKind::PureEndowment, PremiumType::Single, 2, 0.1, 0.0);
        assert!((local_reserve_rate(&s, 1).unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn pure_endowment_sum_at_risk_is_negative() {
        let s = spec(
            PolicyKind::PureEndowment,
            PremiumType::Annual,
            20,
            0.02,
            0.01,
        );
        for t1 in 1..=20 {
            assert!(sum_at_risk(&s, t1).unwrap() < 0.0, "t+1 = {t1}");
        }
    }

    #[test]
    fn endowment_sum_at_risk_vanishes_at_maturity() {
        let s = spec(PolicyKind::Endowment, PremiumType::Annual, 20, 0.02, 0.01);
        assert_eq!(sum_at_risk(&s, 20).unwrap(), 0.0);
    }

    #[test]
    fn term_sum_at_risk_is_one_minus_reserve() {
        let s = spec(
            PolicyKind::TermInsurance,
            PremiumType::Annual,
            20,
            0.02,
            0.01,
        );
        for t1 in 1..20 {
            let d = sum_at_risk(&s, t1).unwrap();
            let v = local_reserve_rate(&s, t1).unwrap();
            assert_eq!(d, 1.0 - v);
            assert!(d > 0.9, "term reserve stays tiny");
        }
    }

    #[test]
    fn surrender_coefficient_examples() {
        let mut s = spec(PolicyKind::Endowment, PremiumType::Annual, 20, 0.02, 0.01);
        s.surrender = Some(SurrenderPenalty {
            vesting_years: 5,
            penalty_rate: 0.005,
        });
        assert_eq!(surrender_coefficient(&s, 4), 0.0);
        assert_eq!(surrender_coefficient(&s, 20), 1.0);
        let g = surrender_coefficient(&s, 10);
        assert!((g - 1.005_f64.powi(-10)).abs() < 1e-15);
        assert!((g - 0.951348).abs() < 1e-6);
    }

    #[test]
    fn surrender_penalty_must_undercut_technical_rate() {
        let mut s = spec(PolicyKind::Endowment, PremiumType::Annual, 20, 0.02, 0.01);
        s.surrender = Some(SurrenderPenalty {
            vesting_years: 5,
            penalty_rate: 0.02,
        });
        assert!(matches!(
            s.validate(),
            Err(ContractError::InvalidSurrenderPenalty)
        ));
    }

    #[test]
    fn premium_additivity_across_kinds() {
        for premium_type in [PremiumType::Single, PremiumType::Annual] {
            let pe = spec(PolicyKind::PureEndowment, premium_type, 15, 0.02, 0.015);
            let ti = spec(PolicyKind::TermInsurance, premium_type, 15, 0.02, 0.015);
            let en = spec(PolicyKind::Endowment, premium_type, 15, 0.02, 0.015);
            let sum = pure_premium_rate(&pe).unwrap() + pure_premium_rate(&ti).unwrap();
            let whole = pure_premium_rate(&en).unwrap();
            assert!((sum - whole).abs() < 1e-12);
        }
    }

    #[test]
    fn single_premium_pure_endowment_reserve_is_monotone() {
        let s = spec(
            PolicyKind::PureEndowment,
            PremiumType::Single,
            20,
            0.02,
            0.01,
        );
        let mut prev = local_reserve_rate(&s, 0).unwrap();
        for t in 1..=20 {
            let v = local_reserve_rate(&s, t).unwrap();
            assert!(v >= prev, "reserve dipped at t = {t}");
            prev = v;
        }
    }

    #[test]
    fn cohort_from_sums_matches_moments() {
        let c = Cohort::from_sums(vec![50.0, 100.0, 150.0]).unwrap();
        assert_eq!(c.policyholders, 3);
        assert!((c.sum_mean - 100.0).abs() < 1e-12);
        let expected_cv = (5000.0_f64 / 3.0).sqrt() / 100.0;
        assert!((c.sum_cv - expected_cv).abs() < 1e-12);
        assert_eq!(c.initial_sums(), 300.0);
    }

    #[test]
    fn cohort_rejects_mismatched_sums() {
        let c = Cohort {
            policyholders: 2,
            sum_mean: 1.0,
            sum_cv: 0.0,
            per_policy_sums: Some(vec![1.0]),
        };
        assert!(matches!(
            c.validate(),
            Err(ContractError::BadExplicitSums { .. })
        ));
    }

    fn reserve_recursion_residual(s: &PolicySpec, t: u32) -> f64 {
        // Locked-basis analogue of the market-consistent recursion: the
        // year-start invested rate accumulated at j* must fund the expected
        // death benefit and the survivors' year-end reserve.
        let j = s.technical_rate;
        let issue_adjust = if s.premium_type == PremiumType::Single && t == 0 {
            net_premium_due(s, 0).unwrap()
        } else {
            0.0
        };
        let opening = local_reserve_rate(s, t).unwrap() - issue_adjust;
        let inflow = net_inflow_rate(s, t).unwrap();
        let q = s.first_order.qx(s.issue_age + t).unwrap();
        let closing = local_reserve_rate(s, t + 1).unwrap();
        (opening + inflow) * (1.0 + j) - q * s.kind.death_benefit() - (1.0 - q) * closing
    }

    proptest! {
        #[test]
        fn reserve_recursion_holds_everywhere(
            kind_ix in 0usize..3,
            premium_ix in 0usize..2,
            n in 1u32..25,
            q in 0.001f64..0.2,
            j in -0.005f64..0.08,
            acquisition in 0.0f64..0.4,
            management in 0.0f64..0.01,
        ) {
            let kind = [PolicyKind::PureEndowment, PolicyKind::Endowment, PolicyKind::TermInsurance][kind_ix];
            let premium_type = [PremiumType::Single, PremiumType::Annual][premium_ix];
            let mut s = spec(kind, premium_type, n, q, j);
            s.loadings.acquisition = acquisition;
            s.loadings.management = management;
            for t in 0..n {
                let r = reserve_recursion_residual(&s, t);
                prop_assert!(r.abs() < 1e-12, "residual {r} at t = {t}");
            }
        }
    }
}
