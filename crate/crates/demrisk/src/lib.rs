//! Valuation and demographic-risk capital for non-participating life
//! insurance portfolios.
//!
//! The crate values pure endowments, endowments, and term insurances on two
//! bases side by side: the locked first-order pricing basis of local GAAP
//! and the market-consistent basis of Solvency II (realistic mortality, the
//! current risk-free curve). On top of the valuations it decomposes the
//! one-year technical profit into demographic, financial, lapse, expense,
//! and residual components, splits the demographic part three ways, and
//! estimates the demographic-risk Solvency Capital Requirement as a 99.5%
//! one-year value-at-risk by Monte Carlo simulation, with analytic
//! expectations available as oracles at every step.
//!
//! Start with [`lifetable::LifeTable`] and [`curve::YieldCurve`] for the
//! bases, [`contract::PolicySpec`] for the contract, and work upward through
//! [`valuation`], [`profit`], and [`engine`]. The [`commands`] module drives
//! whole runs from a JSON configuration; the `demrisk` binary is a thin
//! wrapper around it. The `book/` directory of the repository walks through
//! the model narrative chapter by chapter, and every code block in it runs
//! as a doc-test of this crate.

pub mod commands;
pub mod config;
pub mod contract;
pub mod curve;
pub mod engine;
pub mod lifetable;
mod math;
pub mod profit;
pub mod valuation;

pub use contract::{
    gross_premium_rate, local_reserve_rate, net_inflow_rate, net_premium_due, pure_premium_rate,
    sum_at_risk, surrender_coefficient, Cohort, Loadings, PolicyKind, PolicySpec, PremiumType,
    SurrenderPenalty,
};
pub use curve::{load_yield_curve, vasicek_year_curve, Discounting, VasicekParams, YieldCurve};
pub use engine::{
    lognormal_params_from_mean_cv, path_rng, scr, simulate_deaths, simulate_one_year,
    simulate_one_year_both, summarize, ProfitDistribution, SimulationConfig,
};
pub use lifetable::{load_life_table, LifeTable, ScalingSchedule};
pub use profit::{
    demographic_profit, demographic_profit_via_sum_at_risk, demographic_split,
    expected_demographic_profit, expected_demographic_split, homans_components, local_gaap_profit,
    safety_loading, technical_profit_mcv, DemographicSplit, ExpenseAssumptions, PathOutcome,
    PortfolioState, ProfitDecomposition, YearRates,
};
pub use valuation::{
    best_estimate_rate, calibrate_vasicek, epv_rate, epv_recursion_residual,
    market_recursion_residual, ValuationBasis,
};

// Every code block in the book doubles as a doc-test, so the guide cannot
// drift from the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/life-tables.md")]
    mod life_tables {}
    #[doc = include_str!("../../../book/src/term-structure.md")]
    mod term_structure {}
    #[doc = include_str!("../../../book/src/contracts.md")]
    mod contracts {}
    #[doc = include_str!("../../../book/src/valuation.md")]
    mod valuation {}
    #[doc = include_str!("../../../book/src/profit.md")]
    mod profit {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
