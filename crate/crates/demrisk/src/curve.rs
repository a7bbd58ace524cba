//! Risk-free term structure: discount factors, forward rates, the implied
//! year-end curve, and one-factor Vašíček simulation of that curve.
//!
//! All spot rates are annually compounded. The Vašíček model works in
//! continuous time internally; its zero-coupon prices are converted to
//! annually compounded spots at the module boundary so that every consumer
//! sees a single compounding convention.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("cannot read curve {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{row}: malformed row {content:?} (expected `maturity,spot_rate`)")]
    MalformedRow {
        path: String,
        row: usize,
        content: String,
    },
    #[error("{path}:{row}: maturity gap at {expected} (found {found})")]
    MaturityGap {
        path: String,
        row: usize,
        expected: u32,
        found: u32,
    },
    #[error("spot rate {rate} at maturity {maturity} must exceed -1")]
    RateOutOfRange { maturity: u32, rate: f64 },
    #[error("curve has no maturities")]
    Empty,
    #[error("maturity {maturity} beyond curve horizon {max}")]
    MaturityBeyondCurve { maturity: u32, max: u32 },
    #[error("curve must extend to maturity 2 to imply a year-end curve")]
    TooShortForForwards,
    #[error("mean reversion must be positive (a = {0})")]
    NonPositiveMeanReversion(f64),
    #[error("volatility must be non-negative (sigma = {0})")]
    NegativeVolatility(f64),
    #[error("simulation horizon must be at least 1 year")]
    ZeroHorizon,
    #[error("calibration could not bracket a short-rate level in [{lo}, {hi}]")]
    CalibrationBracket { lo: f64, hi: f64 },
}

/// Annually compounded spot term structure with contiguous integer
/// maturities 1..=max, anchored at an integer valuation time.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldCurve {
    valuation_time: u32,
    spot: Vec<f64>,
}

impl YieldCurve {
    pub fn new(valuation_time: u32, spot: Vec<f64>) -> Result<Self, CurveError> {
        if spot.is_empty() {
            return Err(CurveError::Empty);
        }
        for (i, &r) in spot.iter().enumerate() {
            if r <= -1.0 || !r.is_finite() {
                return Err(CurveError::RateOutOfRange {
                    maturity: i as u32 + 1,
                    rate: r,
                });
            }
        }
        Ok(Self {
            valuation_time,
            spot,
        })
    }

    /// Flat curve at `rate` out to `max_maturity`.
    pub fn flat(valuation_time: u32, rate: f64, max_maturity: u32) -> Result<Self, CurveError> {
        if max_maturity == 0 {
            return Err(CurveError::Empty);
        }
        Self::new(valuation_time, vec![rate; max_maturity as usize])
    }

    pub fn valuation_time(&self) -> u32 {
        self.valuation_time
    }

    pub fn max_maturity(&self) -> u32 {
        self.spot.len() as u32
    }

    /// Spot rate for integer maturity `h >= 1`.
    pub fn spot_rate(&self, h: u32) -> Result<f64, CurveError> {
        if h == 0 || h > self.max_maturity() {
            return Err(CurveError::MaturityBeyondCurve {
                maturity: h,
                max: self.max_maturity(),
            });
        }
        Ok(self.spot[(h - 1) as usize])
    }

    /// Discount factor for a payment `h` years ahead: (1 + i(0,h))^-h,
    /// with `discount(0) = 1`.
    pub fn discount(&self, h: u32) -> Result<f64, CurveError> {
        if h == 0 {
            return Ok(1.0);
        }
        let r = self.spot_rate(h)?;
        Ok((1.0 + r).powi(-(h as i32)))
    }

    /// One-year forward rate over (h, h+1); `forward(0)` is the one-year spot.
    pub fn forward(&self, h: u32) -> Result<f64, CurveError> {
        if h == 0 {
            return self.spot_rate(1);
        }
        let acc_long = (1.0 + self.spot_rate(h + 1)?).powi(h as i32 + 1);
        let acc_short = (1.0 + self.spot_rate(h)?).powi(h as i32);
        Ok(acc_long / acc_short - 1.0)
    }

    /// Curve one year ahead implied by today's forwards: spot rate for
    /// maturity m accumulates from year 1 to year 1+m. The maximum maturity
    /// drops by one and the valuation time advances by one.
    pub fn forward_implied(&self) -> Result<YieldCurve, CurveError> {
        if self.max_maturity() < 2 {
            return Err(CurveError::TooShortForForwards);
        }
        let one_year = 1.0 + self.spot_rate(1)?;
        let mut spot = Vec::with_capacity(self.spot.len() - 1);
        for m in 1..self.max_maturity() {
            let acc = (1.0 + self.spot_rate(m + 1)?).powi(m as i32 + 1) / one_year;
            spot.push(acc.powf(1.0 / m as f64) - 1.0);
        }
        YieldCurve::new(self.valuation_time + 1, spot)
    }
}

/// Loads a curve from a CSV file with rows `maturity,spot_rate`, maturities
/// contiguous from 1. An optional header line is skipped. The loaded curve
/// is anchored at valuation time 0.
pub fn load_yield_curve(path: impl AsRef<Path>) -> Result<YieldCurve, CurveError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| CurveError::Io {
        path: display.clone(),
        source,
    })?;
    let mut spot = Vec::new();
    let mut prev: Option<u32> = None;
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split(',');
        let m_field = fields.next().unwrap_or("").trim();
        let r_field = fields.next().unwrap_or("").trim();
        if fields.next().is_some() || r_field.is_empty() {
            return Err(CurveError::MalformedRow {
                path: display,
                row,
                content: trimmed.to_string(),
            });
        }
        if row == 1 && m_field.parse::<u32>().is_err() {
            continue;
        }
        let maturity: u32 = m_field.parse().map_err(|_| CurveError::MalformedRow {
            path: display.clone(),
            row,
            content: trimmed.to_string(),
        })?;
        let rate: f64 = r_field.parse().map_err(|_| CurveError::MalformedRow {
            path: display.clone(),
            row,
            content: trimmed.to_string(),
        })?;
        let expected = prev.map_or(1, |p| p + 1);
        if maturity != expected {
            return Err(CurveError::MaturityGap {
                path: display,
                row,
                expected,
                found: maturity,
            });
        }
        prev = Some(maturity);
        spot.push(rate);
    }
    YieldCurve::new(0, spot)
}

/// Discounting leg of a valuation basis: either a full curve or a flat
/// annual rate (the locked technical rate, for first-order work).
#[derive(Debug, Clone, PartialEq)]
pub enum Discounting {
    Flat(f64),
    Curve(YieldCurve),
}

impl Discounting {
    /// Discount factor for a payment `h` years ahead.
    pub fn factor(&self, h: u32) -> Result<f64, CurveError> {
        match self {
            Discounting::Flat(r) => {
                if *r <= -1.0 || r.is_nan() {
                    return Err(CurveError::RateOutOfRange {
                        maturity: h,
                        rate: *r,
                    });
                }
                Ok((1.0 + r).powi(-(h as i32)))
            }
            Discounting::Curve(c) => c.discount(h),
        }
    }

    /// Spot rate over the first year.
    pub fn one_year_spot(&self) -> Result<f64, CurveError> {
        match self {
            Discounting::Flat(r) => Ok(*r),
            Discounting::Curve(c) => c.spot_rate(1),
        }
    }

    /// Discounting one year ahead implied by today's forwards. A flat rate
    /// is its own forward curve, exactly.
    pub fn forward_implied(&self) -> Result<Discounting, CurveError> {
        match self {
            Discounting::Flat(r) => Ok(Discounting::Flat(*r)),
            Discounting::Curve(c) => Ok(Discounting::Curve(c.forward_implied()?)),
        }
    }

    /// Longest payable horizon in years, `None` when unbounded (flat rate).
    pub fn horizon(&self) -> Option<u32> {
        match self {
            Discounting::Flat(_) => None,
            Discounting::Curve(c) => Some(c.max_maturity()),
        }
    }
}

/// Vašíček short-rate parameters: dr = a (b - r) dt + sigma dW.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VasicekParams {
    /// Mean-reversion speed `a` (per year), strictly positive.
    pub mean_reversion: f64,
    /// Long-run mean level `b` (continuous rate).
    pub long_run_mean: f64,
    /// Diffusion volatility `sigma` (per sqrt-year), non-negative.
    pub volatility: f64,
    /// Short rate at the start of the year.
    pub initial_short_rate: f64,
}

impl VasicekParams {
    pub fn validate(&self) -> Result<(), CurveError> {
        if self.mean_reversion <= 0.0 || !self.mean_reversion.is_finite() {
            return Err(CurveError::NonPositiveMeanReversion(self.mean_reversion));
        }
        if self.volatility < 0.0 || !self.volatility.is_finite() {
            return Err(CurveError::NegativeVolatility(self.volatility));
        }
        Ok(())
    }

    /// Exact one-year transition of the short rate given a standard normal
    /// draw: mean-reverting drift plus the stationary-scaled diffusion term.
    pub fn year_end_short_rate(&self, draw: f64) -> f64 {
        let a = self.mean_reversion;
        let decay = (-a).exp();
        let mean = self.initial_short_rate * decay + self.long_run_mean * (1.0 - decay);
        let sd = self.volatility * (((1.0 - (-2.0 * a).exp()) / (2.0 * a)).sqrt());
        mean + sd * draw
    }
}

/// Simulates the year-end spot curve from a Vašíček short rate.
///
/// The short rate moves by its exact one-year transition; the curve then
/// comes from the closed-form zero-coupon price
/// P(tau) = A(tau) exp(-B(tau) r), with continuous rates converted to annual
/// compounding. Negative rates are permitted.
pub fn vasicek_year_curve(
    params: &VasicekParams,
    valuation_time: u32,
    horizon: u32,
    draw: f64,
) -> Result<YieldCurve, CurveError> {
    params.validate()?;
    if horizon == 0 {
        return Err(CurveError::ZeroHorizon);
    }
    let r1 = params.year_end_short_rate(draw);
    let a = params.mean_reversion;
    let b = params.long_run_mean;
    let s2 = params.volatility * params.volatility;
    let mut spot = Vec::with_capacity(horizon as usize);
    for m in 1..=horizon {
        let tau = m as f64;
        let beta = (1.0 - (-a * tau).exp()) / a;
        let ln_a = (b - s2 / (2.0 * a * a)) * (beta - tau) - s2 * beta * beta / (4.0 * a);
        let ln_price = ln_a - beta * r1;
        // (1 + i)^-tau = exp(ln_price)  =>  i = exp(-ln_price / tau) - 1
        spot.push((-ln_price / tau).exp() - 1.0);
    }
    YieldCurve::new(valuation_time, spot)
}

/// Solves for the Vašíček short-rate level that makes the quadrature mean of
/// `value_under` over the year-end curve hit `target`.
///
/// Only the initial short rate moves; (a, b, sigma) stay fixed. The mean is a
/// 64-node Gauss–Hermite expectation over the normal driver, and the level is
/// found by bisection inside `bounds`. Errors when no bracket exists there.
pub fn calibrate_vasicek_level<E>(
    base: &VasicekParams,
    valuation_time: u32,
    horizon: u32,
    bounds: (f64, f64),
    target: f64,
    mut value_under: impl FnMut(&YieldCurve) -> Result<f64, E>,
) -> Result<VasicekParams, E>
where
    E: From<CurveError>,
{
    base.validate().map_err(E::from)?;
    if horizon == 0 {
        return Err(E::from(CurveError::ZeroHorizon));
    }
    let mut mean_at = |r0: f64| -> Result<f64, E> {
        let params = VasicekParams {
            initial_short_rate: r0,
            ..*base
        };
        crate::math::normal_expectation(QUADRATURE_ORDER, |draw| {
            let curve = vasicek_year_curve(&params, valuation_time, horizon, draw)?;
            value_under(&curve)
        })
    };
    // The mean need not be monotone in the level (term covers have nearly
    // offsetting benefit and premium legs), so scan for a sign change
    // before bisecting.
    const SCAN_POINTS: usize = 33;
    let step = (bounds.1 - bounds.0) / (SCAN_POINTS - 1) as f64;
    let mut prev_r = bounds.0;
    let mut prev_g = mean_at(prev_r)? - target;
    let mut bracket = if prev_g == 0.0 {
        Some((prev_r, prev_r))
    } else {
        None
    };
    if bracket.is_none() {
        for i in 1..SCAN_POINTS {
            let r = bounds.0 + step * i as f64;
            let g = mean_at(r)? - target;
            if g == 0.0 || g.signum() != prev_g.signum() {
                bracket = Some((prev_r, r));
                break;
            }
            prev_r = r;
            prev_g = g;
        }
    }
    let Some((lo, hi)) = bracket else {
        return Err(E::from(CurveError::CalibrationBracket {
            lo: bounds.0,
            hi: bounds.1,
        }));
    };
    let root = crate::math::bisect(|r0| -> Result<f64, E> { Ok(mean_at(r0)? - target) }, lo, hi)?;
    match root {
        Some(r0) => Ok(VasicekParams {
            initial_short_rate: r0,
            ..*base
        }),
        None => Err(E::from(CurveError::CalibrationBracket {
            lo: bounds.0,
            hi: bounds.1,
        })),
    }
}

/// Gauss–Hermite order used for calibration means.
pub const QUADRATURE_ORDER: usize = 64;

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn discount_examples() {
        let c = YieldCurve::flat(0, 0.01, 5).unwrap();
        assert_eq!(c.discount(0).unwrap(), 1.0);
        assert!((c.discount(2).unwrap() - 1.01_f64.powi(-2)).abs() < 1e-15);
        assert!(matches!(
            c.discount(6),
            Err(CurveError::MaturityBeyondCurve {
                maturity: 6,
                max: 5
            })
        ));
    }

    #[test]
    fn discount_factors_positive_and_non_increasing_on_flat_curves() {
        for rate in [0.0, 0.01, 0.05] {
            let c = YieldCurve::flat(0, rate, 30).unwrap();
            let mut prev = c.discount(0).unwrap();
            for h in 1..=30 {
                let d = c.discount(h).unwrap();
                assert!(d > 0.0);
                assert!(d <= prev, "discount rose at h={h} for rate {rate}");
                prev = d;
            }
        }
        // Negative rates keep factors positive, just not monotone caps.
        let c = YieldCurve::flat(0, -0.005, 10).unwrap();
        for h in 0..=10 {
            assert!(c.discount(h).unwrap() > 0.0);
        }
    }

    #[test]
    fn forward_on_flat_curve_is_flat() {
        let c = YieldCurve::flat(0, 0.01, 10).unwrap();
        for h in 0..9 {
            assert!((c.forward(h).unwrap() - 0.01).abs() < 1e-14);
        }
    }

    #[test]
    fn forward_from_two_point_curve() {
        let c = YieldCurve::new(0, vec![0.01, 0.02]).unwrap();
        let expected = 1.02_f64.powi(2) / 1.01 - 1.0;
        assert!((c.forward(1).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.0300990099).abs() < 1e-9);
        assert_eq!(c.forward(0).unwrap(), 0.01);
    }

    #[test]
    fn forward_implied_flat_curve_is_invariant() {
        let c = YieldCurve::flat(3, 0.01, 10).unwrap();
        let next = c.forward_implied().unwrap();
        assert_eq!(next.valuation_time(), 4);
        assert_eq!(next.max_maturity(), 9);
        for m in 1..=9 {
            assert!((next.spot_rate(m).unwrap() - 0.01).abs() < 1e-14);
        }
    }

    #[test]
    fn forward_implied_two_point_curve() {
        let c = YieldCurve::new(0, vec![0.01, 0.02]).unwrap();
        let next = c.forward_implied().unwrap();
        assert_eq!(next.max_maturity(), 1);
        assert!((next.spot_rate(1).unwrap() - 0.0300990099).abs() < 1e-9);
    }

    #[test]
    fn forward_implied_requires_two_maturities() {
        let c = YieldCurve::flat(0, 0.01, 1).unwrap();
        assert!(matches!(
            c.forward_implied(),
            Err(CurveError::TooShortForForwards)
        ));
    }

    #[test]
    fn curve_rejects_rates_at_or_below_minus_one() {
        assert!(YieldCurve::new(0, vec![-1.0]).is_err());
        assert!(YieldCurve::new(0, vec![-0.999]).is_ok());
    }

    #[test]
    fn loads_curve_from_csv() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "maturity,spot_rate\n1,0.01\n2,0.015\n3,0.02\n").unwrap();
        let c = load_yield_curve(f.path()).unwrap();
        assert_eq!(c.max_maturity(), 3);
        assert_eq!(c.spot_rate(2).unwrap(), 0.015);
    }

    #[test]
    fn curve_csv_rejects_maturity_gap() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "1,0.01\n3,0.02\n").unwrap();
        let err = load_yield_curve(f.path()).unwrap_err();
        assert!(matches!(
            err,
            CurveError::MaturityGap {
                expected: 2,
                found: 3,
                ..
            }
        ));
    }

    #[test]
    fn flat_discounting_forward_implied_is_exact_identity() {
        let d = Discounting::Flat(0.01);
        match d.forward_implied().unwrap() {
            Discounting::Flat(r) => assert_eq!(r, 0.01),
            _ => panic!("flat discounting must stay flat"),
        }
    }

    fn base_params() -> VasicekParams {
        VasicekParams {
            mean_reversion: 0.1,
            long_run_mean: 0.02,
            volatility: 0.006,
            initial_short_rate: 0.01,
        }
    }

    #[test]
    fn vasicek_sigma_zero_with_matched_levels_is_flat() {
        // Continuous rate ln(1.01) converts to a 1% annual spot at every maturity.
        let r = 1.01_f64.ln();
        let p = VasicekParams {
            mean_reversion: 5.0,
            long_run_mean: r,
            volatility: 0.0,
            initial_short_rate: r,
        };
        let c = vasicek_year_curve(&p, 1, 30, 0.0).unwrap();
        for m in 1..=30 {
            assert!((c.spot_rate(m).unwrap() - 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn vasicek_zero_draw_matches_mean_short_rate() {
        let p = base_params();
        let sigma0 = VasicekParams {
            volatility: 0.0,
            ..p
        };
        assert_eq!(p.year_end_short_rate(0.0), sigma0.year_end_short_rate(0.0));
        let c = vasicek_year_curve(&p, 1, 10, 0.0).unwrap();
        let again = vasicek_year_curve(&p, 1, 10, 0.0).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn vasicek_curves_are_pointwise_monotone_in_the_draw() {
        let p = base_params();
        let low = vasicek_year_curve(&p, 1, 20, -1.5).unwrap();
        let high = vasicek_year_curve(&p, 1, 20, 1.5).unwrap();
        for m in 1..=20 {
            assert!(low.spot_rate(m).unwrap() < high.spot_rate(m).unwrap());
        }
    }

    #[test]
    fn vasicek_permits_negative_rates() {
        let p = VasicekParams {
            mean_reversion: 0.3,
            long_run_mean: -0.005,
            volatility: 0.004,
            initial_short_rate: -0.004,
        };
        let c = vasicek_year_curve(&p, 1, 10, -2.0).unwrap();
        assert!(c.spot_rate(1).unwrap() < 0.0);
    }

    #[test]
    fn vasicek_rejects_bad_params() {
        let mut p = base_params();
        p.mean_reversion = 0.0;
        assert!(vasicek_year_curve(&p, 1, 10, 0.0).is_err());
        let mut p = base_params();
        p.volatility = -0.1;
        assert!(vasicek_year_curve(&p, 1, 10, 0.0).is_err());
    }

    #[test]
    fn calibration_hits_a_curve_functional() {
        // Target the 5-year discount factor of the forward-implied curve.
        let today =
            YieldCurve::new(0, (1..=12).map(|m| 0.005 + 0.001 * m as f64).collect()).unwrap();
        let target_curve = today.forward_implied().unwrap();
        let target = target_curve.discount(5).unwrap();
        let params = calibrate_vasicek_level::<CurveError>(
            &base_params(),
            1,
            11,
            (-0.5, 0.5),
            target,
            |c| c.discount(5),
        )
        .unwrap();
        let mean: f64 = crate::math::normal_expectation(QUADRATURE_ORDER, |d| {
            vasicek_year_curve(&params, 1, 11, d)?.discount(5)
        })
        .unwrap();
        assert!((mean - target).abs() < 1e-10);
    }

    #[test]
    fn calibration_reports_missing_bracket() {
        let err = calibrate_vasicek_level::<CurveError>(
            &base_params(),
            1,
            10,
            (0.4, 0.5),
            1.5, // discount factors cannot exceed 1 at these rates
            |c| c.discount(5),
        )
        .unwrap_err();
        assert!(matches!(err, CurveError::CalibrationBracket { .. }));
    }
}
