//! Small numerical utilities shared across the crate: compensated summation,
//! sample moments, Gauss–Hermite quadrature, and a bracketing root finder.

/// Kahan–Babuska compensated sum. Keeps the running error term explicit so
/// that long reductions (moments over millions of samples) stay stable and
/// independent of how the work was partitioned upstream.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Sample mean via compensated summation.
pub fn mean(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    compensated_sum(samples.iter().copied()) / samples.len() as f64
}

/// Sample moments: (mean, standard deviation with n-1 denominator, adjusted
/// Fisher–Pearson skewness). Skewness is `None` when fewer than 3 samples are
/// available and `0.0` when the sample is degenerate (zero variance).
pub fn sample_moments(samples: &[f64]) -> (f64, f64, Option<f64>) {
    let n = samples.len();
    let m = mean(samples);
    if n < 2 {
        return (m, 0.0, None);
    }
    let m2 = compensated_sum(samples.iter().map(|x| (x - m).powi(2))) / n as f64;
    let var = m2 * n as f64 / (n - 1) as f64;
    let sd = var.max(0.0).sqrt();
    if n < 3 {
        return (m, sd, None);
    }
    if m2 <= 0.0 {
        return (m, sd, Some(0.0));
    }
    let m3 = compensated_sum(samples.iter().map(|x| (x - m).powi(3))) / n as f64;
    let g1 = m3 / m2.powf(1.5);
    let nf = n as f64;
    let adjusted = (nf * (nf - 1.0)).sqrt() / (nf - 2.0) * g1;
    (m, sd, Some(adjusted))
}

/// Nodes and weights of the n-point Gauss–Hermite rule for the weight
/// function exp(-x^2), computed by Newton iteration on the orthonormal
/// Hermite recurrence (Numerical Recipes `gauher`). Stable for n up to a few
/// hundred in f64.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be at least 1");
    const EPS: f64 = 3e-14;
    const MAX_ITER: usize = 64;
    let mut nodes = vec![0.0_f64; n];
    let mut weights = vec![0.0_f64; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0_f64;
    for i in 0..m {
        // Initial guesses for the roots in descending order.
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0_f64;
        let mut converged = false;
        for _ in 0..MAX_ITER {
            // Orthonormal Hermite recurrence up to degree n; p1 = H_n(z).
            let mut p1 = core::f64::consts::PI.powf(-0.25);
            let mut p2 = 0.0_f64;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= EPS {
                converged = true;
                break;
            }
        }
        debug_assert!(converged, "Gauss-Hermite Newton iteration did not converge");
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    (nodes, weights)
}

/// Expectation of `f` under a standard normal variate, by Gauss–Hermite
/// quadrature with `order` nodes.
pub fn normal_expectation<E>(
    order: usize,
    mut f: impl FnMut(f64) -> Result<f64, E>,
) -> Result<f64, E> {
    let (nodes, weights) = gauss_hermite(order);
    let scale = core::f64::consts::PI.sqrt().recip();
    let mut terms = Vec::with_capacity(order);
    for (x, w) in nodes.iter().zip(weights.iter()) {
        terms.push(w * f(core::f64::consts::SQRT_2 * x)?);
    }
    Ok(scale * compensated_sum(terms))
}

/// Root of a continuous function on [lo, hi] by bisection. The caller must
/// supply a bracketing interval; returns `None` when the endpoint values do
/// not straddle zero.
pub fn bisect<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    lo: f64,
    hi: f64,
) -> Result<Option<f64>, E> {
    const MAX_ITER: usize = 200;
    const X_TOL: f64 = 1e-15;
    let mut a = lo;
    let mut b = hi;
    let mut fa = f(a)?;
    let fb = f(b)?;
    if fa == 0.0 {
        return Ok(Some(a));
    }
    if fb == 0.0 {
        return Ok(Some(b));
    }
    if fa.signum() == fb.signum() {
        return Ok(None);
    }
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (a + b);
        let fm = f(mid)?;
        if fm == 0.0 || (b - a).abs() <= X_TOL {
            return Ok(Some(mid));
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(Some(0.5 * (a + b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_handles_cancellation() {
        let xs = [1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(xs), 1.0);
    }

    #[test]
    fn moments_of_known_sample() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let (m, sd, skew) = sample_moments(&xs);
        assert!((m - 2.5).abs() < 1e-15);
        assert!((sd - (5.0_f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(skew.unwrap().abs() < 1e-12);
    }

    #[test]
    fn degenerate_sample_reports_zero_skew() {
        let xs = [2.0; 10];
        let (m, sd, skew) = sample_moments(&xs);
        assert_eq!(m, 2.0);
        assert_eq!(sd, 0.0);
        assert_eq!(skew, Some(0.0));
    }

    #[test]
    fn gauss_hermite_integrates_polynomials() {
        // E[x^2] = 1 and E[x^4] = 3 for a standard normal.
        let e2: Result<f64, ()> = normal_expectation(64, |x| Ok(x * x));
        let e4: Result<f64, ()> = normal_expectation(64, |x| Ok(x.powi(4)));
        assert!((e2.unwrap() - 1.0).abs() < 1e-12);
        assert!((e4.unwrap() - 3.0).abs() < 1e-11);
    }

    #[test]
    fn gauss_hermite_weights_sum_to_sqrt_pi() {
        let (_, w) = gauss_hermite(64);
        let total = compensated_sum(w);
        assert!((total - core::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bisect_finds_root() {
        let root: Option<f64> = bisect::<()>(|x| Ok(x * x - 2.0), 0.0, 2.0).unwrap();
        assert!((root.unwrap() - core::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn bisect_rejects_unbracketed_interval() {
        let root: Option<f64> = bisect::<()>(|x| Ok(x * x + 1.0), -1.0, 1.0).unwrap();
        assert!(root.is_none());
    }
}
