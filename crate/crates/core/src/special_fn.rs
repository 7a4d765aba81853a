//! Special functions behind the closed-form SNR results.
//!
//! The central object is the regularized upper incomplete Gamma function at
//! integer order, which for integer `L` is the lower tail of a Poisson
//! distribution:
//!
//! ```text
//! psi(L, theta) = sum_{l=0}^{L-1} theta^l e^{-theta} / l!  =  P(X < L),  X ~ Poisson(theta)
//! ```
//!
//! Poisson probabilities are evaluated with Loader's saddle-point form
//! (`stirlerr` + `bd0`), which keeps full relative precision for counts and
//! rates far beyond the range where `theta^l / l!` is representable.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Relative size below which a series term no longer changes the sum.
const SERIES_EPS: f64 = 1e-17;

/// A probability returned by [`psi`]; always within `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PsiValue(f64);

impl PsiValue {
    fn new(v: f64) -> Self {
        PsiValue(v.clamp(0.0, 1.0))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<PsiValue> for f64 {
    fn from(p: PsiValue) -> f64 {
        p.0
    }
}

/// Error term of Stirling's approximation,
/// `ln n! - (n + 1/2) ln n + n - ln sqrt(2 pi)`.
fn stirlerr(n: u64) -> f64 {
    if n < 16 {
        let nf = n as f64;
        let ln_fact: f64 = (2..=n).map(|i| (i as f64).ln()).sum();
        return ln_fact - (nf + 0.5) * nf.ln() + nf - LN_SQRT_2PI;
    }
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    let n = n as f64;
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x / m) + m - x`, computed without cancellation when
/// `x` is close to `m`.
fn bd0(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// `ln n!`.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    stirlerr(n) + (nf + 0.5) * nf.ln() - nf + LN_SQRT_2PI
}

/// `ln P(X = k)` for `X ~ Poisson(theta)`.
pub fn ln_poisson_pmf(k: u64, theta: f64) -> f64 {
    if theta == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if k == 0 {
        return -theta;
    }
    let kf = k as f64;
    -stirlerr(k) - bd0(kf, theta) - 0.5 * (2.0 * PI * kf).ln()
}

/// `P(X = k)` for `X ~ Poisson(theta)`.
pub fn poisson_pmf(k: u64, theta: f64) -> f64 {
    ln_poisson_pmf(k, theta).exp()
}

fn check_psi_args(order: u64, theta: f64) -> Result<()> {
    if order == 0 {
        return Err(Error::domain("incomplete Gamma order must be >= 1"));
    }
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::domain(format!(
            "exposure must be finite and >= 0, got {theta}"
        )));
    }
    Ok(())
}

/// Returns `(P(X < L), P(X >= L))` for `X ~ Poisson(theta)`, each computed
/// directly so that whichever side is small keeps its relative precision.
fn psi_pair(order: u64, theta: f64) -> (f64, f64) {
    if theta == 0.0 {
        return (1.0, 0.0);
    }
    let l = order as f64;
    if theta < l {
        // Upper tail, summed upward from l = L; terms shrink since theta < l + 1.
        let mut term = poisson_pmf(order, theta);
        let mut sum = 0.0;
        let mut k = order;
        while term > SERIES_EPS * sum && term > 0.0 {
            sum += term;
            k += 1;
            term *= theta / k as f64;
        }
        let upper = sum.min(1.0);
        (1.0 - upper, upper)
    } else if theta <= l + 10.0 * l.sqrt() {
        // Lower tail, summed downward from l = L - 1; terms shrink since l <= theta.
        let mut k = order - 1;
        let mut term = poisson_pmf(k, theta);
        let mut sum = 0.0;
        loop {
            sum += term;
            if k == 0 || term <= SERIES_EPS * sum {
                break;
            }
            term *= k as f64 / theta;
            k -= 1;
        }
        let lower = sum.min(1.0);
        (lower, 1.0 - lower)
    } else {
        let lower = upper_gamma_cf(order, theta).min(1.0);
        (lower, 1.0 - lower)
    }
}

/// Regularized upper incomplete Gamma `Q(L, theta)` by the modified Lentz
/// continued fraction. Converges quickly for `theta > L + 1`.
fn upper_gamma_cf(order: u64, theta: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let a = order as f64;
    let mut b = theta + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..100_000u64 {
        let i = i as f64;
        let an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    // theta^L e^{-theta} / (L-1)!  ==  theta * pmf(L-1, theta)
    theta * poisson_pmf(order - 1, theta) * h
}

/// Upper incomplete Gamma ratio `psi(L, theta) = P(Poisson(theta) < L)`.
///
/// `psi(L, 0) == 1` for every `L >= 1`.
pub fn psi(order: u64, theta: f64) -> Result<PsiValue> {
    check_psi_args(order, theta)?;
    Ok(PsiValue::new(psi_pair(order, theta).0))
}

/// `1 - psi(L, theta)`, evaluated without cancellation.
pub fn psi_complement(order: u64, theta: f64) -> Result<f64> {
    check_psi_args(order, theta)?;
    Ok(psi_pair(order, theta).1.clamp(0.0, 1.0))
}

/// Derivative of [`psi`] in `theta`: `-theta^{L-1} e^{-theta} / (L-1)!`.
pub fn psi_prime(order: u64, theta: f64) -> Result<f64> {
    check_psi_args(order, theta)?;
    if theta == 0.0 {
        return Err(Error::domain("psi_prime requires theta > 0"));
    }
    Ok(-poisson_pmf(order - 1, theta))
}

/// Complementary error function.
pub fn erfc_fn(x: f64) -> f64 {
    libm::erfc(x)
}

/// Gaussian approximation `N(theta, theta)` of the Poisson pmf, evaluated at `x`.
///
/// Accurate for `theta >= 1`; the error shrinks as `theta` grows.
pub fn poisson_gaussian_approx(theta: f64, x: f64) -> Result<f64> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::domain(format!("theta must be > 0, got {theta}")));
    }
    let d = x - theta;
    Ok((-d * d / (2.0 * theta)).exp() / (2.0 * PI * theta).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Literal series with compensated summation; only usable while
    /// `theta^l / l!` stays representable.
    fn psi_direct(order: u64, theta: f64) -> f64 {
        let mut term = (-theta).exp();
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for l in 0..order {
            if l > 0 {
                term *= theta / l as f64;
            }
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum
    }

    #[test]
    fn psi_at_zero_is_one() {
        for l in [1, 2, 7, 1000, 100_000] {
            assert_eq!(psi(l, 0.0).unwrap().get(), 1.0);
        }
    }

    #[test]
    fn psi_order_one_is_exponential() {
        for &t in &[1e-3, 0.5, 1.0, 3.0, 20.0, 200.0] {
            let p = psi(1, t).unwrap().get();
            let e = (-t).exp();
            assert!((p - e).abs() <= 1e-14 * e, "t={t} {p} {e}");
        }
    }

    #[test]
    fn psi_five_three_matches_direct_sum() {
        // 5-term series evaluated in extended precision (mpmath, 40 digits).
        let expected = 0.815_263_244_523_772_07;
        let got = psi(5, 3.0).unwrap().get();
        assert!((got - expected).abs() <= 1e-12 * expected, "{got}");
        assert!((psi_direct(5, 3.0) - expected).abs() <= 1e-14);
    }

    #[test]
    fn psi_matches_direct_sum_on_grid() {
        for &l in &[1u64, 2, 3, 5, 10, 30, 60, 100, 150] {
            for i in 0..=40 {
                let t = 10f64.powf(-2.0 + 4.5 * i as f64 / 40.0);
                if t > 600.0 {
                    continue;
                }
                let direct = psi_direct(l, t);
                if direct < 1e-280 {
                    continue;
                }
                let got = psi(l, t).unwrap().get();
                let rel = (got - direct).abs() / direct;
                assert!(rel <= 1e-12, "L={l} t={t} got={got} direct={direct} rel={rel}");
            }
        }
    }

    #[test]
    fn psi_large_arguments_are_finite_and_bounded() {
        for &(l, t) in &[(100_000u64, 1e6), (100_000, 1e5), (100_000, 99_000.0), (1, 1e6), (50_000, 1.0)] {
            let p = psi(l, t).unwrap().get();
            assert!((0.0..=1.0).contains(&p), "L={l} t={t} p={p}");
        }
        // Far beyond the full well the lower tail vanishes, far below it is 1.
        assert_eq!(psi(100_000, 1e6).unwrap().get(), 0.0);
        assert_eq!(psi(100_000, 1.0).unwrap().get(), 1.0);
        // At the mean of a large Poisson the lower tail is near one half.
        let mid = psi(100_000, 100_000.0).unwrap().get();
        assert!((mid - 0.5).abs() < 0.01, "{mid}");
    }

    #[test]
    fn psi_rejects_bad_arguments() {
        assert!(psi(0, 1.0).is_err());
        assert!(psi(3, -1.0).is_err());
        assert!(psi(3, f64::NAN).is_err());
        assert!(psi_prime(0, 1.0).is_err());
        assert!(psi_prime(2, 0.0).is_err());
    }

    #[test]
    fn psi_prime_order_one() {
        for &t in &[0.1, 1.0, 4.0] {
            assert!((psi_prime(1, t).unwrap() + (-t).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn psi_prime_peak_follows_stirling() {
        let l = 1000;
        let got = psi_prime(l, (l - 1) as f64).unwrap();
        let approx = -1.0 / (2.0 * PI * (l - 1) as f64).sqrt();
        assert!(((got - approx) / approx).abs() < 0.01, "{got} {approx}");
    }

    #[test]
    fn psi_prime_matches_finite_difference() {
        let h = 1e-6;
        let fd = (psi(4, 2.0 + h).unwrap().get() - psi(4, 2.0 - h).unwrap().get()) / (2.0 * h);
        assert!((psi_prime(4, 2.0).unwrap() - fd).abs() < 1e-6);
    }

    #[test]
    fn erfc_reference_values() {
        assert_eq!(erfc_fn(0.0), 1.0);
        assert!(erfc_fn(40.0) <= 1e-300);
        // mpmath.erfc(1), 30 digits
        let e1 = 0.157_299_207_050_285_130_658_779_364_917;
        assert!((erfc_fn(1.0) - e1).abs() <= 1e-12 * e1);
    }

    #[test]
    fn gaussian_approx_peak() {
        for &t in &[1.0, 9.0, 400.0] {
            let g = poisson_gaussian_approx(t, t).unwrap();
            assert!((g - 1.0 / (2.0 * PI * t).sqrt()).abs() < 1e-15);
        }
        assert!(poisson_gaussian_approx(0.0, 1.0).is_err());
        assert!(poisson_gaussian_approx(-2.0, 1.0).is_err());
    }

    #[test]
    fn ln_factorial_small_and_large() {
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
        assert!((ln_factorial(5) - 120f64.ln()).abs() < 1e-14);
        // lgamma(171) from mpmath
        let expected = 706.573_062_245_787_35;
        assert!((ln_factorial(170) - expected).abs() < 1e-11);
    }

    #[test]
    fn pmf_sums_to_one() {
        for &t in &[0.3, 5.0, 77.0, 1234.5] {
            let s: f64 = (0..5000).map(|k| poisson_pmf(k, t)).sum();
            assert!((s - 1.0).abs() < 1e-12, "t={t} s={s}");
        }
    }
}
