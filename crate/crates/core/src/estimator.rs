//! Mean functions, their inversion (mean-invariant estimators) and
//! maximum-likelihood estimators for the Bernoulli, Poisson and truncated
//! Poisson measurement models.

use crate::error::{Error, Result};
use crate::qis_metrics::one_bit_mean;
use crate::sensor_model::Sample;
use crate::special_fn::{poisson_pmf, psi, psi_complement};

/// Default tolerance on `|mu(theta_hat) - y_bar|`.
pub const DEFAULT_TOL: f64 = 1e-10;

const BRACKET_LO: f64 = 1e-9;
const BRACKET_CAP: f64 = 1e9;

/// Exposure-to-mean response `theta -> E[Y]`. Must be strictly increasing on
/// its domain for [`invert_mean`] to apply.
pub trait MeanFunction: Sync {
    fn eval(&self, theta: f64) -> f64;

    fn domain(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn monotone(&self) -> bool {
        true
    }
}

/// `mu(theta) = theta`: Gaussian or untruncated Poisson measurements.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityMean;

impl MeanFunction for IdentityMean {
    fn eval(&self, theta: f64) -> f64 {
        theta
    }
}

/// `mu(theta) = theta psi_{L-1}(theta) + L (1 - psi_L(theta))`.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedPoissonMean {
    pub full_well: u64,
}

impl MeanFunction for TruncatedPoissonMean {
    fn eval(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        let l = self.full_well;
        let lower = if l > 1 {
            theta * psi(l - 1, theta).map(f64::from).unwrap_or(0.0)
        } else {
            0.0
        };
        lower + l as f64 * psi_complement(l, theta).unwrap_or(0.0)
    }
}

/// One-bit response `P(Poisson(theta) + N(0, read^2) >= q)`.
#[derive(Debug, Clone, Copy)]
pub struct OneBitMean {
    pub threshold: f64,
    pub read_noise: f64,
}

impl MeanFunction for OneBitMean {
    fn eval(&self, theta: f64) -> f64 {
        one_bit_mean(theta.max(0.0), self.threshold, self.read_noise).unwrap_or(f64::NAN)
    }
}

/// Closure-backed mean function.
pub struct FnMean<F> {
    f: F,
    domain: (f64, f64),
    monotone: bool,
}

impl<F: Fn(f64) -> f64 + Sync> FnMean<F> {
    pub fn new(f: F, domain: (f64, f64), monotone: bool) -> Self {
        FnMean { f, domain, monotone }
    }
}

impl<F: Fn(f64) -> f64 + Sync> MeanFunction for FnMean<F> {
    fn eval(&self, theta: f64) -> f64 {
        (self.f)(theta)
    }

    fn domain(&self) -> (f64, f64) {
        self.domain
    }

    fn monotone(&self) -> bool {
        self.monotone
    }
}

/// Solves `mu(theta) = y_bar` by bracketing bisection.
///
/// The bracket starts at `[1e-9, 1]` and its upper end doubles until
/// `mu(hi) > y_bar`; if that needs more than `1e9` electrons the mean is
/// bounded below `y_bar` and a saturation error is returned.
pub fn invert_mean(mu: &dyn MeanFunction, y_bar: f64, tol: f64) -> Result<f64> {
    if !mu.monotone() {
        return Err(Error::domain("mean function is not monotone"));
    }
    if !y_bar.is_finite() {
        return Err(Error::domain(format!("sample mean must be finite, got {y_bar}")));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("tolerance must be > 0"));
    }
    let (dom_lo, dom_hi) = mu.domain();
    let cap = dom_hi.min(BRACKET_CAP);
    let mut lo = dom_lo.max(BRACKET_LO);
    let mu_lo = mu.eval(lo);
    if y_bar <= mu_lo {
        return Err(Error::Saturation {
            value: y_bar,
            lower: mu_lo,
            upper: mu.eval(cap),
        });
    }
    let mut hi = (lo * 2.0).max(1.0).min(cap);
    while mu.eval(hi) <= y_bar {
        if hi >= cap {
            return Err(Error::Saturation {
                value: y_bar,
                lower: mu_lo,
                upper: mu.eval(cap),
            });
        }
        lo = hi;
        hi = (hi * 2.0).min(cap);
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mu.eval(mid) <= y_bar {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (e_lo, e_hi) = ((mu.eval(lo) - y_bar).abs(), (mu.eval(hi) - y_bar).abs());
    let (theta, err) = if e_lo <= e_hi { (lo, e_lo) } else { (hi, e_hi) };
    if err > tol {
        return Err(Error::Convergence(format!(
            "mean inversion stalled at theta = {theta} with residual {err:e} > {tol:e}"
        )));
    }
    Ok(theta)
}

/// `theta_hat = mu^{-1}(y_bar)` for a fixed mean function.
pub struct MeanInvariantEstimator<M> {
    pub mean: M,
    pub tol: f64,
}

impl<M: MeanFunction> MeanInvariantEstimator<M> {
    pub fn new(mean: M) -> Self {
        MeanInvariantEstimator {
            mean,
            tol: DEFAULT_TOL,
        }
    }

    pub fn estimate(&self, y_bar: f64) -> Result<f64> {
        invert_mean(&self.mean, y_bar, self.tol)
    }
}

/// Bernoulli (one-bit, `q = 1`) ML estimator `-ln(1 - y_bar)`.
pub fn ml_bernoulli(y_bar: f64) -> Result<f64> {
    if !(y_bar > 0.0 && y_bar < 1.0) {
        return Err(Error::Saturation {
            value: y_bar,
            lower: 0.0,
            upper: 1.0,
        });
    }
    Ok(-(-y_bar).ln_1p())
}

/// Poisson ML estimator: the sample mean.
pub fn ml_poisson(samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("no samples"));
    }
    Ok(samples.iter().map(|s| s.0 as f64).sum::<f64>() / samples.len() as f64)
}

/// `P(X = L - 1) / P(X >= L)` for `X ~ Poisson(theta)`.
fn saturation_hazard(theta: f64, full_well: u64) -> f64 {
    let l = full_well as f64;
    if theta < l {
        // P(X >= L) / P(X = L-1) = sum_{j>=1} prod_{i=1}^{j} theta / (L - 1 + i)
        let mut term = 1.0;
        let mut sum = 0.0;
        let mut j = 1u64;
        loop {
            term *= theta / (l - 1.0 + j as f64);
            sum += term;
            if term < 1e-17 * sum || j > 1_000_000 {
                break;
            }
            j += 1;
        }
        1.0 / sum
    } else {
        let tail = psi_complement(full_well, theta).unwrap_or(1.0);
        poisson_pmf(full_well - 1, theta) / tail
    }
}

/// ML estimate of `theta` from truncated-Poisson samples, the root of the
/// censored-Poisson score
///
/// ```text
/// S1 / theta - S0 + (1 - S0) * P(X = L-1) / P(X >= L) = 0
/// ```
///
/// with `S0 = mean(Z)`, `S1 = mean(Y Z)` and `Z = 1{Y < L}`.
pub fn ml_truncated_poisson(samples: &[Sample], full_well: u64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("no samples"));
    }
    if full_well == 0 {
        return Err(Error::domain("full well must be >= 1"));
    }
    let n = samples.len() as f64;
    let (mut z_sum, mut yz_sum) = (0.0, 0.0);
    for s in samples {
        if s.0 > full_well {
            return Err(Error::domain(format!(
                "sample {} exceeds the full well {full_well}",
                s.0
            )));
        }
        if s.0 < full_well {
            z_sum += 1.0;
            yz_sum += s.0 as f64;
        }
    }
    let s0 = z_sum / n;
    let s1 = yz_sum / n;
    if z_sum == 0.0 {
        return Err(Error::Saturation {
            value: full_well as f64,
            lower: 0.0,
            upper: full_well as f64,
        });
    }
    if z_sum == n {
        if s1 > 0.0 {
            return Ok(s1);
        }
        return Err(Error::Saturation {
            value: 0.0,
            lower: 0.0,
            upper: full_well as f64,
        });
    }
    let score = |theta: f64| s1 / theta - s0 + (1.0 - s0) * saturation_hazard(theta, full_well);

    let (mut lo, mut hi) = (1e-6f64, 10.0 * full_well as f64);
    if !(score(lo) > 0.0 && score(hi) < 0.0) {
        return Err(Error::Convergence(format!(
            "score has no sign change on [{lo}, {hi}]"
        )));
    }
    for _ in 0..400 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi || hi / lo - 1.0 < 1e-15 {
            break;
        }
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}
