//! One-bit quanta image sensor metrics: the Poisson-Gaussian one-bit
//! response, its SNR as a function of threshold, optimal thresholds, binary
//! entropy and bit error rate.

use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::special_fn::{erfc_fn, poisson_pmf, psi, psi_complement};

/// Residual Poisson mass allowed outside the summed window.
const TAIL_MASS: f64 = 1e-14;

fn check_theta(theta: f64, strict: bool) -> Result<()> {
    let ok = if strict { theta > 0.0 } else { theta >= 0.0 };
    if !ok || !theta.is_finite() {
        return Err(Error::domain(format!("invalid exposure {theta}")));
    }
    Ok(())
}

fn check_threshold(q: f64) -> Result<()> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::domain(format!("threshold must be > 0, got {q}")));
    }
    Ok(())
}

fn check_read_noise(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!("read noise must be >= 0, got {sigma}")));
    }
    Ok(())
}

/// Integer photon threshold equivalent to a real threshold `q`.
fn count_threshold(q: f64) -> u64 {
    (q.ceil() as u64).max(1)
}

/// Count window `[lo, hi]` outside of which the Poisson mass is below
/// `TAIL_MASS`.
fn poisson_window(theta: f64) -> (u64, u64) {
    if theta == 0.0 {
        return (0, 0);
    }
    let spread = 12.0 * theta.sqrt() + 12.0;
    let mut lo = (theta - spread).floor().max(0.0) as u64;
    let mut hi = (theta + spread + 20.0).ceil() as u64;
    while lo > 0 && psi(lo, theta).map(f64::from).unwrap_or(0.0) > TAIL_MASS / 2.0 {
        lo = lo.saturating_sub(theta.sqrt() as u64 + 1);
    }
    while psi_complement(hi + 1, theta).unwrap_or(0.0) > TAIL_MASS / 2.0 {
        hi += theta.sqrt() as u64 + 1;
    }
    (lo, hi)
}

/// `(P(Y = 1), P(Y = 0))` for the one-bit sensor, each summed directly.
fn one_bit_pair(theta: f64, q: f64, sigma: f64) -> (f64, f64) {
    if sigma == 0.0 {
        let k = count_threshold(q);
        let p0 = psi(k, theta).map(f64::from).unwrap_or(f64::NAN);
        let p1 = psi_complement(k, theta).unwrap_or(f64::NAN);
        return (p1, p0);
    }
    let (lo, hi) = poisson_window(theta);
    let scale = SQRT_2 * sigma;
    let (mut ones, mut zeros) = (0.0, 0.0);
    for k in lo..=hi {
        let p = poisson_pmf(k, theta);
        if p == 0.0 {
            continue;
        }
        let z = (q - k as f64) / scale;
        ones += p * erfc_fn(z);
        zeros += p * erfc_fn(-z);
    }
    ((0.5 * ones).clamp(0.0, 1.0), (0.5 * zeros).clamp(0.0, 1.0))
}

/// `P(Poisson(theta) + N(0, sigma^2) >= q)`:
///
/// ```text
/// mu(theta) = 1/2 sum_k theta^k e^{-theta} / k! erfc((q - k) / (sqrt(2) sigma))
/// ```
///
/// For `sigma == 0` this is `1 - psi_{ceil(q)}(theta)`.
pub fn one_bit_mean(theta: f64, q: f64, sigma: f64) -> Result<f64> {
    check_theta(theta, false)?;
    check_threshold(q)?;
    check_read_noise(sigma)?;
    Ok(one_bit_pair(theta, q, sigma).0)
}

/// Bernoulli variance `mu (1 - mu)`.
pub fn one_bit_variance(mean: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&mean) {
        return Err(Error::domain(format!("one-bit mean must be in [0, 1], got {mean}")));
    }
    Ok(mean * (1.0 - mean))
}

/// Default finite-difference step `1e-4 max(1, theta)`.
pub fn default_eps(theta: f64) -> f64 {
    1e-4 * theta.max(1.0)
}

/// Exposure-referred one-bit SNR with a forward-difference mean slope:
///
/// ```text
/// sqrt(N) theta / sqrt(mu (1 - mu)) * (mu(theta + eps) - mu(theta)) / eps
/// ```
///
/// The difference is taken on whichever of `mu`, `1 - mu` is smaller so it
/// does not cancel near saturation.
pub fn one_bit_snr_exp(theta: f64, q: f64, sigma: f64, n_frames: u64, eps: Option<f64>) -> Result<f64> {
    check_theta(theta, true)?;
    check_threshold(q)?;
    check_read_noise(sigma)?;
    if n_frames == 0 {
        return Err(Error::domain("frame count N must be >= 1"));
    }
    let eps = eps.unwrap_or_else(|| default_eps(theta));
    if !(eps > 0.0) {
        return Err(Error::domain(format!("eps must be > 0, got {eps}")));
    }
    let (m0, c0) = one_bit_pair(theta, q, sigma);
    let (m1, c1) = one_bit_pair(theta + eps, q, sigma);
    let slope = if m0 <= c0 { (m1 - m0) / eps } else { (c0 - c1) / eps };
    let spread = m0.sqrt() * c0.sqrt();
    if spread < 1e-300 || slope <= 0.0 {
        return Ok(0.0);
    }
    Ok((n_frames as f64).sqrt() * theta / spread * slope)
}

/// SNR over a set of thresholds at one exposure and read-noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweep {
    pub q_values: Vec<f64>,
    pub snr_values: Vec<f64>,
    pub theta: f64,
    pub read_noise: f64,
    pub n_frames: u64,
    /// Finite-difference step; `None` means [`default_eps`].
    pub eps: Option<f64>,
}

pub fn threshold_sweep(
    theta: f64,
    q_values: &[f64],
    sigma: f64,
    n_frames: u64,
    eps: Option<f64>,
) -> Result<ThresholdSweep> {
    if q_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("threshold values must be increasing"));
    }
    let snr_values = q_values
        .iter()
        .map(|&q| one_bit_snr_exp(theta, q, sigma, n_frames, eps))
        .collect::<Result<Vec<_>>>()?;
    Ok(ThresholdSweep {
        q_values: q_values.to_vec(),
        snr_values,
        theta,
        read_noise: sigma,
        n_frames,
        eps,
    })
}

/// Lower bound `2 theta * theta^{q-1} e^{-theta} / (q-1)!` on the single-frame
/// noiseless one-bit SNR.
pub fn snr_lower_bound(theta: f64, q: u64) -> Result<f64> {
    check_theta(theta, true)?;
    if q == 0 {
        return Err(Error::domain("threshold must be >= 1"));
    }
    Ok(2.0 * theta * poisson_pmf(q - 1, theta))
}

/// Threshold maximizing [`snr_lower_bound`]: `floor(theta) + 1`.
pub fn optimal_threshold_bound(theta: f64) -> Result<u64> {
    check_theta(theta, true)?;
    Ok(theta.floor() as u64 + 1)
}

/// Integer threshold in `[1, q_max]` maximizing the exact noiseless one-bit
/// SNR. Ties resolve to the smaller threshold.
pub fn optimal_threshold_exact(theta: f64, q_max: u64) -> Result<u64> {
    check_theta(theta, true)?;
    if q_max == 0 {
        return Err(Error::domain("q_max must be >= 1"));
    }
    let mut best = (1u64, f64::NEG_INFINITY);
    for q in 1..=q_max {
        let s = crate::analytic_snr::snr_exp_one_bit(theta, q, 1)?;
        if s > best.1 {
            best = (q, s);
        }
    }
    Ok(best.0)
}

fn xlog2x(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * p.log2()
    }
}

/// Entropy in bits of the noiseless one-bit measurement with threshold `q`.
pub fn binary_entropy(theta: f64, q: u64) -> Result<f64> {
    check_theta(theta, true)?;
    if q == 0 {
        return Err(Error::domain("threshold must be >= 1"));
    }
    let p0 = psi(q, theta)?.get();
    let p1 = psi_complement(q, theta)?;
    Ok((-xlog2x(p1) - xlog2x(p0)).max(0.0))
}

/// Probability that read noise flips the one-bit decision:
///
/// ```text
/// BER = 1/2 erfc(q / (sigma sqrt 2)) psi_q + 1/2 erfc((1 - q) / (sigma sqrt 2)) (1 - psi_q)
/// ```
///
/// with `psi_q` evaluated at `ceil(q)` for non-integer thresholds.
pub fn bit_error_rate(theta: f64, q: f64, sigma: f64) -> Result<f64> {
    check_theta(theta, true)?;
    check_threshold(q)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!("read noise must be > 0, got {sigma}")));
    }
    let k = count_threshold(q);
    let p0 = psi(k, theta)?.get();
    let p1 = psi_complement(k, theta)?;
    let scale = sigma * SQRT_2;
    Ok(0.5 * erfc_fn(q / scale) * p0 + 0.5 * erfc_fn((1.0 - q) / scale) * p1)
}

fn ber_half(sigma: f64) -> f64 {
    0.5 * erfc_fn(1.0 / (sigma * 8f64.sqrt()))
}

/// Read noise implied by a bit error rate measured at `q = 1/2`, by
/// bisection on `1/2 erfc(1 / (sigma sqrt 8)) = ber`.
pub fn read_noise_from_ber(ber: f64) -> Result<f64> {
    if !(ber > 0.0 && ber < 0.5) {
        return Err(Error::domain(format!("BER must be in (0, 1/2), got {ber}")));
    }
    let (mut lo, mut hi) = (1e-3f64, 1.0f64);
    while ber_half(lo) >= ber {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::Convergence("BER below representable range".into()));
        }
    }
    while ber_half(hi) < ber {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Convergence("BER too close to 1/2".into()));
        }
    }
    for _ in 0..2000 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if ber_half(mid) < ber {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (e_lo, e_hi) = ((ber_half(lo) - ber).abs(), (ber_half(hi) - ber).abs());
    Ok(if e_lo <= e_hi { lo } else { hi })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_mean_is_bernoulli() {
        for &t in &[0.0, 0.2, 1.0, 4.0] {
            let m = one_bit_mean(t, 0.5, 0.0).unwrap();
            assert!((m - (1.0 - (-t as f64).exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_exposure_single_term() {
        let m = one_bit_mean(0.0, 0.5, 0.2).unwrap();
        let expected = 0.5 * erfc_fn(0.5 / (SQRT_2 * 0.2));
        assert!((m - expected).abs() < 1e-16);
    }

    #[test]
    fn variance_edges() {
        assert_eq!(one_bit_variance(0.0).unwrap(), 0.0);
        assert_eq!(one_bit_variance(1.0).unwrap(), 0.0);
        assert_eq!(one_bit_variance(0.5).unwrap(), 0.25);
        assert!(one_bit_variance(1.5).is_err());
        assert!(one_bit_variance(-0.1).is_err());
    }

    #[test]
    fn threshold_bound_examples() {
        assert_eq!(optimal_threshold_bound(2.5).unwrap(), 3);
        assert_eq!(optimal_threshold_bound(5.0).unwrap(), 6);
    }

    #[test]
    fn entropy_is_one_bit_at_half() {
        let h = binary_entropy(2f64.ln(), 1).unwrap();
        assert!((h - 1.0).abs() < 1e-14);
        assert!(binary_entropy(1e-12, 1).unwrap() < 1e-9);
        assert!(binary_entropy(1e4, 1).unwrap() < 1e-9);
    }

    #[test]
    fn ber_half_threshold_is_exposure_free() {
        let sigma = 0.3;
        let expected = 0.5 * erfc_fn(1.0 / (sigma * 8f64.sqrt()));
        for &t in &[0.1, 1.0, 10.0] {
            assert!((bit_error_rate(t, 0.5, sigma).unwrap() - expected).abs() < 1e-12);
        }
        assert!(bit_error_rate(1.0, 0.5, 1e-6).unwrap() < 1e-300);
        assert!(bit_error_rate(1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn read_noise_round_trip() {
        let ber = bit_error_rate(3.0, 0.5, 0.3).unwrap();
        assert!((read_noise_from_ber(ber).unwrap() - 0.3).abs() < 1e-8);
        assert!(read_noise_from_ber(1e-200).unwrap() < 0.03);
        assert!(read_noise_from_ber(0.0).is_err());
        assert!(read_noise_from_ber(0.5).is_err());
    }

    #[test]
    fn flat_sweep_without_read_noise() {
        let qs: Vec<f64> = (1..20).map(|i| i as f64 * 0.05).collect();
        let sweep = threshold_sweep(1.0, &qs, 0.0, 1, None).unwrap();
        let first = sweep.snr_values[0];
        assert!(sweep.snr_values.iter().all(|s| (s - first).abs() < 1e-6));
    }
}
