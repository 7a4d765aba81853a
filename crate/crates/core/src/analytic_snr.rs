//! Closed-form SNR for truncated-Poisson and one-bit sensors.
//!
//! Incomplete Gamma ratios of order `<= 0` are treated as empty sums
//! (`psi_0 = psi_{-1} = 0`), so the moment formulas hold as written for
//! `L = 1` and `L = 2`.

use serde::{Deserialize, Serialize};

use crate::curve::{CurveKind, CurvePoint, ExposureGrid, Provenance, SnrCurve};
use crate::error::{Error, Result};
use crate::sensor_model::SensorConfig;
use crate::special_fn::{poisson_pmf, psi, psi_complement};

/// Below this both the variance and the mean slope count as underflowed.
const UNDERFLOW: f64 = 1e-300;

/// Mean, variance and mean slope of one measurement at one exposure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub mean_derivative: f64,
}

fn psi_ext(order: i64, theta: f64) -> f64 {
    if order <= 0 {
        0.0
    } else {
        psi(order as u64, theta).map(f64::from).unwrap_or(f64::NAN)
    }
}

fn psi_c_ext(order: i64, theta: f64) -> f64 {
    if order <= 0 {
        1.0
    } else {
        psi_complement(order as u64, theta).unwrap_or(f64::NAN)
    }
}

fn psi_prime_ext(order: i64, theta: f64) -> f64 {
    if order <= 0 {
        0.0
    } else {
        -poisson_pmf(order as u64 - 1, theta)
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::domain(format!(
            "exposure must be finite and > 0, got {theta}"
        )));
    }
    Ok(())
}

fn check_frames(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("frame count N must be >= 1"));
    }
    Ok(())
}

/// `Var[L - Y]` summed directly over `k < L`. Used above the full well where
/// `E[Y^2] - E[Y]^2` cancels catastrophically.
fn deficit_variance(theta: f64, full_well: u64) -> f64 {
    let l = full_well as f64;
    let mut k = full_well - 1;
    let mut p = poisson_pmf(k, theta);
    let (mut m1, mut m2) = (0.0f64, 0.0f64);
    loop {
        let d = l - k as f64;
        m1 += d * p;
        m2 += d * d * p;
        if k == 0 || p == 0.0 {
            break;
        }
        let ratio = (k as f64 / theta) * ((d + 1.0) / d).powi(2);
        if ratio < 1.0 && d * d * p < 1e-18 * m2 {
            break;
        }
        p *= k as f64 / theta;
        k -= 1;
    }
    (m2 - m1 * m1).max(0.0)
}

/// Mean, variance and `d mean / d theta` of `min(Poisson(theta), L)`:
///
/// ```text
/// mean  = theta psi_{L-1} + L (1 - psi_L)
/// var   = theta^2 psi_{L-2} + theta psi_{L-1} + L^2 (1 - psi_L) - mean^2
/// slope = theta psi'_{L-1} + psi_{L-1} - L psi'_L
/// ```
pub fn truncated_poisson_moments(theta: f64, full_well: u64) -> Result<Moments> {
    check_theta(theta)?;
    if full_well == 0 {
        return Err(Error::domain("full well must be >= 1"));
    }
    let l = full_well as f64;
    let li = full_well as i64;
    let psi_l1 = psi_ext(li - 1, theta);
    let psi_l2 = psi_ext(li - 2, theta);
    let tail_l = psi_c_ext(li, theta);

    let mean = (theta * psi_l1 + l * tail_l).clamp(0.0, l);
    let variance = if theta <= l {
        let second = theta * theta * psi_l2 + theta * psi_l1 + l * l * tail_l;
        (second - mean * mean).max(0.0)
    } else {
        deficit_variance(theta, full_well)
    };
    let slope = theta * psi_prime_ext(li - 1, theta) + psi_l1 - l * psi_prime_ext(li, theta);
    Ok(Moments {
        mean,
        variance,
        mean_derivative: slope.max(0.0),
    })
}

/// Exposure-referred SNR `sqrt(N) theta / sqrt(Var[Y]) * d mean / d theta`
/// from precomputed moments. Returns 0 when both the variance and the slope
/// have underflowed (deep saturation).
pub fn snr_exp_from_moments(theta: f64, m: &Moments, n_frames: u64) -> f64 {
    if m.variance < UNDERFLOW && m.mean_derivative < UNDERFLOW {
        return 0.0;
    }
    if m.variance <= 0.0 {
        return f64::INFINITY;
    }
    (n_frames as f64).sqrt() * theta / m.variance.sqrt() * m.mean_derivative
}

/// Exposure-referred SNR of the truncated-Poisson sensor with `N` frames.
pub fn snr_exp_truncated_poisson(theta: f64, full_well: u64, n_frames: u64) -> Result<f64> {
    check_frames(n_frames)?;
    let m = truncated_poisson_moments(theta, full_well)?;
    Ok(snr_exp_from_moments(theta, &m, n_frames))
}

/// Conventional output-referred SNR with dark current and read noise; zero
/// at and beyond the full well.
pub fn snr_out(theta: f64, cfg: &SensorConfig) -> Result<f64> {
    check_theta(theta)?;
    if theta >= cfg.full_well as f64 {
        return Ok(0.0);
    }
    let noise = theta + cfg.dark_current + cfg.read_noise * cfg.read_noise;
    Ok(theta / noise.sqrt())
}

/// Exposure-referred SNR of a noiseless one-bit sensor with integer
/// threshold `q`.
pub fn snr_exp_one_bit(theta: f64, q: u64, n_frames: u64) -> Result<f64> {
    check_theta(theta)?;
    check_frames(n_frames)?;
    if q == 0 {
        return Err(Error::domain("one-bit threshold q must be >= 1"));
    }
    let p0 = psi(q, theta)?.get();
    let p1 = psi_complement(q, theta)?;
    let slope = poisson_pmf(q - 1, theta);
    let spread = p0.sqrt() * p1.sqrt();
    if spread < UNDERFLOW || slope == 0.0 {
        return Ok(0.0);
    }
    Ok((n_frames as f64).sqrt() * theta / spread * slope)
}

/// Output-referred SNR of a noiseless one-bit sensor,
/// `sqrt(N) sqrt((1 - psi_q) / psi_q)`. Grows without bound with exposure;
/// returns `+inf` once `psi_q` underflows.
pub fn snr_out_one_bit(theta: f64, q: u64, n_frames: u64) -> Result<f64> {
    check_theta(theta)?;
    check_frames(n_frames)?;
    if q == 0 {
        return Err(Error::domain("one-bit threshold q must be >= 1"));
    }
    let p0 = psi(q, theta)?.get();
    if p0 == 0.0 {
        return Ok(f64::INFINITY);
    }
    let p1 = psi_complement(q, theta)?;
    Ok((n_frames as f64).sqrt() * (p1 / p0).sqrt())
}

/// Both sides of the identity
/// `SNR_exp = SNR_out * (theta / mean) * d mean / d theta`, single frame,
/// where `SNR_out = mean / sqrt(Var[Y])`.
pub fn snr_relation_check(theta: f64, full_well: u64) -> Result<(f64, f64)> {
    let m = truncated_poisson_moments(theta, full_well)?;
    let exp = snr_exp_from_moments(theta, &m, 1);
    if m.variance < UNDERFLOW && m.mean_derivative < UNDERFLOW {
        return Ok((exp, 0.0));
    }
    let out = m.mean / m.variance.sqrt();
    Ok((exp, out * (theta / m.mean) * m.mean_derivative))
}

/// Large-full-well limit of `20 log10 SNR_exp(10^phi)`: `10 phi` up to the
/// full well, `-inf` beyond.
pub fn snr_exp_limiting_db(phi: f64, full_well: u64) -> Result<f64> {
    if full_well < 100 {
        return Err(Error::domain(format!(
            "the limiting form needs L >= 100, got {full_well}"
        )));
    }
    if !phi.is_finite() {
        return Err(Error::domain("phi must be finite"));
    }
    if phi <= (full_well as f64).log10() {
        Ok(10.0 * phi)
    } else {
        Ok(f64::NEG_INFINITY)
    }
}

fn analytic_curve(
    grid: &ExposureGrid,
    kind: CurveKind,
    n_frames: u64,
    config: serde_json::Value,
    f: impl Fn(f64) -> Result<f64>,
) -> Result<SnrCurve> {
    let points = grid
        .thetas()
        .iter()
        .map(|&theta| {
            Ok(CurvePoint {
                theta,
                snr: Some(f(theta)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SnrCurve {
        points,
        kind,
        n_frames,
        provenance: Provenance::Analytic,
        config,
    })
}

/// Truncated-Poisson exposure-referred curve over a grid.
pub fn truncated_poisson_curve(grid: &ExposureGrid, full_well: u64, n_frames: u64) -> Result<SnrCurve> {
    analytic_curve(
        grid,
        CurveKind::ExposureReferred,
        n_frames,
        serde_json::json!({ "model": "truncated-poisson", "full_well": full_well }),
        |t| snr_exp_truncated_poisson(t, full_well, n_frames),
    )
}

/// Output-referred curve over a grid, scaled by `sqrt(N)` for an `N`-frame
/// average.
pub fn output_referred_curve(grid: &ExposureGrid, cfg: &SensorConfig, n_frames: u64) -> Result<SnrCurve> {
    check_frames(n_frames)?;
    let scale = (n_frames as f64).sqrt();
    analytic_curve(
        grid,
        CurveKind::OutputReferred,
        n_frames,
        serde_json::to_value(cfg).unwrap_or_default(),
        |t| Ok(scale * snr_out(t, cfg)?),
    )
}

/// Noiseless one-bit curve over a grid, either referral.
pub fn one_bit_curve(grid: &ExposureGrid, q: u64, n_frames: u64, kind: CurveKind) -> Result<SnrCurve> {
    analytic_curve(
        grid,
        kind,
        n_frames,
        serde_json::json!({ "model": "one-bit", "q": q }),
        |t| match kind {
            CurveKind::ExposureReferred => snr_exp_one_bit(t, q, n_frames),
            CurveKind::OutputReferred => snr_out_one_bit(t, q, n_frames),
        },
    )
}
