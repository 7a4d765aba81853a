//! HDR reconstruction from exposure brackets: per-bracket mean-invariant
//! estimates, SNR-squared weights, the fused estimate and its SNR curve, and
//! a synthetic image pipeline with log-domain PSNR.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic_snr::snr_exp_truncated_poisson;
use crate::curve::{CurveKind, CurvePoint, ExposureGrid, Provenance, SnrCurve};
use crate::error::{Error, Result};
use crate::estimator::{invert_mean, MeanFunction, TruncatedPoissonMean, DEFAULT_TOL};
use crate::rng::SeededRng;

/// Brackets whose weight falls below this are left out of the fused estimate
/// (their inversion is irrelevant and usually saturated).
pub const NEGLIGIBLE_WEIGHT: f64 = 1e-9;

/// Fused images whose RMS log10 error is below this are reported as exact.
pub const EXACT_RMS_LOG_ERROR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExposureReferred,
    OutputReferred,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::ExposureReferred => "exposure_referred",
            Scheme::OutputReferred => "output_referred",
        }
    }
}

/// Bracket configuration: integration times sharing one full well and frame
/// count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Brackets {
    pub taus: Vec<f64>,
    pub full_well: u64,
    pub n_frames: u64,
}

impl Brackets {
    pub fn new(taus: Vec<f64>, full_well: u64, n_frames: u64) -> Result<Self> {
        let b = Brackets {
            taus,
            full_well,
            n_frames,
        };
        b.validate()?;
        Ok(b)
    }

    /// Four brackets `1, 0.1, 0.01, 0.001` with `L = 7`, `N = 100`.
    pub fn reference() -> Self {
        Brackets {
            taus: vec![1.0, 0.1, 0.01, 0.001],
            full_well: 7,
            n_frames: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() {
            return Err(Error::domain("at least one bracket is required"));
        }
        if self.taus.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::domain("integration times must be finite and > 0"));
        }
        let inc = self.taus.windows(2).all(|w| w[0] < w[1]);
        let dec = self.taus.windows(2).all(|w| w[0] > w[1]);
        if !(inc || dec) {
            return Err(Error::domain("integration times must be strictly monotone"));
        }
        if self.full_well == 0 {
            return Err(Error::domain("full well must be >= 1"));
        }
        if self.n_frames == 0 {
            return Err(Error::domain("frame count N must be >= 1"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    fn mean_fn(&self) -> TruncatedPoissonMean {
        TruncatedPoissonMean {
            full_well: self.full_well,
        }
    }
}

/// Observed frame averages `Y_bar^m`, one per bracket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketSet {
    pub brackets: Brackets,
    pub means: Vec<f64>,
}

impl BracketSet {
    pub fn new(brackets: Brackets, means: Vec<f64>) -> Result<Self> {
        brackets.validate()?;
        if means.len() != brackets.len() {
            return Err(Error::domain(format!(
                "{} means for {} brackets",
                means.len(),
                brackets.len()
            )));
        }
        Ok(BracketSet { brackets, means })
    }

    /// Simulates `N` truncated-Poisson frames per bracket at exposure
    /// `tau_m * theta`.
    pub fn simulate(brackets: &Brackets, theta: f64, rng: &mut SeededRng) -> Result<Self> {
        brackets.validate()?;
        check_theta(theta)?;
        let l = brackets.full_well;
        let means = brackets
            .taus
            .iter()
            .map(|&tau| {
                let sum: u64 = (0..brackets.n_frames).map(|_| rng.poisson(tau * theta).min(l)).sum();
                sum as f64 / brackets.n_frames as f64
            })
            .collect();
        Ok(BracketSet {
            brackets: brackets.clone(),
            means,
        })
    }

    /// Noise-free surrogate: every average equals its expectation.
    pub fn noiseless(brackets: &Brackets, theta: f64) -> Result<Self> {
        brackets.validate()?;
        check_theta(theta)?;
        let mu = brackets.mean_fn();
        let means = brackets.taus.iter().map(|&tau| mu.eval(tau * theta)).collect();
        Ok(BracketSet {
            brackets: brackets.clone(),
            means,
        })
    }

    /// Per-bracket exposure estimate `mu^{-1}(Y_bar^m) / tau_m`. A zero
    /// average maps to zero.
    pub fn bracket_estimate(&self, m: usize) -> Result<f64> {
        let y = self.means[m];
        if y == 0.0 {
            return Ok(0.0);
        }
        let theta = invert_mean(&self.brackets.mean_fn(), y, DEFAULT_TOL)?;
        Ok(theta / self.brackets.taus[m])
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::domain(format!("exposure must be finite and > 0, got {theta}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub w: Vec<f64>,
    pub scheme: Scheme,
}

fn bracket_snr_sq(theta: f64, brackets: &Brackets, scheme: Scheme) -> Result<Vec<f64>> {
    let l = brackets.full_well;
    brackets
        .taus
        .iter()
        .map(|&tau| {
            let x = tau * theta;
            Ok(match scheme {
                Scheme::ExposureReferred => snr_exp_truncated_poisson(x, l, brackets.n_frames)?.powi(2),
                Scheme::OutputReferred => {
                    if x < l as f64 {
                        x
                    } else {
                        0.0
                    }
                }
            })
        })
        .collect()
}

/// Weights proportional to each bracket's squared SNR at `tau_m * theta`.
pub fn fusion_weights(theta: f64, brackets: &Brackets, scheme: Scheme) -> Result<FusionWeights> {
    brackets.validate()?;
    check_theta(theta)?;
    let s = bracket_snr_sq(theta, brackets, scheme)?;
    let total: f64 = s.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllSaturated { theta });
    }
    Ok(FusionWeights {
        w: s.iter().map(|v| v / total).collect(),
        scheme,
    })
}

/// `theta_hat = sum_m w_m mu^{-1}(Y_bar^m) / tau_m` over brackets with
/// non-negligible weight.
pub fn fuse_estimate(set: &BracketSet, weights: &FusionWeights) -> Result<f64> {
    if weights.w.len() != set.means.len() {
        return Err(Error::domain(format!(
            "{} weights for {} brackets",
            weights.w.len(),
            set.means.len()
        )));
    }
    let mut acc = 0.0;
    let mut used = 0.0;
    for (m, &w) in weights.w.iter().enumerate() {
        if w <= NEGLIGIBLE_WEIGHT {
            continue;
        }
        let est = set.bracket_estimate(m).map_err(|e| Error::BracketSaturated {
            index: m,
            source: Box::new(e),
        })?;
        acc += w * est;
        used += w;
    }
    if used == 0.0 {
        return Err(Error::domain("no bracket carries weight"));
    }
    Ok(acc / used)
}

/// `theta / sqrt(sum_m (w_m / tau_m)^2 sigma_m^2)` where `sigma_m^2` is the
/// delta-method variance of bracket `m`'s exposure estimate at `tau_m theta`.
pub fn snr_hdr(theta: f64, brackets: &Brackets, scheme: Scheme) -> Result<Option<f64>> {
    let weights = match fusion_weights(theta, brackets, scheme) {
        Ok(w) => w,
        Err(Error::AllSaturated { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let snr_sq = bracket_snr_sq(theta, brackets, Scheme::ExposureReferred)?;
    // (w/tau)^2 sigma^2 = w^2 theta^2 / SNR_m^2, since sigma^2 = (tau theta / SNR_m)^2.
    let mut inv = 0.0;
    for (w, s2) in weights.w.iter().zip(&snr_sq) {
        if *w == 0.0 {
            continue;
        }
        if *s2 == 0.0 {
            return Ok(Some(0.0));
        }
        inv += w * w / s2;
    }
    Ok(Some(1.0 / inv.sqrt()))
}

/// `snr_hdr` over a grid; points where every bracket saturates are missing.
pub fn snr_hdr_curve(brackets: &Brackets, scheme: Scheme, grid: &ExposureGrid) -> Result<SnrCurve> {
    brackets.validate()?;
    let points = grid
        .thetas()
        .iter()
        .map(|&theta| Ok(CurvePoint {
            theta,
            snr: snr_hdr(theta, brackets, scheme)?,
        }))
        .collect::<Result<Vec<_>>>()?;
    Ok(SnrCurve {
        points,
        kind: CurveKind::ExposureReferred,
        n_frames: brackets.n_frames,
        provenance: Provenance::Analytic,
        config: serde_json::json!({
            "taus": brackets.taus,
            "full_well": brackets.full_well,
            "scheme": scheme.as_str(),
        }),
    })
}

/// Row-major single-channel floating-point image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("image dimensions must be >= 1"));
        }
        if data.len() != width * height {
            return Err(Error::domain(format!(
                "{} pixels for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Image { width, height, data })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Horizontal ramp, log-uniform from `lo` at the left edge to `hi` at
    /// the right edge.
    pub fn log_ramp(width: usize, height: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0) || !(hi > lo) {
            return Err(Error::domain(format!("ramp needs 0 < lo < hi, got [{lo}, {hi}]")));
        }
        if width < 2 {
            return Err(Error::domain("ramp width must be >= 2"));
        }
        let row: Vec<f64> = (0..width)
            .map(|x| {
                let t = x as f64 / (width - 1) as f64;
                10f64.powf(lo.log10() + t * (hi.log10() - lo.log10()))
            })
            .collect();
        let data = (0..height).flat_map(|_| row.iter().copied()).collect();
        Image::new(width, height, data)
    }

    /// The 256x256 ramp spanning `1e-1 .. 1e4`.
    pub fn reference_ramp() -> Self {
        Image::log_ramp(256, 256, 1e-1, 1e4).expect("valid ramp")
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Image::new(width, height, vec![value; width * height])
    }
}

/// Fused image with quality and failure report.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedImage {
    pub estimate: Image,
    /// Log-domain PSNR in dB; `+inf` for an exact reconstruction.
    pub psnr: f64,
    /// Pixels whose fusion failed and were filled from a single bracket.
    pub failures: usize,
    pub scheme: Scheme,
}

/// Simulates every pixel independently (pixel `i` draws from stream
/// `rng.stream() + i`), fuses with the chosen scheme using the true radiance
/// for the weights, and scores against the scene.
pub fn fuse_image(scene: &Image, brackets: &Brackets, scheme: Scheme, rng: &SeededRng) -> Result<FusedImage> {
    let base = rng.stream();
    fuse_with(scene, brackets, scheme, |i, theta| {
        let mut r = rng.fork(base.wrapping_add(i as u64));
        BracketSet::simulate(brackets, theta, &mut r)
    })
}

/// `fuse_image` with every frame average replaced by its expectation.
pub fn fuse_image_noiseless(scene: &Image, brackets: &Brackets, scheme: Scheme) -> Result<FusedImage> {
    fuse_with(scene, brackets, scheme, |_, theta| BracketSet::noiseless(brackets, theta))
}

fn fuse_with(
    scene: &Image,
    brackets: &Brackets,
    scheme: Scheme,
    observe: impl Fn(usize, f64) -> Result<BracketSet> + Sync,
) -> Result<FusedImage> {
    brackets.validate()?;
    if let Some(bad) = scene.data.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::domain(format!("scene radiance must be finite and > 0, got {bad}")));
    }
    let pixels: Vec<(f64, bool)> = scene
        .data
        .par_iter()
        .enumerate()
        .map(|(i, &theta)| {
            let set = observe(i, theta)?;
            let fused = fusion_weights(theta, brackets, scheme).and_then(|w| fuse_estimate(&set, &w));
            match fused {
                Ok(v) => Ok((v, false)),
                Err(e) if e.is_numeric() => Ok((fallback(&set), true)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let failures = pixels.iter().filter(|p| p.1).count();
    let estimate = Image::new(scene.width, scene.height, pixels.into_iter().map(|p| p.0).collect())?;
    let psnr = log_psnr(scene, &estimate, brackets)?;
    Ok(FusedImage {
        estimate,
        psnr,
        failures,
        scheme,
    })
}

/// Estimate from the longest unsaturated bracket; if all saturate, the
/// shortest bracket's ceiling `L / tau_min`.
fn fallback(set: &BracketSet) -> f64 {
    let b = &set.brackets;
    let mut order: Vec<usize> = (0..b.len()).collect();
    order.sort_by(|&i, &j| b.taus[j].total_cmp(&b.taus[i]));
    for &m in &order {
        if let Ok(v) = set.bracket_estimate(m) {
            return v;
        }
    }
    let tau_min = b.taus.iter().copied().fold(f64::INFINITY, f64::min);
    b.full_well as f64 / tau_min
}

/// Radiance floor used by the log-domain PSNR: half a photon over all
/// frames of the longest bracket.
pub fn psnr_floor(brackets: &Brackets) -> f64 {
    let tau_max = brackets.taus.iter().copied().fold(0.0, f64::max);
    1.0 / (2.0 * brackets.n_frames as f64 * tau_max)
}

/// `10 log10(peak^2 / MSE)` on `log10(x / floor)`, with estimates clamped at
/// the floor and `peak = log10(max scene / floor)`.
pub fn log_psnr(scene: &Image, estimate: &Image, brackets: &Brackets) -> Result<f64> {
    if scene.data.len() != estimate.data.len() {
        return Err(Error::domain("scene and estimate differ in size"));
    }
    let floor = psnr_floor(brackets);
    let to_log = |x: f64| (x.max(floor) / floor).log10();
    let peak = to_log(scene.data.iter().copied().fold(0.0, f64::max));
    let mse = scene
        .data
        .iter()
        .zip(&estimate.data)
        .map(|(s, e)| (to_log(*s) - to_log(*e)).powi(2))
        .sum::<f64>()
        / scene.data.len() as f64;
    if mse.sqrt() < EXACT_RMS_LOG_ERROR {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_weights_closed_form() {
        let b = Brackets::new(vec![1.0, 0.1], 7, 100).unwrap();
        let w = fusion_weights(3.0, &b, Scheme::OutputReferred).unwrap();
        assert!((w.w[0] - 10.0 / 11.0).abs() < 1e-12);
        assert!((w.w[1] - 1.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn single_bracket_weight_is_one() {
        let b = Brackets::new(vec![0.5], 7, 10).unwrap();
        for s in [Scheme::ExposureReferred, Scheme::OutputReferred] {
            assert_eq!(fusion_weights(2.0, &b, s).unwrap().w, vec![1.0]);
        }
    }

    #[test]
    fn all_saturated_output_scheme() {
        let b = Brackets::reference();
        assert!(matches!(
            fusion_weights(1e5, &b, Scheme::OutputReferred),
            Err(Error::AllSaturated { .. })
        ));
        assert_eq!(snr_hdr(1e5, &b, Scheme::OutputReferred).unwrap(), None);
    }

    #[test]
    fn exposure_scheme_is_root_sum_square() {
        let b = Brackets::reference();
        let theta = 40.0;
        let s: f64 = b
            .taus
            .iter()
            .map(|t| snr_exp_truncated_poisson(t * theta, 7, 100).unwrap().powi(2))
            .sum();
        let v = snr_hdr(theta, &b, Scheme::ExposureReferred).unwrap().unwrap();
        assert!((v - s.sqrt()).abs() < 1e-12 * v);
    }

    #[test]
    fn noiseless_fusion_is_exact() {
        let b = Brackets::reference();
        for theta in [0.3, 3.0, 50.0, 900.0] {
            let set = BracketSet::noiseless(&b, theta).unwrap();
            let w = fusion_weights(theta, &b, Scheme::ExposureReferred).unwrap();
            let est = fuse_estimate(&set, &w).unwrap();
            assert!((est - theta).abs() < 1e-6 * theta, "{theta}: {est}");
        }
    }

    #[test]
    fn rejects_bad_brackets() {
        assert!(Brackets::new(vec![], 7, 1).is_err());
        assert!(Brackets::new(vec![1.0, 0.1, 0.5], 7, 1).is_err());
        assert!(Brackets::new(vec![1.0], 0, 1).is_err());
        assert!(Brackets::new(vec![1.0], 7, 0).is_err());
    }

    #[test]
    fn saturated_contributor_reports_index() {
        let b = Brackets::new(vec![1.0, 0.1], 7, 10).unwrap();
        let set = BracketSet::new(b.clone(), vec![7.0, 3.0]).unwrap();
        let w = FusionWeights {
            w: vec![0.5, 0.5],
            scheme: Scheme::OutputReferred,
        };
        match fuse_estimate(&set, &w) {
            Err(Error::BracketSaturated { index, .. }) => assert_eq!(index, 0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
