//! Forward models mapping an exposure `theta` (mean photo-electrons) to
//! digital numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Forward-model parameters. Conversion gain is fixed at 1 DN per electron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    /// Full-well capacity `L` in electrons.
    pub full_well: u64,
    /// Read-noise standard deviation in electrons.
    pub read_noise: f64,
    /// Dark electrons per exposure.
    pub dark_current: f64,
    pub adc_bits: u32,
    /// One-bit threshold `q` in electrons.
    pub threshold: f64,
}

impl SensorConfig {
    pub fn new(
        full_well: u64,
        read_noise: f64,
        dark_current: f64,
        adc_bits: u32,
        threshold: f64,
    ) -> Result<Self> {
        let cfg = SensorConfig {
            full_well,
            read_noise,
            dark_current,
            adc_bits,
            threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Noise-free sensor whose ADC exactly spans the full well.
    pub fn ideal(full_well: u64) -> Result<Self> {
        let bits = 64 - full_well.leading_zeros();
        SensorConfig::new(full_well, 0.0, 0.0, bits.max(1), 0.5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.full_well == 0 {
            return Err(Error::Config("full_well must be >= 1".into()));
        }
        if self.adc_bits == 0 || self.adc_bits > 63 {
            return Err(Error::Config(format!(
                "adc_bits must be in 1..=63, got {}",
                self.adc_bits
            )));
        }
        if self.full_well > self.adc_max() {
            return Err(Error::Config(format!(
                "full_well {} exceeds the ADC range 2^{} - 1 = {}",
                self.full_well,
                self.adc_bits,
                self.adc_max()
            )));
        }
        if !(self.read_noise >= 0.0) || !self.read_noise.is_finite() {
            return Err(Error::Config(format!(
                "read_noise must be >= 0, got {}",
                self.read_noise
            )));
        }
        if !(self.dark_current >= 0.0) || !self.dark_current.is_finite() {
            return Err(Error::Config(format!(
                "dark_current must be >= 0, got {}",
                self.dark_current
            )));
        }
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return Err(Error::Config(format!(
                "threshold must be > 0, got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    /// Largest digital number, `2^adc_bits - 1`.
    pub fn adc_max(&self) -> u64 {
        (1u64 << self.adc_bits) - 1
    }
}

/// One digital number produced by a sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Sample(pub u64);

impl Sample {
    pub fn value(self) -> u64 {
        self.0
    }
}

/// Anything that turns an exposure into a (random) measurement.
pub trait ForwardModel: Sync {
    fn draw(&self, theta: f64, rng: &mut SeededRng) -> f64;

    fn label(&self) -> String;
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::domain(format!(
            "exposure must be finite and >= 0, got {theta}"
        )));
    }
    Ok(())
}

/// `min(Poisson(theta), L)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedPoisson {
    pub full_well: u64,
}

impl TruncatedPoisson {
    pub fn new(full_well: u64) -> Result<Self> {
        if full_well == 0 {
            return Err(Error::domain("full well must be >= 1"));
        }
        Ok(TruncatedPoisson { full_well })
    }

    fn draw_count(&self, theta: f64, rng: &mut SeededRng) -> u64 {
        rng.poisson(theta).min(self.full_well)
    }
}

impl ForwardModel for TruncatedPoisson {
    fn draw(&self, theta: f64, rng: &mut SeededRng) -> f64 {
        self.draw_count(theta, rng) as f64
    }

    fn label(&self) -> String {
        format!("truncated-poisson(L={})", self.full_well)
    }
}

/// Untruncated `Poisson(theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Poisson;

impl ForwardModel for Poisson {
    fn draw(&self, theta: f64, rng: &mut SeededRng) -> f64 {
        rng.poisson(theta) as f64
    }

    fn label(&self) -> String {
        "poisson".into()
    }
}

/// Returns the same value for every exposure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl ForwardModel for Constant {
    fn draw(&self, _theta: f64, _rng: &mut SeededRng) -> f64 {
        self.0
    }

    fn label(&self) -> String {
        format!("constant({})", self.0)
    }
}

/// Thresholded photon count: `1{Poisson(theta + dark) + N(0, read^2) >= q}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneBit(pub SensorConfig);

impl OneBit {
    fn draw_bit(&self, theta: f64, rng: &mut SeededRng) -> u64 {
        let cfg = &self.0;
        let mut x = rng.poisson(theta + cfg.dark_current) as f64;
        if cfg.read_noise > 0.0 {
            x += cfg.read_noise * rng.standard_normal();
        }
        u64::from(x >= cfg.threshold)
    }
}

impl ForwardModel for OneBit {
    fn draw(&self, theta: f64, rng: &mut SeededRng) -> f64 {
        self.draw_bit(theta, rng) as f64
    }

    fn label(&self) -> String {
        format!(
            "one-bit(q={}, read={}, dark={})",
            self.0.threshold, self.0.read_noise, self.0.dark_current
        )
    }
}

/// `clip(round(Poisson(theta + dark) + N(0, read^2)))` into `[0, L]`.
///
/// Rounding is half away from zero. Negative values clip to 0; the ceiling is
/// the full well, which never exceeds the ADC maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullPipeline(pub SensorConfig);

impl FullPipeline {
    fn draw_dn(&self, theta: f64, rng: &mut SeededRng) -> u64 {
        let cfg = &self.0;
        let electrons = rng.poisson(theta + cfg.dark_current);
        if cfg.read_noise == 0.0 {
            return electrons.min(cfg.full_well);
        }
        let v = (electrons as f64 + cfg.read_noise * rng.standard_normal()).round();
        v.clamp(0.0, cfg.full_well as f64) as u64
    }
}

impl ForwardModel for FullPipeline {
    fn draw(&self, theta: f64, rng: &mut SeededRng) -> f64 {
        self.draw_dn(theta, rng) as f64
    }

    fn label(&self) -> String {
        format!(
            "pipeline(L={}, bits={}, read={}, dark={})",
            self.0.full_well, self.0.adc_bits, self.0.read_noise, self.0.dark_current
        )
    }
}

/// `n` draws of `min(Poisson(theta), L)`.
pub fn sample_truncated_poisson(
    theta: f64,
    full_well: u64,
    rng: &mut SeededRng,
    n: usize,
) -> Result<Vec<Sample>> {
    check_theta(theta)?;
    let model = TruncatedPoisson::new(full_well)?;
    Ok((0..n).map(|_| Sample(model.draw_count(theta, rng))).collect())
}

/// `n` one-bit samples under `cfg` (threshold, read noise, dark current).
pub fn sample_one_bit(
    theta: f64,
    cfg: &SensorConfig,
    rng: &mut SeededRng,
    n: usize,
) -> Result<Vec<Sample>> {
    check_theta(theta)?;
    cfg.validate()?;
    let model = OneBit(*cfg);
    Ok((0..n).map(|_| Sample(model.draw_bit(theta, rng))).collect())
}

/// `n` samples of the full sensor pipeline.
pub fn sample_full_pipeline(
    theta: f64,
    cfg: &SensorConfig,
    rng: &mut SeededRng,
    n: usize,
) -> Result<Vec<Sample>> {
    check_theta(theta)?;
    cfg.validate()?;
    let model = FullPipeline(*cfg);
    Ok((0..n).map(|_| Sample(model.draw_dn(theta, rng))).collect())
}
