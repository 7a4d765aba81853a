//! Exposure grids and SNR curve records shared by the analytic, Monte Carlo
//! and HDR modules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing set of positive exposures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureGrid {
    thetas: Vec<f64>,
}

impl ExposureGrid {
    pub fn new(thetas: Vec<f64>) -> Result<Self> {
        if thetas.len() < 2 {
            return Err(Error::domain("an exposure grid needs at least 2 points"));
        }
        if thetas.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::domain("grid exposures must be finite and > 0"));
        }
        if thetas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("grid exposures must be strictly increasing"));
        }
        Ok(ExposureGrid { thetas })
    }

    /// `count` points log-spaced between `theta_min` and `theta_max`,
    /// endpoints included (MATLAB `logspace` convention).
    pub fn log_spaced(theta_min: f64, theta_max: f64, count: usize) -> Result<Self> {
        if !(theta_min > 0.0) || !(theta_max > theta_min) {
            return Err(Error::domain(format!(
                "log grid needs 0 < min < max, got [{theta_min}, {theta_max}]"
            )));
        }
        if count < 2 {
            return Err(Error::domain("an exposure grid needs at least 2 points"));
        }
        let (lo, hi) = (theta_min.log10(), theta_max.log10());
        let step = (hi - lo) / (count - 1) as f64;
        let thetas = (0..count)
            .map(|i| {
                if i == count - 1 {
                    theta_max
                } else if i == 0 {
                    theta_min
                } else {
                    10f64.powf(lo + step * i as f64)
                }
            })
            .collect();
        ExposureGrid::new(thetas)
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    ExposureReferred,
    OutputReferred,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::ExposureReferred => "exposure_referred",
            CurveKind::OutputReferred => "output_referred",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    MonteCarlo,
}

/// One point of an SNR curve. `snr` is `None` where the value is missing
/// (e.g. zero sample variance in a Monte Carlo run).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub theta: f64,
    pub snr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrCurve {
    pub points: Vec<CurvePoint>,
    pub kind: CurveKind,
    pub n_frames: u64,
    pub provenance: Provenance,
    /// Snapshot of whatever configuration produced the curve.
    pub config: serde_json::Value,
}

impl SnrCurve {
    pub fn thetas(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.theta)
    }

    /// SNR values with missing points as NaN.
    pub fn values(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| p.snr.unwrap_or(f64::NAN))
            .collect()
    }

    /// Value at the grid point nearest `theta` in log space.
    pub fn nearest(&self, theta: f64) -> Option<CurvePoint> {
        self.points
            .iter()
            .min_by(|a, b| {
                let da = (a.theta.ln() - theta.ln()).abs();
                let db = (b.theta.ln() - theta.ln()).abs();
                da.total_cmp(&db)
            })
            .copied()
    }
}

/// `20 log10(snr)`.
pub fn to_db(snr: f64) -> f64 {
    20.0 * snr.log10()
}
