//! Exposure-referred and output-referred SNR for digital image sensors.
//!
//! The crate covers closed-form SNR curves for truncated-Poisson and one-bit
//! sensors, a seeded Monte Carlo engine for arbitrary forward models, optimal
//! HDR bracket fusion, and one-bit threshold design metrics.

pub mod analytic_snr;
pub mod cli;
pub mod curve;
pub mod error;
pub mod estimator;
pub mod hdr_fusion;
pub mod monte_carlo;
pub mod pfm;
pub mod qis_metrics;
pub mod rng;
pub mod sensor_model;
pub mod special_fn;

pub use curve::{CurveKind, CurvePoint, ExposureGrid, Provenance, SnrCurve};
pub use error::{Error, Result};
pub use rng::SeededRng;
pub use sensor_model::{Sample, SensorConfig};
