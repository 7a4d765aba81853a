//! Python bindings for snrlab.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use snrlab::hdr_fusion::{self, Scheme};
use snrlab::monte_carlo::{self, DifferenceScheme, MomentOptions, StreamPolicy};
use snrlab::sensor_model::{ForwardModel, FullPipeline, OneBit, Poisson, TruncatedPoisson};
use snrlab::{analytic_snr, estimator, qis_metrics, special_fn, Error, ExposureGrid, Sample, SeededRng};

fn err(e: Error) -> PyErr {
    if e.is_numeric() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn grid(thetas: Vec<f64>) -> PyResult<ExposureGrid> {
    ExposureGrid::new(thetas).map_err(err)
}

fn scheme(name: &str) -> PyResult<Scheme> {
    match name {
        "exposure" | "exposure_referred" => Ok(Scheme::ExposureReferred),
        "output" | "output_referred" => Ok(Scheme::OutputReferred),
        other => Err(PyValueError::new_err(format!("unknown scheme {other:?}"))),
    }
}

#[pyclass(name = "SensorConfig", frozen, from_py_object)]
#[derive(Clone)]
struct PySensorConfig(snrlab::SensorConfig);

#[pymethods]
impl PySensorConfig {
    #[new]
    #[pyo3(signature = (full_well, read_noise=0.0, dark_current=0.0, adc_bits=None, threshold=0.5))]
    fn new(full_well: u64, read_noise: f64, dark_current: f64, adc_bits: Option<u32>, threshold: f64) -> PyResult<Self> {
        let bits = match adc_bits {
            Some(b) => b,
            None => snrlab::SensorConfig::ideal(full_well).map_err(err)?.adc_bits,
        };
        snrlab::SensorConfig::new(full_well, read_noise, dark_current, bits, threshold)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn full_well(&self) -> u64 {
        self.0.full_well
    }
    #[getter]
    fn read_noise(&self) -> f64 {
        self.0.read_noise
    }
    #[getter]
    fn dark_current(&self) -> f64 {
        self.0.dark_current
    }
    #[getter]
    fn adc_bits(&self) -> u32 {
        self.0.adc_bits
    }
    #[getter]
    fn threshold(&self) -> f64 {
        self.0.threshold
    }

    fn __repr__(&self) -> String {
        let c = &self.0;
        format!(
            "SensorConfig(full_well={}, read_noise={}, dark_current={}, adc_bits={}, threshold={})",
            c.full_well, c.read_noise, c.dark_current, c.adc_bits, c.threshold
        )
    }
}

/// A sampled SNR curve; undefined points are `None`.
#[pyclass(name = "SnrCurve", frozen)]
struct PySnrCurve(snrlab::SnrCurve);

#[pymethods]
impl PySnrCurve {
    #[getter]
    fn thetas(&self) -> Vec<f64> {
        self.0.thetas().collect()
    }
    #[getter]
    fn snr(&self) -> Vec<Option<f64>> {
        self.0.points.iter().map(|p| p.snr).collect()
    }
    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind.as_str()
    }
    #[getter]
    fn n_frames(&self) -> u64 {
        self.0.n_frames
    }
    fn __len__(&self) -> usize {
        self.0.points.len()
    }
    fn to_csv(&self) -> String {
        snrlab::cli::curve_to_csv(&self.0)
    }
}

#[pyclass(name = "Brackets", frozen, from_py_object)]
#[derive(Clone)]
struct PyBrackets(hdr_fusion::Brackets);

#[pymethods]
impl PyBrackets {
    #[new]
    #[pyo3(signature = (taus, full_well=7, n_frames=100))]
    fn new(taus: Vec<f64>, full_well: u64, n_frames: u64) -> PyResult<Self> {
        hdr_fusion::Brackets::new(taus, full_well, n_frames).map(Self).map_err(err)
    }
    #[staticmethod]
    fn reference() -> Self {
        Self(hdr_fusion::Brackets::reference())
    }
    #[getter]
    fn taus(&self) -> Vec<f64> {
        self.0.taus.clone()
    }
    #[getter]
    fn full_well(&self) -> u64 {
        self.0.full_well
    }
    #[getter]
    fn n_frames(&self) -> u64 {
        self.0.n_frames
    }
}

/// Row-major image of per-pixel exposures.
#[pyclass(name = "Image", frozen, from_py_object)]
#[derive(Clone)]
struct PyImage(hdr_fusion::Image);

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, data: Vec<f64>) -> PyResult<Self> {
        hdr_fusion::Image::new(width, height, data).map(Self).map_err(err)
    }
    #[staticmethod]
    fn log_ramp(width: usize, height: usize, lo: f64, hi: f64) -> PyResult<Self> {
        hdr_fusion::Image::log_ramp(width, height, lo, hi).map(Self).map_err(err)
    }
    #[staticmethod]
    fn reference_ramp() -> Self {
        Self(hdr_fusion::Image::reference_ramp())
    }
    #[getter]
    fn width(&self) -> usize {
        self.0.width
    }
    #[getter]
    fn height(&self) -> usize {
        self.0.height
    }
    #[getter]
    fn data(&self) -> Vec<f64> {
        self.0.data.clone()
    }
}

#[pyclass(name = "FusedImage", frozen)]
struct PyFusedImage(hdr_fusion::FusedImage);

#[pymethods]
impl PyFusedImage {
    #[getter]
    fn estimate(&self) -> PyImage {
        PyImage(self.0.estimate.clone())
    }
    /// Log-domain PSNR in dB; `inf` for an exact reconstruction.
    #[getter]
    fn psnr(&self) -> f64 {
        self.0.psnr
    }
    #[getter]
    fn failures(&self) -> usize {
        self.0.failures
    }
    #[getter]
    fn scheme(&self) -> &'static str {
        self.0.scheme.as_str()
    }
}

// special functions

#[pyfunction]
fn psi(order: u64, theta: f64) -> PyResult<f64> {
    special_fn::psi(order, theta).map(|v| v.get()).map_err(err)
}

#[pyfunction]
fn psi_complement(order: u64, theta: f64) -> PyResult<f64> {
    special_fn::psi_complement(order, theta).map_err(err)
}

#[pyfunction]
fn psi_prime(order: u64, theta: f64) -> PyResult<f64> {
    special_fn::psi_prime(order, theta).map_err(err)
}

#[pyfunction]
fn poisson_pmf(k: u64, theta: f64) -> f64 {
    special_fn::poisson_pmf(k, theta)
}

// analytic SNR

/// `(mean, variance, mean_derivative)` of `min(Poisson(theta), L)`.
#[pyfunction]
fn truncated_poisson_moments(theta: f64, full_well: u64) -> PyResult<(f64, f64, f64)> {
    let m = analytic_snr::truncated_poisson_moments(theta, full_well).map_err(err)?;
    Ok((m.mean, m.variance, m.mean_derivative))
}

#[pyfunction]
#[pyo3(signature = (theta, full_well, n_frames=1))]
fn snr_exp_truncated_poisson(theta: f64, full_well: u64, n_frames: u64) -> PyResult<f64> {
    analytic_snr::snr_exp_truncated_poisson(theta, full_well, n_frames).map_err(err)
}

#[pyfunction]
fn snr_out(theta: f64, config: &PySensorConfig) -> PyResult<f64> {
    analytic_snr::snr_out(theta, &config.0).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (theta, q, n_frames=1))]
fn snr_exp_one_bit(theta: f64, q: u64, n_frames: u64) -> PyResult<f64> {
    analytic_snr::snr_exp_one_bit(theta, q, n_frames).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (thetas, full_well, n_frames=1))]
fn truncated_poisson_curve(thetas: Vec<f64>, full_well: u64, n_frames: u64) -> PyResult<PySnrCurve> {
    analytic_snr::truncated_poisson_curve(&grid(thetas)?, full_well, n_frames)
        .map(PySnrCurve)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (thetas, config, n_frames=1))]
fn output_referred_curve(thetas: Vec<f64>, config: &PySensorConfig, n_frames: u64) -> PyResult<PySnrCurve> {
    analytic_snr::output_referred_curve(&grid(thetas)?, &config.0, n_frames)
        .map(PySnrCurve)
        .map_err(err)
}

// Monte Carlo

/// Monte Carlo exposure-referred SNR of a forward model.
///
/// `model` is one of `truncated-poisson`, `poisson`, `one-bit`,
/// `full-pipeline`; all but `poisson` need `config`.
#[pyfunction]
#[pyo3(signature = (model, thetas, config=None, samples=100_000, n_frames=1, seed=0, stream=0, forward=false, per_point=false))]
#[allow(clippy::too_many_arguments)]
fn mc_snr_curve(
    py: Python<'_>,
    model: &str,
    thetas: Vec<f64>,
    config: Option<PySensorConfig>,
    samples: usize,
    n_frames: u64,
    seed: u64,
    stream: u64,
    forward: bool,
    per_point: bool,
) -> PyResult<PySnrCurve> {
    let cfg = || {
        config
            .as_ref()
            .map(|c| c.0)
            .ok_or_else(|| PyValueError::new_err(format!("model {model:?} needs a SensorConfig")))
    };
    let model: Box<dyn ForwardModel> = match model {
        "truncated-poisson" => Box::new(TruncatedPoisson::new(cfg()?.full_well).map_err(err)?),
        "poisson" => Box::new(Poisson),
        "one-bit" => Box::new(OneBit(cfg()?)),
        "full-pipeline" => Box::new(FullPipeline(cfg()?)),
        other => return Err(PyValueError::new_err(format!("unknown model {other:?}"))),
    };
    let options = MomentOptions {
        scheme: if forward { DifferenceScheme::Forward } else { DifferenceScheme::Central },
        streams: if per_point { StreamPolicy::PerPoint } else { StreamPolicy::Shared },
    };
    let grid = grid(thetas)?;
    let rng = SeededRng::new(seed, stream);
    py.detach(|| monte_carlo::mc_snr_curve(model.as_ref(), &grid, samples, n_frames, &rng, options))
        .map(PySnrCurve)
        .map_err(err)
}

// estimators

#[pyfunction]
fn ml_bernoulli(y_bar: f64) -> PyResult<f64> {
    estimator::ml_bernoulli(y_bar).map_err(err)
}

#[pyfunction]
fn ml_poisson(samples: Vec<u64>) -> PyResult<f64> {
    let s: Vec<Sample> = samples.into_iter().map(Sample).collect();
    estimator::ml_poisson(&s).map_err(err)
}

#[pyfunction]
fn ml_truncated_poisson(samples: Vec<u64>, full_well: u64) -> PyResult<f64> {
    let s: Vec<Sample> = samples.into_iter().map(Sample).collect();
    estimator::ml_truncated_poisson(&s, full_well).map_err(err)
}

/// Mean-invariant estimate: the exposure whose truncated-Poisson mean is `y_bar`.
#[pyfunction]
#[pyo3(signature = (y_bar, full_well, tol=estimator::DEFAULT_TOL))]
fn invert_truncated_poisson_mean(y_bar: f64, full_well: u64, tol: f64) -> PyResult<f64> {
    estimator::invert_mean(&estimator::TruncatedPoissonMean { full_well }, y_bar, tol).map_err(err)
}

// one-bit sensors

#[pyfunction]
#[pyo3(signature = (theta, q, read_noise=0.0))]
fn one_bit_mean(theta: f64, q: f64, read_noise: f64) -> PyResult<f64> {
    qis_metrics::one_bit_mean(theta, q, read_noise).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (theta, q, read_noise=0.0, n_frames=1, eps=None))]
fn one_bit_snr_exp(theta: f64, q: f64, read_noise: f64, n_frames: u64, eps: Option<f64>) -> PyResult<f64> {
    qis_metrics::one_bit_snr_exp(theta, q, read_noise, n_frames, eps).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (theta, qs, read_noise=0.0, n_frames=1, eps=None))]
fn threshold_sweep(theta: f64, qs: Vec<f64>, read_noise: f64, n_frames: u64, eps: Option<f64>) -> PyResult<Vec<f64>> {
    qis_metrics::threshold_sweep(theta, &qs, read_noise, n_frames, eps)
        .map(|s| s.snr_values)
        .map_err(err)
}

#[pyfunction]
fn snr_lower_bound(theta: f64, q: u64) -> PyResult<f64> {
    qis_metrics::snr_lower_bound(theta, q).map_err(err)
}

#[pyfunction]
fn optimal_threshold_bound(theta: f64) -> PyResult<u64> {
    qis_metrics::optimal_threshold_bound(theta).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (theta, q_max=None))]
fn optimal_threshold_exact(theta: f64, q_max: Option<u64>) -> PyResult<u64> {
    let q_max = q_max.unwrap_or_else(|| (2.0 * theta).ceil().max(10.0) as u64);
    qis_metrics::optimal_threshold_exact(theta, q_max).map_err(err)
}

#[pyfunction]
fn binary_entropy(theta: f64, q: u64) -> PyResult<f64> {
    qis_metrics::binary_entropy(theta, q).map_err(err)
}

#[pyfunction]
fn bit_error_rate(theta: f64, q: f64, read_noise: f64) -> PyResult<f64> {
    qis_metrics::bit_error_rate(theta, q, read_noise).map_err(err)
}

#[pyfunction]
fn read_noise_from_ber(ber: f64) -> PyResult<f64> {
    qis_metrics::read_noise_from_ber(ber).map_err(err)
}

// HDR fusion

#[pyfunction]
#[pyo3(signature = (theta, brackets, scheme="exposure"))]
fn fusion_weights(theta: f64, brackets: &PyBrackets, scheme: &str) -> PyResult<Vec<f64>> {
    hdr_fusion::fusion_weights(theta, &brackets.0, self::scheme(scheme)?)
        .map(|w| w.w)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (theta, brackets, scheme="exposure"))]
fn snr_hdr(theta: f64, brackets: &PyBrackets, scheme: &str) -> PyResult<Option<f64>> {
    hdr_fusion::snr_hdr(theta, &brackets.0, self::scheme(scheme)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (brackets, thetas, scheme="exposure"))]
fn snr_hdr_curve(brackets: &PyBrackets, thetas: Vec<f64>, scheme: &str) -> PyResult<PySnrCurve> {
    hdr_fusion::snr_hdr_curve(&brackets.0, self::scheme(scheme)?, &grid(thetas)?)
        .map(PySnrCurve)
        .map_err(err)
}

/// Simulates every bracket over `scene` and fuses; `seed=None` runs noiseless.
#[pyfunction]
#[pyo3(signature = (scene, brackets, scheme="exposure", seed=Some(0)))]
fn fuse_image(py: Python<'_>, scene: &PyImage, brackets: &PyBrackets, scheme: &str, seed: Option<u64>) -> PyResult<PyFusedImage> {
    let s = self::scheme(scheme)?;
    py.detach(|| match seed {
        Some(seed) => hdr_fusion::fuse_image(&scene.0, &brackets.0, s, &SeededRng::new(seed, 0)),
        None => hdr_fusion::fuse_image_noiseless(&scene.0, &brackets.0, s),
    })
    .map(PyFusedImage)
    .map_err(err)
}

#[pymodule(name = "snrlab")]
fn snrlab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySensorConfig>()?;
    m.add_class::<PySnrCurve>()?;
    m.add_class::<PyBrackets>()?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyFusedImage>()?;
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    m.add_function(wrap_pyfunction!(psi_complement, m)?)?;
    m.add_function(wrap_pyfunction!(psi_prime, m)?)?;
    m.add_function(wrap_pyfunction!(poisson_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(truncated_poisson_moments, m)?)?;
    m.add_function(wrap_pyfunction!(snr_exp_truncated_poisson, m)?)?;
    m.add_function(wrap_pyfunction!(snr_out, m)?)?;
    m.add_function(wrap_pyfunction!(snr_exp_one_bit, m)?)?;
    m.add_function(wrap_pyfunction!(truncated_poisson_curve, m)?)?;
    m.add_function(wrap_pyfunction!(output_referred_curve, m)?)?;
    m.add_function(wrap_pyfunction!(mc_snr_curve, m)?)?;
    m.add_function(wrap_pyfunction!(ml_bernoulli, m)?)?;
    m.add_function(wrap_pyfunction!(ml_poisson, m)?)?;
    m.add_function(wrap_pyfunction!(ml_truncated_poisson, m)?)?;
    m.add_function(wrap_pyfunction!(invert_truncated_poisson_mean, m)?)?;
    m.add_function(wrap_pyfunction!(one_bit_mean, m)?)?;
    m.add_function(wrap_pyfunction!(one_bit_snr_exp, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(snr_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_threshold_bound, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_threshold_exact, m)?)?;
    m.add_function(wrap_pyfunction!(binary_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(bit_error_rate, m)?)?;
    m.add_function(wrap_pyfunction!(read_noise_from_ber, m)?)?;
    m.add_function(wrap_pyfunction!(fusion_weights, m)?)?;
    m.add_function(wrap_pyfunction!(snr_hdr, m)?)?;
    m.add_function(wrap_pyfunction!(snr_hdr_curve, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_image, m)?)?;
    Ok(())
}
