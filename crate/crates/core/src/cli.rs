//! Command-line front end: argument parsing, the replayable [`RunConfig`],
//! and the writers for curve, sweep and report files.
//!
//! Every run writes its fully resolved configuration next to its outputs
//! (a `.meta.json` sidecar for CSV, an embedded `config` object for JSON), and
//! `snrlab run --config <file>` replays it.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analytic_snr::{one_bit_curve, output_referred_curve, truncated_poisson_curve};
use crate::curve::{CurveKind, CurvePoint, ExposureGrid, Provenance, SnrCurve};
use crate::error::{Error, Result};
use crate::hdr_fusion::{self, Brackets, Image, Scheme};
use crate::monte_carlo::{self, DifferenceScheme, MomentOptions, StreamPolicy};
use crate::pfm;
use crate::qis_metrics;
use crate::rng::SeededRng;
use crate::sensor_model::{ForwardModel, FullPipeline, OneBit, Poisson, SensorConfig, TruncatedPoisson};

pub const SCHEMA_VERSION: &str = "1";
pub const THREADS_ENV: &str = "SNRLAB_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    #[default]
    SnrCurve,
    McSim,
    HdrFuse,
    ThresholdSweep,
    Ber,
    Entropy,
}

impl CommandKind {
    fn name(self) -> &'static str {
        match self {
            CommandKind::SnrCurve => "snr-curve",
            CommandKind::McSim => "mc-sim",
            CommandKind::HdrFuse => "hdr-fuse",
            CommandKind::ThresholdSweep => "threshold-sweep",
            CommandKind::Ber => "ber",
            CommandKind::Entropy => "entropy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    TruncatedPoisson,
    Poisson,
    OneBit,
    Pipeline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    #[default]
    Exposure,
    Output,
}

impl From<KindArg> for CurveKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Exposure => CurveKind::ExposureReferred,
            KindArg::Output => CurveKind::OutputReferred,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub theta_min: f64,
    pub theta_max: f64,
    pub count: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            theta_min: 1e-2,
            theta_max: 1e3,
            count: 100,
        }
    }
}

impl GridSpec {
    fn build(&self) -> Result<ExposureGrid> {
        ExposureGrid::log_spaced(self.theta_min, self.theta_max, self.count).map_err(to_config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSpec {
    pub samples: usize,
    pub seed: u64,
    pub difference: DifferenceScheme,
    pub streams: StreamPolicy,
}

impl Default for McSpec {
    fn default() -> Self {
        McSpec {
            samples: monte_carlo::DEFAULT_SAMPLES,
            seed: 0,
            difference: DifferenceScheme::default(),
            streams: StreamPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    ReadNoise,
    DarkCurrent,
}

impl SweepParameter {
    fn name(self) -> &'static str {
        match self {
            SweepParameter::ReadNoise => "read_noise",
            SweepParameter::DarkCurrent => "dark_current",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SchemeSelection {
    Exposure,
    Output,
    #[default]
    Both,
}

impl SchemeSelection {
    fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeSelection::Exposure => vec![Scheme::ExposureReferred],
            SchemeSelection::Output => vec![Scheme::OutputReferred],
            SchemeSelection::Both => vec![Scheme::ExposureReferred, Scheme::OutputReferred],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HdrSpec {
    pub taus: Vec<f64>,
    pub scheme: SchemeSelection,
    /// Scene PFM; the synthetic ramp when absent.
    pub scene: Option<PathBuf>,
    /// Base path for fused PFM images, one per scheme.
    pub estimate_out: Option<PathBuf>,
    pub noiseless: bool,
    /// Exposures at which the per-bracket weights are reported.
    pub sample_thetas: Vec<f64>,
}

impl Default for HdrSpec {
    fn default() -> Self {
        HdrSpec {
            taus: Brackets::reference().taus,
            scheme: SchemeSelection::Both,
            scene: None,
            estimate_out: None,
            noiseless: false,
            sample_thetas: vec![0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QisSpec {
    pub thetas: Vec<f64>,
    pub q_values: Vec<f64>,
    pub read_noises: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

/// Complete, replayable description of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: String,
    pub command: CommandKind,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub kind: KindArg,
    pub sensor: SensorConfig,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "one")]
    pub n_frames: u64,
    #[serde(default)]
    pub monte_carlo: McSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub hdr: HdrSpec,
    #[serde(default)]
    pub qis: QisSpec,
    pub output: OutputSpec,
}

fn one() -> u64 {
    1
}

fn to_config(e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Config(m),
        other => other,
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "schema_version must be \"{SCHEMA_VERSION}\", got {:?}",
                self.schema_version
            )));
        }
        if self.output.path.as_os_str().is_empty() {
            return Err(config_err("output.path must be set"));
        }
        if self.n_frames == 0 {
            return Err(config_err("n_frames must be >= 1"));
        }
        for sensor in self.members()? {
            sensor.validate().map_err(to_config)?;
        }
        match self.command {
            CommandKind::SnrCurve => {
                self.grid.build()?;
                match (self.model, self.kind) {
                    (ModelKind::TruncatedPoisson, _) | (ModelKind::OneBit, _) => {}
                    (m, _) => {
                        return Err(config_err(format!(
                            "snr-curve supports models truncated_poisson and one_bit, got {m:?}"
                        )))
                    }
                }
                if self.model == ModelKind::OneBit {
                    for s in self.members()? {
                        if s.dark_current != 0.0 {
                            return Err(config_err(
                                "analytic one-bit curves need dark_current = 0; use mc-sim",
                            ));
                        }
                        if self.kind == KindArg::Output && (s.read_noise != 0.0 || !is_count(s.threshold)) {
                            return Err(config_err(
                                "output-referred one-bit curves need read_noise = 0 and an integer threshold >= 1",
                            ));
                        }
                    }
                }
            }
            CommandKind::McSim => {
                self.grid.build()?;
                if self.monte_carlo.samples < 2 {
                    return Err(config_err("monte_carlo.samples must be >= 2"));
                }
            }
            CommandKind::HdrFuse => {
                self.grid.build()?;
                Brackets::new(self.hdr.taus.clone(), self.sensor.full_well, self.n_frames).map_err(to_config)?;
                if self.hdr.sample_thetas.iter().any(|t| !(*t > 0.0)) {
                    return Err(config_err("hdr.sample_thetas must be > 0"));
                }
                if self.output.format != OutputFormat::Json {
                    return Err(config_err("hdr-fuse writes a JSON report; output.format must be json"));
                }
            }
            CommandKind::ThresholdSweep | CommandKind::Ber | CommandKind::Entropy => {
                let q = &self.qis;
                if q.thetas.is_empty() || q.thetas.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
                    return Err(config_err("qis.thetas must be non-empty, finite and > 0"));
                }
                if q.q_values.is_empty() || q.q_values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(config_err("qis.q_values must be non-empty, finite and > 0"));
                }
                if self.command != CommandKind::Entropy {
                    if q.read_noises.is_empty() || q.read_noises.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
                        return Err(config_err("qis.read_noises must be non-empty, finite and >= 0"));
                    }
                }
                match self.command {
                    CommandKind::ThresholdSweep => {
                        if q.q_values.windows(2).any(|w| w[0] >= w[1]) {
                            return Err(config_err("qis.q_values must be strictly increasing"));
                        }
                    }
                    CommandKind::Ber => {
                        if q.read_noises.iter().any(|s| *s == 0.0) {
                            return Err(config_err("ber needs qis.read_noises > 0"));
                        }
                    }
                    CommandKind::Entropy => {
                        if q.q_values.iter().any(|v| !is_count(*v)) {
                            return Err(config_err("entropy needs integer thresholds q >= 1"));
                        }
                    }
                    _ => {}
                }
                if self.output.format != OutputFormat::Csv && self.command == CommandKind::ThresholdSweep {
                    return Err(config_err("threshold-sweep writes CSV; output.format must be csv"));
                }
            }
        }
        Ok(())
    }

    /// Sensor configuration of every sweep member (one when not sweeping).
    fn members(&self) -> Result<Vec<SensorConfig>> {
        let Some(sweep) = &self.sweep else {
            return Ok(vec![self.sensor]);
        };
        if sweep.values.is_empty() {
            return Err(config_err("sweep.values must not be empty"));
        }
        Ok(sweep
            .values
            .iter()
            .map(|&v| {
                let mut s = self.sensor;
                match sweep.parameter {
                    SweepParameter::ReadNoise => s.read_noise = v,
                    SweepParameter::DarkCurrent => s.dark_current = v,
                }
                s
            })
            .collect())
    }
}

fn is_count(q: f64) -> bool {
    q >= 1.0 && q.fract() == 0.0 && q < 9.0e15
}

/// Files written by a run, plus members that failed numerically.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub failures: Vec<MemberFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberFailure {
    pub member: String,
    pub error: String,
}

/// Writes a curve as `theta,snr,kind,n_frames` rows; missing values are
/// empty fields.
pub fn curve_to_csv(curve: &SnrCurve) -> String {
    let mut s = String::from("theta,snr,kind,n_frames\n");
    for p in &curve.points {
        let snr = p.snr.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", p.theta, snr, curve.kind.as_str(), curve.n_frames);
    }
    s
}

/// Parses a file produced by [`curve_to_csv`].
pub fn curve_from_csv(text: &str) -> Result<SnrCurve> {
    let mut lines = text.lines();
    if lines.next() != Some("theta,snr,kind,n_frames") {
        return Err(Error::Format("curve CSV header must be `theta,snr,kind,n_frames`".into()));
    }
    let mut points = Vec::new();
    let mut kind = CurveKind::ExposureReferred;
    let mut n_frames = 1;
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::Format(format!("row {} has {} fields", i + 2, f.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("row {}: bad number {s:?}", i + 2)))
        };
        kind = match f[2] {
            "exposure_referred" => CurveKind::ExposureReferred,
            "output_referred" => CurveKind::OutputReferred,
            k => return Err(Error::Format(format!("row {}: unknown kind {k:?}", i + 2))),
        };
        n_frames = f[3]
            .parse()
            .map_err(|_| Error::Format(format!("row {}: bad frame count", i + 2)))?;
        points.push(CurvePoint {
            theta: num(f[0])?,
            snr: if f[1].is_empty() { None } else { Some(num(f[1])?) },
        });
    }
    Ok(SnrCurve {
        points,
        kind,
        n_frames,
        provenance: Provenance::Analytic,
        config: serde_json::Value::Null,
    })
}

fn member_path(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    base.with_file_name(name)
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn to_json(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::Null
    }
}

struct Member<T> {
    label: Option<String>,
    value: Result<T>,
}

/// Runs a configuration and writes its outputs. Invalid configurations fail
/// before anything is written; numeric failures of individual family
/// members are collected in the report and a `.failures.json` manifest.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let mut report = RunReport::default();
    match config.command {
        CommandKind::SnrCurve | CommandKind::McSim => run_curves(config, &mut report)?,
        CommandKind::HdrFuse => run_hdr(config, &mut report)?,
        CommandKind::ThresholdSweep => run_threshold(config, &mut report)?,
        CommandKind::Ber | CommandKind::Entropy => run_qis_table(config, &mut report)?,
    }
    if !report.failures.is_empty() {
        let path = with_suffix(&config.output.path, ".failures.json");
        write_text(
            &path,
            &to_json(&serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "config": config,
                "completed": report.files,
                "failures": report.failures,
            })),
        )?;
        report.files.push(path);
    }
    Ok(report)
}

fn sweep_label(config: &RunConfig, s: &SensorConfig) -> Option<String> {
    config.sweep.as_ref().map(|sw| {
        let v = match sw.parameter {
            SweepParameter::ReadNoise => s.read_noise,
            SweepParameter::DarkCurrent => s.dark_current,
        };
        format!("{}={v}", sw.parameter.name())
    })
}

fn curve_member(config: &RunConfig, grid: &ExposureGrid, s: &SensorConfig) -> Result<SnrCurve> {
    let n = config.n_frames;
    match config.command {
        CommandKind::SnrCurve => match (config.model, config.kind) {
            (ModelKind::TruncatedPoisson, KindArg::Exposure) => truncated_poisson_curve(grid, s.full_well, n),
            (ModelKind::TruncatedPoisson, KindArg::Output) => output_referred_curve(grid, s, n),
            (ModelKind::OneBit, kind) => {
                if s.read_noise == 0.0 && is_count(s.threshold) {
                    one_bit_curve(grid, s.threshold as u64, n, kind.into())
                } else {
                    let points = grid
                        .thetas()
                        .iter()
                        .map(|&theta| {
                            Ok(CurvePoint {
                                theta,
                                snr: Some(qis_metrics::one_bit_snr_exp(theta, s.threshold, s.read_noise, n, None)?),
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(SnrCurve {
                        points,
                        kind: CurveKind::ExposureReferred,
                        n_frames: n,
                        provenance: Provenance::Analytic,
                        config: serde_json::to_value(s).unwrap_or_default(),
                    })
                }
            }
            (m, _) => Err(config_err(format!("snr-curve does not support model {m:?}"))),
        },
        _ => {
            let model: Box<dyn ForwardModel> = match config.model {
                ModelKind::TruncatedPoisson => Box::new(TruncatedPoisson::new(s.full_well)?),
                ModelKind::Poisson => Box::new(Poisson),
                ModelKind::OneBit => Box::new(OneBit(*s)),
                ModelKind::Pipeline => Box::new(FullPipeline(*s)),
            };
            let mc = &config.monte_carlo;
            monte_carlo::mc_snr_curve(
                model.as_ref(),
                grid,
                mc.samples,
                n,
                &SeededRng::new(mc.seed, 0),
                MomentOptions {
                    scheme: mc.difference,
                    streams: mc.streams,
                },
            )
        }
    }
}

fn run_curves(config: &RunConfig, report: &mut RunReport) -> Result<()> {
    let grid = config.grid.build()?;
    let members: Vec<Member<SnrCurve>> = config
        .members()?
        .iter()
        .map(|s| Member {
            label: sweep_label(config, s),
            value: curve_member(config, &grid, s),
        })
        .collect();
    let base = &config.output.path;
    for m in members {
        let path = match &m.label {
            Some(l) => member_path(base, l),
            None => base.clone(),
        };
        match m.value {
            Ok(curve) => {
                let text = match config.output.format {
                    OutputFormat::Csv => curve_to_csv(&curve),
                    OutputFormat::Json => to_json(&serde_json::json!({
                        "schema_version": SCHEMA_VERSION,
                        "config": config,
                        "curve": curve,
                    })),
                };
                write_text(&path, &text)?;
                report.files.push(path);
            }
            Err(e) if e.is_numeric() => report.failures.push(MemberFailure {
                member: m.label.unwrap_or_else(|| "curve".into()),
                error: e.to_string(),
            }),
            Err(e) => return Err(to_config(e)),
        }
    }
    if config.output.format == OutputFormat::Csv {
        write_sidecar(config, report)?;
    }
    Ok(())
}

fn write_sidecar(config: &RunConfig, report: &mut RunReport) -> Result<()> {
    let path = with_suffix(&config.output.path, ".meta.json");
    write_text(
        &path,
        &to_json(&serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "command": config.command.name(),
            "config": config,
            "files": report.files,
        })),
    )?;
    report.files.push(path);
    Ok(())
}

fn run_hdr(config: &RunConfig, report: &mut RunReport) -> Result<()> {
    let brackets = Brackets::new(config.hdr.taus.clone(), config.sensor.full_well, config.n_frames).map_err(to_config)?;
    let grid = config.grid.build()?;
    let scene = match &config.hdr.scene {
        Some(p) => pfm::read_pfm_file(p).map_err(|e| config_err(format!("hdr.scene {}: {e}", p.display())))?,
        None => Image::reference_ramp(),
    };
    let rng = SeededRng::new(config.monte_carlo.seed, 0);
    let mut scheme_reports = Vec::new();
    for scheme in config.hdr.scheme.schemes() {
        let curve_path = member_path(&config.output.path, scheme.as_str()).with_extension("csv");
        let curve = hdr_fusion::snr_hdr_curve(&brackets, scheme, &grid)?;
        write_text(&curve_path, &curve_to_csv(&curve))?;
        report.files.push(curve_path);

        let fused = if config.hdr.noiseless {
            hdr_fusion::fuse_image_noiseless(&scene, &brackets, scheme)
        } else {
            hdr_fusion::fuse_image(&scene, &brackets, scheme, &rng)
        };
        let fused = match fused {
            Ok(f) => f,
            Err(e) if e.is_numeric() => {
                report.failures.push(MemberFailure {
                    member: scheme.as_str().into(),
                    error: e.to_string(),
                });
                continue;
            }
            Err(e) => return Err(to_config(e)),
        };
        if let Some(base) = &config.hdr.estimate_out {
            let p = member_path(base, scheme.as_str());
            pfm::write_pfm_file(&fused.estimate, &p)?;
            report.files.push(p);
        }
        let weights: Vec<serde_json::Value> = config
            .hdr
            .sample_thetas
            .iter()
            .map(|&theta| match hdr_fusion::fusion_weights(theta, &brackets, scheme) {
                Ok(w) => serde_json::json!({ "theta": theta, "weights": w.w }),
                Err(e) => serde_json::json!({ "theta": theta, "weights": null, "error": e.to_string() }),
            })
            .collect();
        scheme_reports.push(serde_json::json!({
            "scheme": scheme.as_str(),
            "psnr_db": finite_or_null(fused.psnr),
            "exact": fused.psnr == f64::INFINITY,
            "failures": fused.failures,
            "pixels": scene.data.len(),
            "weights": weights,
        }));
    }
    let path = config.output.path.clone();
    write_text(
        &path,
        &to_json(&serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "command": config.command.name(),
            "config": config,
            "scene": if config.hdr.scene.is_some() { "file" } else { "synthetic_ramp" },
            "psnr_floor": hdr_fusion::psnr_floor(&brackets),
            "schemes": scheme_reports,
        })),
    )?;
    report.files.push(path);
    Ok(())
}

fn run_threshold(config: &RunConfig, report: &mut RunReport) -> Result<()> {
    let q = &config.qis;
    let multi_theta = q.thetas.len() > 1;
    let multi_sigma = q.read_noises.len() > 1;
    for &theta in &q.thetas {
        for &sigma in &q.read_noises {
            let mut parts = Vec::new();
            if multi_theta {
                parts.push(format!("theta={theta}"));
            }
            if multi_sigma {
                parts.push(format!("read_noise={sigma}"));
            }
            let path = if parts.is_empty() {
                config.output.path.clone()
            } else {
                member_path(&config.output.path, &parts.join("_"))
            };
            match qis_metrics::threshold_sweep(theta, &q.q_values, sigma, config.n_frames, None) {
                Ok(sw) => {
                    let mut s = String::from("q,snr,read_noise,theta,n_frames\n");
                    for (qv, snr) in sw.q_values.iter().zip(&sw.snr_values) {
                        let _ = writeln!(s, "{qv},{snr},{sigma},{theta},{}", config.n_frames);
                    }
                    write_text(&path, &s)?;
                    report.files.push(path);
                }
                Err(e) if e.is_numeric() => report.failures.push(MemberFailure {
                    member: parts.join("_"),
                    error: e.to_string(),
                }),
                Err(e) => return Err(to_config(e)),
            }
        }
    }
    write_sidecar(config, report)
}

fn run_qis_table(config: &RunConfig, report: &mut RunReport) -> Result<()> {
    let q = &config.qis;
    let mut rows = Vec::new();
    for &theta in &q.thetas {
        for &qv in &q.q_values {
            if config.command == CommandKind::Entropy {
                match qis_metrics::binary_entropy(theta, qv as u64) {
                    Ok(h) => rows.push(serde_json::json!({ "theta": theta, "q": qv, "entropy_bits": h })),
                    Err(e) if e.is_numeric() => report.failures.push(MemberFailure {
                        member: format!("theta={theta}_q={qv}"),
                        error: e.to_string(),
                    }),
                    Err(e) => return Err(to_config(e)),
                }
                continue;
            }
            for &sigma in &q.read_noises {
                match qis_metrics::bit_error_rate(theta, qv, sigma) {
                    Ok(b) => rows.push(serde_json::json!({ "theta": theta, "q": qv, "read_noise": sigma, "ber": b })),
                    Err(e) if e.is_numeric() => report.failures.push(MemberFailure {
                        member: format!("theta={theta}_q={qv}_read_noise={sigma}"),
                        error: e.to_string(),
                    }),
                    Err(e) => return Err(to_config(e)),
                }
            }
        }
    }
    let path = config.output.path.clone();
    write_text(
        &path,
        &to_json(&serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "command": config.command.name(),
            "config": config,
            "results": rows,
        })),
    )?;
    report.files.push(path);
    Ok(())
}

/// Loads a configuration from a bare `RunConfig` JSON file or from any
/// sidecar or report that embeds one under `config`.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let inner = match value.get("config") {
        Some(c) if c.is_object() => c.clone(),
        _ => value,
    };
    serde_json::from_value(inner).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

#[derive(Debug, Parser)]
#[command(name = "snrlab", version, about = "Exposure- and output-referred SNR for image sensors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic SNR curve over a log-spaced exposure grid.
    SnrCurve(CurveArgs),
    /// Monte Carlo SNR curve (or family) for a forward model.
    McSim(McArgs),
    /// HDR bracket fusion: SNR curves per scheme and a fused-image report.
    HdrFuse(HdrArgs),
    /// One-bit SNR against threshold.
    ThresholdSweep(ThresholdArgs),
    /// One-bit bit error rate table.
    Ber(BerArgs),
    /// Entropy of the noiseless one-bit measurement.
    Entropy(EntropyArgs),
    /// Replay a configuration or a metadata file from an earlier run.
    Run(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SensorArgs {
    #[arg(long)]
    full_well: Option<u64>,
    /// Read noise in electrons: a value, a list `a,b,c` or a linear range `lo:hi:count`.
    #[arg(long, default_value = "0")]
    read_noise: String,
    /// Dark electrons per exposure: value, list or linear range.
    #[arg(long, default_value = "0")]
    dark: String,
    /// ADC bit depth; defaults to the fewest bits that hold the full well.
    #[arg(long)]
    adc_bits: Option<u32>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Output path.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    /// Frames averaged per estimate.
    #[arg(long, short = 'n', default_value_t = 1)]
    frames: u64,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::TruncatedPoisson)]
    model: ModelKind,
    #[arg(long, value_enum, default_value_t = KindArg::Exposure)]
    kind: KindArg,
    /// Exposure grid `lo:hi:count`, log-spaced.
    #[arg(long, default_value = "1e-2:1e3:100")]
    theta: String,
    /// One-bit threshold.
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    #[command(flatten)]
    sensor: SensorArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Pipeline)]
    model: ModelKind,
    #[arg(long, default_value = "1e-2:1e3:100")]
    theta: String,
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    /// Draws per grid point.
    #[arg(long, default_value_t = monte_carlo::DEFAULT_SAMPLES)]
    samples: usize,
    /// Use 5e6 draws per grid point.
    #[arg(long)]
    full_scale: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mean-slope estimator: `central` or `forward`.
    #[arg(long, default_value = "central", value_parser = parse_difference)]
    difference: DifferenceScheme,
    /// Random streams: `shared` (common across grid points) or `per-point`.
    #[arg(long, default_value = "shared", value_parser = parse_streams)]
    streams: StreamPolicy,
    #[command(flatten)]
    sensor: SensorArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct HdrArgs {
    /// Integration times, comma separated.
    #[arg(long, default_value = "1,0.1,0.01,0.001")]
    taus: String,
    #[arg(long, default_value_t = 7)]
    full_well: u64,
    #[arg(long, short = 'n', default_value_t = 100)]
    frames: u64,
    #[arg(long, value_enum, default_value_t = SchemeSelection::Both)]
    scheme: SchemeSelection,
    /// Grid for the SNR_HDR curves.
    #[arg(long, default_value = "1e-2:1e4:200")]
    theta: String,
    /// Scene PFM (default: synthetic log ramp 1e-1..1e4, 256x256).
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Base path for fused PFM images.
    #[arg(long)]
    estimate_out: Option<PathBuf>,
    /// Replace every frame average by its expectation.
    #[arg(long)]
    noiseless: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON report path.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Exposures: value, list or log range.
    #[arg(long, default_value = "1")]
    theta: String,
    /// Read noise levels: value, list or linear range.
    #[arg(long, default_value = "0")]
    read_noise: String,
    /// Thresholds: list or linear range.
    #[arg(long, default_value = "0.05:0.95:19")]
    q: String,
    #[arg(long, short = 'n', default_value_t = 1)]
    frames: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BerArgs {
    #[arg(long, default_value = "0.1,1,10")]
    theta: String,
    #[arg(long, default_value = "0.5")]
    q: String,
    #[arg(long, default_value = "0.25")]
    read_noise: String,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    #[arg(long, default_value = "0.1,1,10")]
    theta: String,
    #[arg(long, default_value = "1")]
    q: String,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// RunConfig JSON, or a `.meta.json` / report file from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Write to this path instead of the recorded one.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn parse_difference(s: &str) -> std::result::Result<DifferenceScheme, String> {
    match s {
        "central" => Ok(DifferenceScheme::Central),
        "forward" => Ok(DifferenceScheme::Forward),
        _ => Err(format!("expected `central` or `forward`, got {s:?}")),
    }
}

fn parse_streams(s: &str) -> std::result::Result<StreamPolicy, String> {
    match s {
        "shared" => Ok(StreamPolicy::Shared),
        "per-point" | "per_point" => Ok(StreamPolicy::PerPoint),
        _ => Err(format!("expected `shared` or `per-point`, got {s:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

/// Parses `v`, `a,b,c` or `lo:hi:count`.
pub fn parse_values(s: &str, spacing: Spacing) -> Result<Vec<f64>> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| config_err(format!("bad number {t:?} in {s:?}")))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        1 => s.split(',').map(num).collect(),
        3 => {
            let (lo, hi) = (num(parts[0])?, num(parts[1])?);
            let count: usize = parts[2]
                .trim()
                .parse()
                .map_err(|_| config_err(format!("bad count in range {s:?}")))?;
            if count < 2 {
                return Err(config_err(format!("range {s:?} needs count >= 2")));
            }
            if !(hi > lo) {
                return Err(config_err(format!("range {s:?} needs lo < hi")));
            }
            match spacing {
                Spacing::Log => Ok(ExposureGrid::log_spaced(lo, hi, count).map_err(to_config)?.thetas().to_vec()),
                Spacing::Linear => {
                    let step = (hi - lo) / (count - 1) as f64;
                    Ok((0..count)
                        .map(|i| if i == count - 1 { hi } else { lo + step * i as f64 })
                        .collect())
                }
            }
        }
        _ => Err(config_err(format!("expected a value, a list or lo:hi:count, got {s:?}"))),
    }
}

fn parse_grid(s: &str) -> Result<GridSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(config_err(format!("exposure grid must be lo:hi:count, got {s:?}")));
    }
    let v = parse_values(s, Spacing::Log)?;
    Ok(GridSpec {
        theta_min: v[0],
        theta_max: v[v.len() - 1],
        count: v.len(),
    })
}

fn min_bits(full_well: u64) -> u32 {
    (64 - full_well.leading_zeros()).max(1)
}

fn sensor_and_sweep(a: &SensorArgs, default_well: u64, threshold: f64) -> Result<(SensorConfig, Option<SweepSpec>)> {
    let full_well = a.full_well.unwrap_or(default_well);
    let read = parse_values(&a.read_noise, Spacing::Linear)?;
    let dark = parse_values(&a.dark, Spacing::Linear)?;
    if read.len() > 1 && dark.len() > 1 {
        return Err(config_err("sweep either --read-noise or --dark, not both"));
    }
    let sensor = SensorConfig {
        full_well,
        read_noise: read[0],
        dark_current: dark[0],
        adc_bits: a.adc_bits.unwrap_or_else(|| min_bits(full_well)),
        threshold,
    };
    let sweep = if read.len() > 1 {
        Some(SweepSpec {
            parameter: SweepParameter::ReadNoise,
            values: read,
        })
    } else if dark.len() > 1 {
        Some(SweepSpec {
            parameter: SweepParameter::DarkCurrent,
            values: dark,
        })
    } else {
        None
    };
    Ok((sensor, sweep))
}

fn base_config(command: CommandKind, sensor: SensorConfig, out: PathBuf, format: OutputFormat, n_frames: u64) -> RunConfig {
    RunConfig {
        schema_version: SCHEMA_VERSION.into(),
        command,
        model: ModelKind::default(),
        kind: KindArg::default(),
        sensor,
        grid: GridSpec::default(),
        n_frames,
        monte_carlo: McSpec::default(),
        sweep: None,
        hdr: HdrSpec::default(),
        qis: QisSpec::default(),
        output: OutputSpec { path: out, format },
    }
}

fn qis_sensor() -> SensorConfig {
    SensorConfig {
        full_well: 1,
        read_noise: 0.0,
        dark_current: 0.0,
        adc_bits: 1,
        threshold: 1.0,
    }
}

impl Command {
    /// Resolves parsed arguments into a configuration (without validating it).
    pub fn into_config(self) -> Result<RunConfig> {
        Ok(match self {
            Command::SnrCurve(a) => {
                let (sensor, sweep) = sensor_and_sweep(&a.sensor, 100, a.q)?;
                let mut c = base_config(CommandKind::SnrCurve, sensor, a.common.out, a.common.format, a.common.frames);
                c.model = a.model;
                c.kind = a.kind;
                c.grid = parse_grid(&a.theta)?;
                c.sweep = sweep;
                c
            }
            Command::McSim(a) => {
                let (sensor, sweep) = sensor_and_sweep(&a.sensor, 15, a.q)?;
                let mut c = base_config(CommandKind::McSim, sensor, a.common.out, a.common.format, a.common.frames);
                c.model = a.model;
                c.grid = parse_grid(&a.theta)?;
                c.sweep = sweep;
                c.monte_carlo = McSpec {
                    samples: if a.full_scale { monte_carlo::FULL_SCALE_SAMPLES } else { a.samples },
                    seed: a.seed,
                    difference: a.difference,
                    streams: a.streams,
                };
                c
            }
            Command::HdrFuse(a) => {
                let sensor = SensorConfig {
                    full_well: a.full_well,
                    read_noise: 0.0,
                    dark_current: 0.0,
                    adc_bits: min_bits(a.full_well),
                    threshold: 1.0,
                };
                let mut c = base_config(CommandKind::HdrFuse, sensor, a.out, OutputFormat::Json, a.frames);
                c.grid = parse_grid(&a.theta)?;
                c.monte_carlo.seed = a.seed;
                c.hdr = HdrSpec {
                    taus: parse_values(&a.taus, Spacing::Linear)?,
                    scheme: a.scheme,
                    scene: a.scene,
                    estimate_out: a.estimate_out,
                    noiseless: a.noiseless,
                    ..HdrSpec::default()
                };
                c
            }
            Command::ThresholdSweep(a) => {
                let mut c = base_config(CommandKind::ThresholdSweep, qis_sensor(), a.out, OutputFormat::Csv, a.frames);
                c.qis = QisSpec {
                    thetas: parse_values(&a.theta, Spacing::Log)?,
                    q_values: parse_values(&a.q, Spacing::Linear)?,
                    read_noises: parse_values(&a.read_noise, Spacing::Linear)?,
                };
                c
            }
            Command::Ber(a) => {
                let mut c = base_config(CommandKind::Ber, qis_sensor(), a.out, OutputFormat::Json, 1);
                c.qis = QisSpec {
                    thetas: parse_values(&a.theta, Spacing::Log)?,
                    q_values: parse_values(&a.q, Spacing::Linear)?,
                    read_noises: parse_values(&a.read_noise, Spacing::Linear)?,
                };
                c
            }
            Command::Entropy(a) => {
                let mut c = base_config(CommandKind::Entropy, qis_sensor(), a.out, OutputFormat::Json, 1);
                c.qis = QisSpec {
                    thetas: parse_values(&a.theta, Spacing::Log)?,
                    q_values: parse_values(&a.q, Spacing::Linear)?,
                    read_noises: Vec::new(),
                };
                c
            }
            Command::Run(a) => {
                let mut c = load_config(&a.config)?;
                if let Some(out) = a.out {
                    c.output.path = out;
                }
                c
            }
        })
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| config_err(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    // A pool may already exist when called more than once in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Exit status for an error: 2 for numeric failures, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        2
    } else {
        1
    }
}

/// Parses arguments, runs, reports to stderr and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = init_threads()
        .and_then(|_| cli.command.into_config())
        .and_then(|c| run(&c));
    match result {
        Ok(report) if report.failures.is_empty() => 0,
        Ok(report) => {
            for f in &report.failures {
                eprintln!("snrlab: {}: {}", f.member, f.error);
            }
            2
        }
        Err(e) => {
            eprintln!("snrlab: {e}");
            exit_code(&e)
        }
    }
}
