//! Run configuration files.
//!
//! TOML with every section closed to unknown keys. Frequencies are ordinary
//! frequencies in Hz (`ω/2π`) and are converted to angular units on the way
//! into the core; times are in seconds, angles in radians. Sweep quantities
//! written as `*_over_omega_a` are ratios to `ω_a`.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use qrm_core::dynamics::NoiseParams;
use qrm_core::model::{DriveParams, QrmParams};
use qrm_core::protocols::{make_schedule, ScanSegment, Schedule, ShotNoiseModel};
use qrm_core::pulse::{IonParams, LintConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Spectrum,
    Groundstate,
    Adiabatic,
    EntropyScan,
    Wigner,
    Compile,
    ValidateRwa,
    Convergence,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Groundstate => "groundstate",
            Experiment::Adiabatic => "adiabatic",
            Experiment::EntropyScan => "entropy-scan",
            Experiment::Wigner => "wigner",
            Experiment::Compile => "compile",
            Experiment::ValidateRwa => "validate-rwa",
            Experiment::Convergence => "convergence",
        }
    }

    pub fn default_cutoff(self) -> usize {
        match self {
            Experiment::Spectrum | Experiment::ValidateRwa => 15,
            _ => 60,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    #[default]
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot_noise: Option<ShotNoiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ion: Option<IonConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lint: Option<LintSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groundstate: Option<GroundstateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adiabatic: Option<AdiabaticConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_scan: Option<EntropyScanConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wigner: Option<WignerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rwa: Option<RwaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Static model in Hz; `theta` in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub omega_sigma: f64,
    pub omega_a: f64,
    pub lambda: f64,
    pub theta: f64,
}

impl ModelConfig {
    pub fn params(&self) -> QrmParams {
        QrmParams {
            omega_sigma: TWO_PI * self.omega_sigma,
            omega_a: TWO_PI * self.omega_a,
            lambda: TWO_PI * self.lambda,
            theta: self.theta,
        }
    }
}

/// Probe Rabi rate in Hz. The probe frequency is set by the scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub omega_rabi: f64,
    /// Fixed probe frequency (Hz) for compile and validate-rwa.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_l: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "default_tau1")]
    pub tau1: f64,
    #[serde(default = "default_tau2")]
    pub tau2: f64,
    #[serde(default = "default_gamma")]
    pub gamma_heat: f64,
    #[serde(default = "default_nbar")]
    pub nbar_init: f64,
    /// Drops every collapse channel and the thermal occupation.
    #[serde(default)]
    pub noiseless: bool,
}

fn default_tau1() -> f64 {
    NoiseParams::default().tau1
}
fn default_tau2() -> f64 {
    NoiseParams::default().tau2
}
fn default_gamma() -> f64 {
    NoiseParams::default().gamma_heat
}
fn default_nbar() -> f64 {
    NoiseParams::default().nbar_init
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            tau1: default_tau1(),
            tau2: default_tau2(),
            gamma_heat: default_gamma(),
            nbar_init: default_nbar(),
            noiseless: false,
        }
    }
}

impl NoiseConfig {
    pub fn params(&self) -> NoiseParams {
        if self.noiseless {
            NoiseParams::noiseless()
        } else {
            NoiseParams { tau1: self.tau1, tau2: self.tau2, gamma_heat: self.gamma_heat, nbar_init: self.nbar_init }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotNoiseConfig {
    #[serde(default = "default_cv")]
    pub intensity_cv: f64,
    /// Hz.
    #[serde(default = "default_stark")]
    pub ac_stark_max: f64,
    #[serde(default = "default_nbar_range")]
    pub nbar_range: [f64; 2],
    pub sample_count: usize,
}

fn default_cv() -> f64 {
    0.0226
}
fn default_stark() -> f64 {
    5.459e3
}
fn default_nbar_range() -> [f64; 2] {
    [0.0, 0.1]
}

impl ShotNoiseConfig {
    pub fn model(&self, seed: u64) -> ShotNoiseModel {
        ShotNoiseModel {
            intensity_cv: self.intensity_cv,
            ac_stark_max: TWO_PI * self.ac_stark_max,
            nbar_range: (self.nbar_range[0], self.nbar_range[1]),
            sample_count: self.sample_count,
            seed,
        }
    }
}

/// Ramp endpoints in Hz; per-path `tau`/`t_tot` live in `[adiabatic]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_omega_max")]
    pub omega_max: f64,
    #[serde(default = "default_omega_tar")]
    pub omega_tar: f64,
    #[serde(default)]
    pub t0: f64,
}

fn default_omega_max() -> f64 {
    150.0e3
}
fn default_omega_tar() -> f64 {
    2.82e3
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { omega_max: default_omega_max(), omega_tar: default_omega_tar(), t0: 0.0 }
    }
}

/// Ion in Hz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonConfig {
    #[serde(default = "default_omega_0")]
    pub omega_0: f64,
    #[serde(default = "default_omega_z")]
    pub omega_z: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_omega_0() -> f64 {
    411.042e12
}
fn default_omega_z() -> f64 {
    2.04e6
}
fn default_eta() -> f64 {
    0.05
}

impl Default for IonConfig {
    fn default() -> Self {
        IonConfig { omega_0: default_omega_0(), omega_z: default_omega_z(), eta: default_eta() }
    }
}

impl IonConfig {
    pub fn params(&self) -> IonParams {
        IonParams { omega_0: TWO_PI * self.omega_0, omega_z: TWO_PI * self.omega_z, eta: self.eta }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LintSection {
    #[serde(default = "default_nbar_max")]
    pub nbar_max: f64,
    /// Hz.
    #[serde(default = "default_ceiling")]
    pub rabi_ceiling: f64,
}

fn default_nbar_max() -> f64 {
    LintConfig::default().nbar_max
}
fn default_ceiling() -> f64 {
    LintConfig::default().rabi_ceiling / TWO_PI
}

impl Default for LintSection {
    fn default() -> Self {
        LintSection { nbar_max: default_nbar_max(), rabi_ceiling: default_ceiling() }
    }
}

impl LintSection {
    pub fn config(&self) -> LintConfig {
        LintConfig { nbar_max: self.nbar_max, rabi_ceiling: TWO_PI * self.rabi_ceiling, ..LintConfig::default() }
    }
}

/// `points` evenly spaced values from `start` to `stop` inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        qrm_core::protocols::scan_axis(self.start, self.stop, self.points)
    }

    fn check(&self, key: &str, problems: &mut Vec<String>) {
        if self.points == 0 {
            problems.push(format!("{key}.points: must be at least 1"));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) {
            problems.push(format!("{key}: start and stop must be finite"));
        } else if self.points > 1 && self.stop < self.start {
            problems.push(format!("{key}: stop must not be below start"));
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub t_probe: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// `Δ_Lσ/ω_a` axis.
    #[serde(default = "default_scan")]
    pub scan: Range,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_probe: Option<f64>,
    /// Probe durations by `Δ_Lσ/ω_a` window, instead of one `t_probe`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<SegmentConfig>,
}

fn default_scan() -> Range {
    let (start, stop, points) = qrm_core::protocols::DEFAULT_SCAN;
    Range { start, stop, points }
}

impl SpectrumConfig {
    pub fn plan(&self) -> Result<Vec<(f64, f64)>, CliError> {
        let deltas = self.scan.values();
        if self.segments.is_empty() {
            let t = self.t_probe.unwrap_or(0.0);
            return Ok(deltas.into_iter().map(|x| (x, t)).collect());
        }
        let segs: Vec<ScanSegment> =
            self.segments.iter().map(|s| ScanSegment { t_probe: s.t_probe, lo: s.lo, hi: s.hi }).collect();
        qrm_core::protocols::segment_plan(&deltas, &segs).map_err(|e| CliError::Config(vec![format!("spectrum.segments: {e}")]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundstateConfig {
    pub omega_sigma_over_omega_a: f64,
    pub thetas: Vec<f64>,
    pub lambda_over_omega_a: Range,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub theta: f64,
    pub lambda_over_omega_a: f64,
    pub omega_sigma_over_omega_a: f64,
    pub tau: f64,
    pub t_tot: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdiabaticConfig {
    pub paths: Vec<PathConfig>,
    /// Run with the `[noise]` channels; otherwise closed-system.
    #[serde(default)]
    pub with_noise: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyScanConfig {
    pub omega_sigma_over_omega_a: f64,
    pub theta: Range,
    pub lambda_over_omega_a: Vec<f64>,
    /// Hz; sets the scale of the shot-noise Stark shift.
    #[serde(default = "default_omega_tar")]
    pub omega_a: f64,
    /// `"natural"` or `"two"`.
    #[serde(default = "default_base")]
    pub log_base: String,
}

fn default_base() -> String {
    "natural".into()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerConfig {
    pub omega_sigma_over_omega_a: f64,
    pub lambda_over_omega_a: f64,
    pub theta: f64,
    #[serde(default = "default_chi_extent")]
    pub chi_extent: f64,
    #[serde(default = "default_chi_points")]
    pub chi_points: usize,
    #[serde(default = "default_wigner_extent")]
    pub wigner_extent: f64,
    #[serde(default = "default_pad")]
    pub pad: usize,
}

fn default_chi_extent() -> f64 {
    3.0
}
fn default_chi_points() -> usize {
    41
}
fn default_wigner_extent() -> f64 {
    4.0
}
fn default_pad() -> usize {
    4
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RwaConfig {
    /// Duration in periods of `2π/ω_a`.
    #[serde(default = "default_periods")]
    pub periods: f64,
    /// Integration steps; defaults to twice the minimum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

fn default_periods() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceTarget {
    Spectrum,
    Groundstate,
    Adiabatic,
}

impl ConvergenceTarget {
    pub fn experiment(self) -> Experiment {
        match self {
            ConvergenceTarget::Spectrum => Experiment::Spectrum,
            ConvergenceTarget::Groundstate => Experiment::Groundstate,
            ConvergenceTarget::Adiabatic => Experiment::Adiabatic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub target: ConvergenceTarget,
    /// Defaults to the run cutoff and 1.5 times it.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cutoffs: Vec<usize>,
    #[serde(default = "default_conv_tol")]
    pub tolerance: f64,
}

fn default_conv_tol() -> f64 {
    qrm_core::dynamics::CONVERGENCE_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub plots: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir(), format: Format::Both, plots: false }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(vec![e.to_string().trim_end().to_string()]))
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(mut msgs) => {
            for m in &mut msgs {
                *m = format!("{}: {m}", path.display());
            }
            CliError::Config(msgs)
        }
        other => other,
    })
}

pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("config serializes")
}

fn positive(key: &str, v: f64, problems: &mut Vec<String>) {
    if !(v > 0.0 && v.is_finite()) {
        problems.push(format!("{key}: must be positive"));
    }
}

fn non_negative(key: &str, v: f64, problems: &mut Vec<String>) {
    if !(v >= 0.0 && v.is_finite()) {
        problems.push(format!("{key}: must be non-negative"));
    }
}

fn theta_ok(key: &str, v: f64, problems: &mut Vec<String>) {
    if !(0.0..=PI).contains(&v) {
        problems.push(format!("{key}: theta must lie in [0, π]"));
    }
}

fn require<'a, T>(key: &str, v: &'a Option<T>, problems: &mut Vec<String>) -> Option<&'a T> {
    if v.is_none() {
        problems.push(format!("missing section [{key}]"));
    }
    v.as_ref()
}

impl RunConfig {
    pub fn cutoff_for(&self, exp: Experiment) -> usize {
        self.cutoff.unwrap_or(exp.default_cutoff())
    }

    pub fn noise_params(&self) -> NoiseParams {
        self.noise.unwrap_or_default().params()
    }

    pub fn ion_params(&self) -> IonParams {
        self.ion.unwrap_or_default().params()
    }

    pub fn drive_params(&self) -> Option<DriveParams> {
        self.drive.map(|d| DriveParams { omega_rabi: TWO_PI * d.omega_rabi, omega_l: TWO_PI * d.omega_l.unwrap_or(0.0) })
    }

    pub fn schedule_for(&self, path: &PathConfig) -> Result<Schedule, qrm_core::Error> {
        let s = self.schedule.unwrap_or_default();
        make_schedule(TWO_PI * s.omega_max, TWO_PI * s.omega_tar, path.tau, s.t0, path.t_tot)
    }

    /// Every invariant violation relevant to `exp`, with key paths.
    pub fn problems(&self, exp: Experiment) -> Vec<String> {
        let mut p = Vec::new();
        if let Some(declared) = self.experiment {
            let wrapped = exp == Experiment::Convergence
                && self.convergence.as_ref().is_some_and(|c| c.target.experiment() == declared);
            if declared != exp && !wrapped {
                p.push(format!("experiment: config declares `{declared}` but `{exp}` was requested"));
            }
        }
        if let Some(c) = self.cutoff {
            if c < 2 {
                p.push("cutoff: must be at least 2".into());
            }
        }
        if let Some(m) = &self.model {
            positive("model.omega_sigma", m.omega_sigma, &mut p);
            positive("model.omega_a", m.omega_a, &mut p);
            non_negative("model.lambda", m.lambda, &mut p);
            theta_ok("model.theta", m.theta, &mut p);
        }
        if let Some(d) = &self.drive {
            non_negative("drive.omega_rabi", d.omega_rabi, &mut p);
            if let Some(l) = d.omega_l {
                non_negative("drive.omega_l", l, &mut p);
            }
        }
        if let Some(n) = &self.noise {
            for (k, v) in [("tau1", n.tau1), ("tau2", n.tau2), ("gamma_heat", n.gamma_heat), ("nbar_init", n.nbar_init)] {
                if !(v >= 0.0) {
                    p.push(format!("noise.{k}: must be non-negative"));
                }
            }
        }
        if let Some(s) = &self.shot_noise {
            non_negative("shot_noise.intensity_cv", s.intensity_cv, &mut p);
            non_negative("shot_noise.ac_stark_max", s.ac_stark_max, &mut p);
            let [lo, hi] = s.nbar_range;
            if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                p.push("shot_noise.nbar_range: must be an interval [lo, hi] with 0 ≤ lo ≤ hi".into());
            }
            if s.sample_count == 0 {
                p.push("shot_noise.sample_count: must be at least 1".into());
            }
        }
        if let Some(s) = &self.schedule {
            positive("schedule.omega_tar", s.omega_tar, &mut p);
            if !(s.omega_max > s.omega_tar) {
                p.push("schedule.omega_max: must exceed omega_tar".into());
            }
            non_negative("schedule.t0", s.t0, &mut p);
        }
        if let Some(i) = &self.ion {
            positive("ion.omega_0", i.omega_0, &mut p);
            positive("ion.omega_z", i.omega_z, &mut p);
            positive("ion.eta", i.eta, &mut p);
        }
        if let Some(l) = &self.lint {
            non_negative("lint.nbar_max", l.nbar_max, &mut p);
            positive("lint.rabi_ceiling", l.rabi_ceiling, &mut p);
        }
        self.experiment_problems(exp, &mut p);
        p
    }

    fn experiment_problems(&self, exp: Experiment, p: &mut Vec<String>) {
        match exp {
            Experiment::Spectrum => {
                require("model", &self.model, p);
                require("drive", &self.drive, p);
                if let Some(s) = require("spectrum", &self.spectrum, p) {
                    self.check_spectrum(s, p);
                }
            }
            Experiment::Groundstate => {
                if let Some(g) = require("groundstate", &self.groundstate, p) {
                    positive("groundstate.omega_sigma_over_omega_a", g.omega_sigma_over_omega_a, p);
                    if g.thetas.is_empty() {
                        p.push("groundstate.thetas: must list at least one angle".into());
                    }
                    for (k, &t) in g.thetas.iter().enumerate() {
                        theta_ok(&format!("groundstate.thetas[{k}]"), t, p);
                    }
                    g.lambda_over_omega_a.check("groundstate.lambda_over_omega_a", p);
                    if g.lambda_over_omega_a.start < 0.0 {
                        p.push("groundstate.lambda_over_omega_a.start: must be non-negative".into());
                    }
                }
            }
            Experiment::Adiabatic => {
                if let Some(a) = require("adiabatic", &self.adiabatic, p) {
                    self.check_adiabatic(a, p);
                }
            }
            Experiment::EntropyScan => {
                if let Some(e) = require("entropy_scan", &self.entropy_scan, p) {
                    positive("entropy_scan.omega_sigma_over_omega_a", e.omega_sigma_over_omega_a, p);
                    positive("entropy_scan.omega_a", e.omega_a, p);
                    e.theta.check("entropy_scan.theta", p);
                    theta_ok("entropy_scan.theta.start", e.theta.start, p);
                    theta_ok("entropy_scan.theta.stop", e.theta.stop, p);
                    if e.lambda_over_omega_a.is_empty() {
                        p.push("entropy_scan.lambda_over_omega_a: must list at least one coupling".into());
                    }
                    for (k, &l) in e.lambda_over_omega_a.iter().enumerate() {
                        non_negative(&format!("entropy_scan.lambda_over_omega_a[{k}]"), l, p);
                    }
                    if e.log_base != "natural" && e.log_base != "two" {
                        p.push("entropy_scan.log_base: must be \"natural\" or \"two\"".into());
                    }
                }
            }
            Experiment::Wigner => {
                if let Some(w) = require("wigner", &self.wigner, p) {
                    positive("wigner.omega_sigma_over_omega_a", w.omega_sigma_over_omega_a, p);
                    non_negative("wigner.lambda_over_omega_a", w.lambda_over_omega_a, p);
                    theta_ok("wigner.theta", w.theta, p);
                    positive("wigner.chi_extent", w.chi_extent, p);
                    positive("wigner.wigner_extent", w.wigner_extent, p);
                    if w.chi_points < 3 || w.chi_points % 2 == 0 {
                        p.push("wigner.chi_points: must be odd and at least 3".into());
                    }
                    if w.pad == 0 {
                        p.push("wigner.pad: must be at least 1".into());
                    }
                }
            }
            Experiment::Compile => {
                require("model", &self.model, p);
            }
            Experiment::ValidateRwa => {
                require("model", &self.model, p);
                if let Some(r) = &self.rwa {
                    positive("rwa.periods", r.periods, p);
                    if r.steps == Some(0) {
                        p.push("rwa.steps: must be at least 1".into());
                    }
                }
            }
            Experiment::Convergence => {
                if let Some(c) = require("convergence", &self.convergence, p) {
                    if !c.cutoffs.is_empty() && c.cutoffs.len() < 2 {
                        p.push("convergence.cutoffs: need at least two cutoffs".into());
                    }
                    if c.cutoffs.iter().any(|&n| n < 2) {
                        p.push("convergence.cutoffs: every cutoff must be at least 2".into());
                    }
                    positive("convergence.tolerance", c.tolerance, p);
                    self.experiment_problems(c.target.experiment(), p);
                }
            }
        }
    }

    fn check_spectrum(&self, s: &SpectrumConfig, p: &mut Vec<String>) {
        s.scan.check("spectrum.scan", p);
        match (s.t_probe, s.segments.is_empty()) {
            (None, true) => p.push("spectrum: set t_probe or segments".into()),
            (Some(_), false) => p.push("spectrum: t_probe and segments are mutually exclusive".into()),
            (Some(t), true) => positive("spectrum.t_probe", t, p),
            (None, false) => {
                for (k, seg) in s.segments.iter().enumerate() {
                    positive(&format!("spectrum.segments[{k}].t_probe"), seg.t_probe, p);
                    if !(seg.hi > seg.lo) {
                        p.push(format!("spectrum.segments[{k}]: hi must exceed lo"));
                    }
                }
                if let Err(CliError::Config(msgs)) = s.plan() {
                    p.extend(msgs);
                }
            }
        }
    }

    fn check_adiabatic(&self, a: &AdiabaticConfig, p: &mut Vec<String>) {
        if a.paths.is_empty() {
            p.push("adiabatic.paths: must list at least one path".into());
        }
        for (k, path) in a.paths.iter().enumerate() {
            let key = format!("adiabatic.paths[{k}]");
            theta_ok(&format!("{key}.theta"), path.theta, p);
            non_negative(&format!("{key}.lambda_over_omega_a"), path.lambda_over_omega_a, p);
            positive(&format!("{key}.omega_sigma_over_omega_a"), path.omega_sigma_over_omega_a, p);
            if let Err(e) = self.schedule_for(path) {
                p.push(format!("{key}: {e}"));
            }
        }
    }

    pub fn validate(&self, exp: Experiment) -> Result<(), CliError> {
        let problems = self.problems(exp);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems))
        }
    }
}
