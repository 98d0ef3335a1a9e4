//! Experiment recipes: parity-probing spectrum scans, adiabatic ground-state
//! preparation, shot-to-shot noise ensembles and the rotating-wave check.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal, Uniform};

use crate::dynamics::{
    collapse_set, evolve, evolve_pure, evolve_pure_with, thermal_with_qubit, Method, NoiseParams, SolverConfig,
    StoreStates,
};
use crate::fock::{self, Axis, DensityMatrix, Operator, Qubit, SpaceSpec, StateVector, Subsystem};
use crate::linalg::{c, expm, CVector};
use crate::model::{
    assemble_hs, build_hs, build_total, ground_state, DriveParams, DriveTerm, Envelope, QrmParams,
    TimeDependentHamiltonian,
};
use crate::observables::{fidelity_pure, phonon_distribution_of, vn_entropy, LogBase};
use crate::pulse::{self, IonParams, ToneSpec};
use crate::{Error, Result, Warning};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PrepMode {
    /// `|0, g⟩` exactly.
    Ideal,
    /// Resonant carrier pulse of area `(π/2)(1 + area_error)` and phase `π`
    /// on `|0, ↓⟩`, mapped to the model basis by `S`.
    Pulsed { area_error: f64 },
}

/// Bare-basis qubit state after a resonant carrier pulse with phase `π` and
/// the given area acting on `|↓⟩`.
pub fn carrier_pulse(area: f64) -> Result<StateVector> {
    // H = (Ω/2)(e^{−iπ} σ† + h.c.) with Ω t = area
    let sp = fock::sigma_plus();
    let h = (&sp * c(-0.5, 0.0)) + sp.adjoint() * c(-0.5, 0.0);
    let u = expm(&(h * c(0.0, -area)))?;
    let down = CVector::from_column_slice(&[c(0.0, 0.0), c(1.0, 0.0)]);
    StateVector::normalized(u * down)
}

pub fn prepare_0g_state(space: SpaceSpec, mode: PrepMode) -> Result<StateVector> {
    match mode {
        PrepMode::Ideal => fock::basis_state(0, Qubit::Ground, space),
        PrepMode::Pulsed { area_error } => {
            let bare = carrier_pulse(PI / 2.0 * (1.0 + area_error))?;
            let qubit = pulse::s_matrix() * bare.as_vector();
            let vacuum = fock::fock_state(0, space)?;
            let mut v = CVector::zeros(space.total_dim());
            for s in 0..2 {
                for n in 0..space.fock_cutoff() {
                    v[s * space.fock_cutoff() + n] = qubit[s] * vacuum.as_vector()[n];
                }
            }
            StateVector::normalized(v)
        }
    }
}

pub fn prepare_0g(space: SpaceSpec, mode: PrepMode) -> Result<DensityMatrix> {
    Ok(prepare_0g_state(space, mode)?.projector())
}

/// One probe setting of a spectrum scan.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanPoint {
    /// `Δ_Lσ/ω_a`.
    pub delta: f64,
    pub omega_l: f64,
    pub t_probe: f64,
    pub mean_phonon: f64,
    pub distribution: Vec<f64>,
    /// Population of `|e⟩`.
    pub excited: f64,
    pub warning: Option<Warning>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    pub params: QrmParams,
    pub omega_rabi: f64,
    pub noise: NoiseParams,
    pub cutoff: usize,
    pub seed: Option<u64>,
    pub points: Vec<ScanPoint>,
}

impl ScanResult {
    pub fn deltas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.delta).collect()
    }

    pub fn mean_phonons(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_phonon).collect()
    }

    /// Largest `⟨a†a⟩` with `|Δ/ω_a − center| ≤ half_width`.
    pub fn window_max(&self, center: f64, half_width: f64) -> Option<&ScanPoint> {
        self.points
            .iter()
            .filter(|p| (p.delta - center).abs() <= half_width)
            .max_by(|a, b| a.mean_phonon.total_cmp(&b.mean_phonon))
    }

    /// Peaks of the points with `lo ≤ Δ/ω_a ≤ hi`.
    pub fn peaks_in(&self, lo: f64, hi: f64, min_prominence: f64) -> Vec<ScanPeak> {
        let sel: Vec<&ScanPoint> = self.points.iter().filter(|p| p.delta >= lo && p.delta <= hi).collect();
        let xs: Vec<f64> = sel.iter().map(|p| p.delta).collect();
        let ys: Vec<f64> = sel.iter().map(|p| p.mean_phonon).collect();
        find_peaks(&xs, &ys, min_prominence)
    }

    pub fn peaks(&self, min_prominence: f64) -> Vec<ScanPeak> {
        find_peaks(&self.deltas(), &self.mean_phonons(), min_prominence)
    }

    pub fn point_at(&self, delta: f64) -> Option<&ScanPoint> {
        self.points.iter().min_by(|a, b| (a.delta - delta).abs().total_cmp(&(b.delta - delta).abs()))
    }
}

/// Scan points per default: 61 over `[0.2, 3.4]`.
pub const DEFAULT_SCAN: (f64, f64, usize) = (0.2, 3.4, 61);
/// Minimum prominence (phonons) for a scan peak.
pub const PEAK_PROMINENCE: f64 = 0.1;

pub fn scan_axis(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return alloc::vec![lo];
    }
    (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect()
}

/// Probe window: points with `lo ≤ Δ/ω_a < hi` use `t_probe`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanSegment {
    pub t_probe: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Assigns each scan value the probe duration of the segment containing it.
/// The last segment also takes its upper edge.
pub fn segment_plan(deltas: &[f64], segments: &[ScanSegment]) -> Result<Vec<(f64, f64)>> {
    deltas
        .iter()
        .map(|&x| {
            segments
                .iter()
                .enumerate()
                .find(|(k, s)| x >= s.lo && (x < s.hi || (*k + 1 == segments.len() && x <= s.hi)))
                .map(|(_, s)| (x, s.t_probe))
                .ok_or_else(|| Error::invalid("segments", alloc::format!("no segment covers Δ/ω_a = {x}")))
        })
        .collect()
}

/// Probes the spectrum at one `Δ_Lσ/ω_a`: thermal `n̄` phonons with the qubit in
/// `|g⟩`, driven for `t_probe` with the collapse channels of `noise`.
pub fn spectrum_point(
    p: &QrmParams,
    omega_rabi: f64,
    delta: f64,
    t_probe: f64,
    noise: &NoiseParams,
    space: SpaceSpec,
) -> Result<ScanPoint> {
    if !(t_probe > 0.0) {
        return Err(Error::invalid("t_probe", "must be positive"));
    }
    noise.validate()?;
    let d = DriveParams::at_detuning(omega_rabi, p.omega_sigma, delta * p.omega_a);
    let h = build_total(p, &d, space)?;
    let ground = StateVector::new(CVector::from_column_slice(&[c(0.0, 0.0), c(1.0, 0.0)]))?;
    let rho0 = thermal_with_qubit(noise.nbar_init, &ground, space)?;
    let collapses = collapse_set(noise, space)?;
    let config = SolverConfig { samples: 2, store: StoreStates::FinalOnly, ..SolverConfig::default() }.with_noise(noise);
    let traj = evolve(&rho0, &h, &collapses, t_probe, &config, &[])?;
    let rho = traj.final_state();
    let dist = phonon_distribution_of(rho, space)?;
    let n = space.fock_cutoff();
    let excited = (0..n).map(|k| rho.as_matrix()[(k, k)].re).sum();
    Ok(ScanPoint {
        delta,
        omega_l: d.omega_l,
        t_probe,
        mean_phonon: dist.mean(),
        distribution: dist.probs,
        excited,
        warning: dist.warning,
    })
}

/// Sequential scan over `Δ_Lσ/ω_a` values with one probe duration each.
pub fn spectrum_scan_planned(
    p: &QrmParams,
    omega_rabi: f64,
    plan: &[(f64, f64)],
    noise: &NoiseParams,
    space: SpaceSpec,
) -> Result<ScanResult> {
    p.validate()?;
    let points = plan
        .iter()
        .map(|&(delta, t)| spectrum_point(p, omega_rabi, delta, t, noise, space))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanResult { params: *p, omega_rabi, noise: *noise, cutoff: space.fock_cutoff(), seed: None, points })
}

pub fn spectrum_scan(
    p: &QrmParams,
    omega_rabi: f64,
    deltas: &[f64],
    t_probe: f64,
    noise: &NoiseParams,
    space: SpaceSpec,
) -> Result<ScanResult> {
    let plan: Vec<(f64, f64)> = deltas.iter().map(|&x| (x, t_probe)).collect();
    spectrum_scan_planned(p, omega_rabi, &plan, noise, space)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanPeak {
    pub index: usize,
    pub x: f64,
    /// Smoothed height.
    pub value: f64,
    pub prominence: f64,
}

/// Interior local maxima of the 3-point-smoothed curve with topographic
/// prominence above `min_prominence`.
pub fn find_peaks(xs: &[f64], ys: &[f64], min_prominence: f64) -> Vec<ScanPeak> {
    let n = ys.len().min(xs.len());
    if n < 3 {
        return Vec::new();
    }
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            ys[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let mut out = Vec::new();
    for i in 1..n - 1 {
        if !(s[i] > s[i - 1] && s[i] >= s[i + 1]) {
            continue;
        }
        let mut left = s[i];
        for j in (0..i).rev() {
            if s[j] > s[i] {
                break;
            }
            left = left.min(s[j]);
        }
        let mut right = s[i];
        for &v in &s[i + 1..] {
            if v > s[i] {
                break;
            }
            right = right.min(v);
        }
        let prominence = s[i] - left.max(right);
        if prominence > min_prominence {
            out.push(ScanPeak { index: i, x: xs[i], value: s[i], prominence });
        }
    }
    out
}

/// Exponential ramp `ω_a(t) = (ω_max − ω_tar) e^{−(t−t0)/τ} + ω_tar`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub omega_max: f64,
    pub omega_tar: f64,
    pub tau: f64,
    pub t0: f64,
    pub t_tot: f64,
}

pub const OMEGA_MAX: f64 = 2.0 * PI * 150.0e3;
pub const OMEGA_TARGET: f64 = 2.0 * PI * 2.82e3;

pub fn make_schedule(omega_max: f64, omega_tar: f64, tau: f64, t0: f64, t_tot: f64) -> Result<Schedule> {
    if !(omega_tar > 0.0) {
        return Err(Error::invalid("omega_tar", "must be positive"));
    }
    if !(omega_max > omega_tar) {
        return Err(Error::invalid("omega_max", "must exceed omega_tar"));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", "must be positive"));
    }
    if !(t0 >= 0.0) {
        return Err(Error::invalid("t0", "must be non-negative"));
    }
    if !(t_tot > t0 && t_tot.is_finite()) {
        return Err(Error::invalid("t_tot", "must exceed t0"));
    }
    Ok(Schedule { omega_max, omega_tar, tau, t0, t_tot })
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        make_schedule(self.omega_max, self.omega_tar, self.tau, self.t0, self.t_tot).map(|_| ())
    }

    /// `ω_a` at absolute time `t`; held at `ω_max` before `t0`.
    pub fn omega_a(&self, t: f64) -> f64 {
        let dt = (t - self.t0).max(0.0);
        (self.omega_max - self.omega_tar) * (-dt / self.tau).exp() + self.omega_tar
    }

    pub fn duration(&self) -> f64 {
        self.t_tot - self.t0
    }

    /// The ramp as a function of time since `t0`.
    pub fn to_envelope(&self) -> Envelope {
        Envelope::Exponential { start: self.omega_max, end: self.omega_tar, tau: self.tau, t0: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrepResult {
    pub state: DensityMatrix,
    /// Present for closed-system runs.
    pub pure_state: Option<StateVector>,
    /// Uhlmann fidelity with the ground state at `t_tot`.
    pub fidelity: f64,
    /// Time since `t0` and fidelity against the instantaneous ground state.
    pub track: Vec<(f64, f64)>,
    pub schedule: Schedule,
    pub noise: Option<NoiseParams>,
    pub steps: usize,
}

/// `H_s` with `ω_a` following the schedule (time measured from `t0`).
pub fn ramp_hamiltonian(p: &QrmParams, s: &Schedule, space: SpaceSpec) -> Result<TimeDependentHamiltonian> {
    p.validate()?;
    s.validate()?;
    let fixed = assemble_hs(p.omega_sigma, 0.0, p.lambda, p.theta, space);
    let number = fock::on_boson(&fock::number(space), space)?;
    let scale = p.frequency_scale().max(s.omega_max);
    Ok(TimeDependentHamiltonian::constant(fixed, scale).with_term(DriveTerm {
        op: number,
        envelope: s.to_envelope(),
        add_conjugate: false,
    }))
}

/// Samples of the fidelity track returned by [`prepare_ground_adiabatic`].
pub const PREP_TRACK_SAMPLES: usize = 21;

/// Ramps `ω_a` from `ω_max` down to the target from `|0, g⟩` (or thermal
/// phonons with `|g⟩` when noise is given) and scores the final state against
/// the target ground state.
pub fn prepare_ground_adiabatic(
    p_target: &QrmParams,
    s: &Schedule,
    noise: Option<&NoiseParams>,
    space: SpaceSpec,
) -> Result<PrepResult> {
    if (p_target.omega_a - s.omega_tar).abs() > 1e-9 * s.omega_tar {
        return Err(Error::invalid("omega_a", "target omega_a must equal the schedule's omega_tar"));
    }
    let h = ramp_hamiltonian(p_target, s, space)?;
    let duration = s.duration();
    let instantaneous = |t: f64| ground_state(&h.evaluate(t)).map(|g| g.state);
    match noise {
        None => {
            let psi0 = prepare_0g_state(space, PrepMode::Ideal)?;
            let config = SolverConfig::default().with_samples(PREP_TRACK_SAMPLES);
            let mut track = Vec::with_capacity(PREP_TRACK_SAMPLES);
            let traj = evolve_pure_with(&psi0, &h, duration, &config, &[], |t, psi| {
                let gs = instantaneous(t)?;
                track.push((t, psi.inner(&gs).norm().min(1.0)));
                Ok(())
            })?;
            let psi = traj.final_state().clone();
            let fidelity = track.last().map(|x| x.1).unwrap_or(0.0);
            Ok(PrepResult {
                state: psi.projector(),
                pure_state: Some(psi),
                fidelity,
                track,
                schedule: *s,
                noise: None,
                steps: traj.steps,
            })
        }
        Some(n) => {
            n.validate()?;
            let ground = StateVector::new(CVector::from_column_slice(&[c(0.0, 0.0), c(1.0, 0.0)]))?;
            let rho0 = thermal_with_qubit(n.nbar_init, &ground, space)?;
            let collapses = collapse_set(n, space)?;
            let config = SolverConfig { store: StoreStates::All, ..SolverConfig::default() }
                .with_samples(PREP_TRACK_SAMPLES)
                .with_noise(n);
            let traj = evolve(&rho0, &h, &collapses, duration, &config, &[])?;
            let mut track = Vec::with_capacity(traj.states.len());
            for (t, rho) in &traj.states {
                track.push((*t, fidelity_pure(&instantaneous(*t)?, rho)?));
            }
            let fidelity = track.last().map(|x| x.1).unwrap_or(0.0);
            Ok(PrepResult {
                state: traj.final_state().clone(),
                pure_state: None,
                fidelity,
                track,
                schedule: *s,
                noise: Some(*n),
                steps: traj.steps,
            })
        }
    }
}

/// Von Neumann entropy of the qubit reduced state of `psi`.
pub fn qubit_entropy(psi: &StateVector, space: SpaceSpec, base: LogBase) -> Result<f64> {
    Ok(vn_entropy(&fock::partial_trace(&psi.projector(), Subsystem::Qubit, space)?, base))
}

/// Shot-to-shot fluctuation model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShotNoiseModel {
    /// Coefficient of variation of the laser intensity.
    pub intensity_cv: f64,
    /// Largest AC Stark shift (rad/s), taken as `3σ`.
    pub ac_stark_max: f64,
    pub nbar_range: (f64, f64),
    pub sample_count: usize,
    pub seed: u64,
}

impl Default for ShotNoiseModel {
    fn default() -> Self {
        ShotNoiseModel {
            intensity_cv: 0.0226,
            ac_stark_max: 2.0 * PI * 5.459e3,
            nbar_range: (0.0, 0.1),
            sample_count: 64,
            seed: 0,
        }
    }
}

impl ShotNoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.intensity_cv >= 0.0 && self.intensity_cv.is_finite()) {
            return Err(Error::invalid("intensity_cv", "must be non-negative"));
        }
        if !(self.ac_stark_max >= 0.0 && self.ac_stark_max.is_finite()) {
            return Err(Error::invalid("ac_stark_max", "must be non-negative"));
        }
        let (lo, hi) = self.nbar_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::invalid("nbar_range", "must be an interval within [0, ∞)"));
        }
        if self.sample_count == 0 {
            return Err(Error::invalid("sample_count", "must be at least 1"));
        }
        Ok(())
    }

    /// Noise-free model: every shot is nominal.
    pub fn quiet(nbar: f64, sample_count: usize) -> Self {
        ShotNoiseModel { intensity_cv: 0.0, ac_stark_max: 0.0, nbar_range: (nbar, nbar), sample_count, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShotSample {
    pub index: usize,
    /// Intensity factor `κ` multiplying `λ`, `Ω` and `ω_σ`.
    pub intensity: f64,
    /// AC Stark shift of the bare qubit transition (rad/s).
    pub stark: f64,
    pub nbar: f64,
}

impl ShotSample {
    pub fn nominal(nbar: f64) -> Self {
        ShotSample { index: 0, intensity: 1.0, stark: 0.0, nbar }
    }

    pub fn scale_params(&self, p: &QrmParams) -> QrmParams {
        QrmParams {
            omega_sigma: p.omega_sigma * self.intensity,
            lambda: p.lambda * self.intensity,
            ..*p
        }
    }

    pub fn scale_drive(&self, d: &DriveParams) -> DriveParams {
        DriveParams { omega_rabi: d.omega_rabi * self.intensity, ..*d }
    }

    /// The Stark shift `(δ/2) σ_z` of the bare qubit, which reads `−(δ/2) σ_y`
    /// in the model basis.
    pub fn stark_term(&self, space: SpaceSpec) -> Result<Operator> {
        fock::on_qubit(&(fock::pauli(Axis::Y) * c(-self.stark / 2.0, 0.0)), space)
    }

    /// Perturbed static Hamiltonian for this shot.
    pub fn hamiltonian(&self, p: &QrmParams, space: SpaceSpec) -> Result<Operator> {
        Ok(build_hs(&self.scale_params(p), space)? + self.stark_term(space)?)
    }
}

/// Draws shot `index` from its own ChaCha8 stream of `seed`.
pub fn draw_shot(model: &ShotNoiseModel, index: usize) -> Result<ShotSample> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(index as u64);
    let intensity = Normal::new(1.0, model.intensity_cv).map_err(|_| Error::invalid("intensity_cv", "bad"))?;
    let stark = Normal::new(0.0, model.ac_stark_max / 3.0).map_err(|_| Error::invalid("ac_stark_max", "bad"))?;
    let (lo, hi) = model.nbar_range;
    let nbar = Uniform::new_inclusive(lo, hi).map_err(|_| Error::invalid("nbar_range", "bad"))?;
    Ok(ShotSample {
        index,
        intensity: intensity.sample(&mut rng),
        stark: stark.sample(&mut rng),
        nbar: nbar.sample(&mut rng),
    })
}

pub fn draw_shots(model: &ShotNoiseModel) -> Result<Vec<ShotSample>> {
    model.validate()?;
    (0..model.sample_count).map(|k| draw_shot(model, k)).collect()
}

/// Per-observable mean and sample standard deviation over shots.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub samples: Vec<ShotSample>,
    pub values: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl EnsembleStats {
    /// Reduces per-shot observable vectors in shot order.
    pub fn from_results(samples: Vec<ShotSample>, values: Vec<Vec<f64>>) -> Result<Self> {
        let first = values.first().ok_or(Error::Empty("ensemble"))?;
        let m = first.len();
        if let Some(bad) = values.iter().find(|v| v.len() != m) {
            return Err(Error::DimensionMismatch { expected: m, found: bad.len() });
        }
        let k = values.len() as f64;
        let mean: Vec<f64> = (0..m).map(|j| values.iter().map(|v| v[j]).sum::<f64>() / k).collect();
        let std = (0..m)
            .map(|j| {
                if values.len() < 2 {
                    return 0.0;
                }
                let ss: f64 = values.iter().map(|v| (v[j] - mean[j]) * (v[j] - mean[j])).sum();
                (ss / (k - 1.0)).sqrt()
            })
            .collect();
        Ok(EnsembleStats { samples, values, mean, std })
    }

    pub fn standard_error(&self) -> Vec<f64> {
        let k = self.values.len() as f64;
        self.std.iter().map(|s| s / k.sqrt()).collect()
    }
}

/// Runs `protocol` once per shot, in shot order.
pub fn shot_noise_ensemble(
    model: &ShotNoiseModel,
    mut protocol: impl FnMut(&ShotSample) -> Result<Vec<f64>>,
) -> Result<EnsembleStats> {
    let samples = draw_shots(model)?;
    let values = samples.iter().map(&mut protocol).collect::<Result<Vec<_>>>()?;
    EnsembleStats::from_results(samples, values)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RwaReport {
    /// `1 − |⟨ψ_eff|S ψ_frame⟩|²` at the final time.
    pub infidelity: f64,
    /// Largest difference of `⟨a†a⟩` or `⟨σ_z⟩` over the sample times.
    pub max_deviation: f64,
    pub steps: usize,
    pub required_steps: usize,
}

/// Largest `h·ω` accepted by [`validate_rwa`].
pub const RWA_MAX_PHASE_STEP: f64 = 0.2;
const RWA_SAMPLES: usize = 41;

/// Steps needed to integrate the rotating-frame Hamiltonian of `spec`.
pub fn rwa_required_steps(spec: &ToneSpec, ion: &IonParams, omega_a: f64, duration: f64, space: SpaceSpec) -> Result<usize> {
    let h = pulse::frame_hamiltonian(&pulse::expand_terms(spec, ion, omega_a), omega_a, space)?;
    Ok(required_steps(&h, duration))
}

fn required_steps(h: &TimeDependentHamiltonian, duration: f64) -> usize {
    let fastest = h.terms.iter().map(|t| t.envelope.frequency()).fold(h.norm_bound(), f64::max);
    (duration * fastest / RWA_MAX_PHASE_STEP).ceil().max(1.0) as usize
}

/// Integrates the first-order Lamb-Dicke frame Hamiltonian of `spec` and the
/// effective `target` (model basis) from `|0, g⟩` and compares them.
pub fn validate_rwa_spec(
    spec: &ToneSpec,
    ion: &IonParams,
    omega_a: f64,
    target: &TimeDependentHamiltonian,
    duration: f64,
    steps: usize,
    space: SpaceSpec,
) -> Result<RwaReport> {
    ion.validate()?;
    if !(duration > 0.0) {
        return Err(Error::invalid("duration", "must be positive"));
    }
    let frame = pulse::frame_hamiltonian(&pulse::expand_terms(spec, ion, omega_a), omega_a, space)?;
    let required = required_steps(&frame, duration).max(required_steps(target, duration));
    if steps < required {
        return Err(Error::InsufficientResolution { steps, required });
    }
    let s_op = pulse::s_operator(space)?;
    let psi_eff0 = prepare_0g_state(space, PrepMode::Ideal)?;
    let psi_bare0 = StateVector::normalized(s_op.adjoint() * psi_eff0.as_vector())?;
    let config = SolverConfig {
        method: Method::Rk4,
        samples: RWA_SAMPLES,
        max_step: Some(duration / steps as f64),
        ..SolverConfig::default()
    };
    let number = fock::on_boson(&fock::number(space), space)?;
    let sz_eff = fock::on_qubit(&fock::pauli(Axis::Z), space)?;
    let sz_bare = s_op.adjoint() * &sz_eff * &s_op;
    let eff = evolve_pure(&psi_eff0, target, duration, &config, &[("n", &number), ("sz", &sz_eff)])?;
    let bare = evolve_pure(&psi_bare0, &frame, duration, &config, &[("n", &number), ("sz", &sz_bare)])?;
    let mapped = StateVector::normalized(&s_op * bare.final_state().as_vector())?;
    let overlap = eff.final_state().inner(&mapped).norm();
    let mut deviation: f64 = 0.0;
    for name in ["n", "sz"] {
        let (a, b) = (eff.track(name).unwrap_or(&[]), bare.track(name).unwrap_or(&[]));
        for (x, y) in a.iter().zip(b) {
            deviation = deviation.max((x - y).abs());
        }
    }
    Ok(RwaReport {
        infidelity: (1.0 - overlap * overlap).max(0.0),
        max_deviation: deviation,
        steps,
        required_steps: required,
    })
}

fn rwa_setup(
    p: &QrmParams,
    d: Option<&DriveParams>,
    ion: &IonParams,
    space: SpaceSpec,
) -> Result<(ToneSpec, TimeDependentHamiltonian)> {
    let mut spec = pulse::compile_tones(p, ion)?;
    let target = match d {
        Some(d) => {
            spec = spec.extend(pulse::compile_probe(d, ion)?);
            build_total(p, d, space)?
        }
        None => TimeDependentHamiltonian::constant(build_hs(p, space)?, p.frequency_scale()),
    };
    Ok((spec, target))
}

/// Smallest step count [`validate_rwa`] accepts for `duration`.
pub fn validate_rwa_required(
    p: &QrmParams,
    d: Option<&DriveParams>,
    ion: &IonParams,
    duration: f64,
    space: SpaceSpec,
) -> Result<usize> {
    let (spec, target) = rwa_setup(p, d, ion, space)?;
    let frame = pulse::frame_hamiltonian(&pulse::expand_terms(&spec, ion, p.omega_a), p.omega_a, space)?;
    Ok(required_steps(&frame, duration).max(required_steps(&target, duration)))
}

/// [`validate_rwa_spec`] for the compiled model tones (and probe, if any)
/// against the effective driven model.
pub fn validate_rwa(
    p: &QrmParams,
    d: Option<&DriveParams>,
    ion: &IonParams,
    duration: f64,
    steps: usize,
    space: SpaceSpec,
) -> Result<RwaReport> {
    let (spec, target) = rwa_setup(p, d, ion, space)?;
    validate_rwa_spec(&spec, ion, p.omega_a, &target, duration, steps, space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::thermal_state;
    use crate::model::dressed_resonance;
    use crate::observables::fidelity_states;
    use proptest::prelude::*;

    fn space(n: usize) -> SpaceSpec {
        SpaceSpec::new(n).unwrap()
    }

    #[test]
    fn ideal_prep_is_ground_vacuum() {
        let s = space(6);
        let rho = prepare_0g(s, PrepMode::Ideal).unwrap();
        let g0 = fock::basis_state(0, Qubit::Ground, s).unwrap();
        assert!((fidelity_pure(&g0, &rho).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_pulse_prepares_ground() {
        let s = space(6);
        let psi = prepare_0g_state(s, PrepMode::Pulsed { area_error: 0.0 }).unwrap();
        let g0 = fock::basis_state(0, Qubit::Ground, s).unwrap();
        assert!((fidelity_states(&g0, &psi).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pulse_area_error_follows_rotation_mismatch() {
        let s = space(4);
        let g0 = fock::basis_state(0, Qubit::Ground, s).unwrap();
        for eps in [0.01, -0.03, 0.2] {
            let psi = prepare_0g_state(s, PrepMode::Pulsed { area_error: eps }).unwrap();
            let pop = g0.inner(&psi).norm_sqr();
            let want = (PI * eps / 4.0).cos().powi(2);
            assert!((pop - want).abs() < 1e-12, "{eps}: {pop} vs {want}");
        }
    }

    #[test]
    fn pulsed_bare_state_is_plus_i_superposition() {
        // the π/2 pulse with phase π gives (|↓⟩ + i|↑⟩)/√2 in the (↑, ↓) basis
        let psi = carrier_pulse(PI / 2.0).unwrap();
        let r = core::f64::consts::FRAC_1_SQRT_2;
        assert!((psi.as_vector()[0] - c(0.0, r)).norm() < 1e-12);
        assert!((psi.as_vector()[1] - c(r, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn peak_finder() {
        let xs = scan_axis(0.0, 1.0, 21);
        let ys: Vec<f64> = xs.iter().map(|x| 0.1 + (-((x - 0.4) / 0.08f64).powi(2)).exp()).collect();
        let peaks = find_peaks(&xs, &ys, 0.1);
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].x - 0.4).abs() < 1e-12);
        // flat and monotone curves have none
        assert!(find_peaks(&xs, &[0.3; 21], 0.1).is_empty());
        assert!(find_peaks(&xs, &xs, 0.1).is_empty());
        // a small bump riding on a slope is not prominent
        let bumpy: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x + if i == 10 { 0.05 } else { 0.0 }).collect();
        assert!(find_peaks(&xs, &bumpy, 0.1).is_empty());
    }

    #[test]
    fn two_peaks_are_separated_by_prominence() {
        let xs = scan_axis(0.0, 3.0, 61);
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| (-((x - 1.0) / 0.1f64).powi(2)).exp() + 0.5 * (-((x - 2.0) / 0.1f64).powi(2)).exp())
            .collect();
        let peaks = find_peaks(&xs, &ys, 0.1);
        assert_eq!(peaks.len(), 2);
        assert!(peaks[1].prominence < peaks[0].prominence);
    }

    #[test]
    fn segment_plan_assigns_durations() {
        let segs = [
            ScanSegment { t_probe: 1.0, lo: 0.0, hi: 1.0 },
            ScanSegment { t_probe: 2.0, lo: 1.0, hi: 2.0 },
        ];
        let plan = segment_plan(&[0.0, 0.5, 1.0, 2.0], &segs).unwrap();
        assert_eq!(plan.iter().map(|p| p.1).collect::<Vec<_>>(), [1.0, 1.0, 2.0, 2.0]);
        assert!(segment_plan(&[2.5], &segs).is_err());
    }

    #[test]
    fn uncoupled_spectrum_is_flat() {
        let wa = 2.0 * PI * 25e3;
        let p = QrmParams { omega_sigma: 4.32 * wa, omega_a: wa, lambda: 0.0, theta: PI / 2.0 };
        let noise = NoiseParams::default();
        let t = 200e-6;
        let scan = spectrum_scan(&p, 0.95 * wa, &[0.5, 1.76, 3.0], t, &noise, space(8)).unwrap();
        // symmetric heating adds γ t phonons on top of n̄
        let expected = noise.nbar_init + noise.gamma_heat * t;
        for pt in &scan.points {
            assert!((pt.mean_phonon - expected).abs() < 1e-4, "{}", pt.mean_phonon);
            assert!((pt.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        assert!(scan.peaks(PEAK_PROMINENCE).is_empty());
    }

    #[test]
    fn scan_point_rejects_bad_duration() {
        let p = QrmParams { omega_sigma: 4.0, omega_a: 1.0, lambda: 0.1, theta: 0.0 };
        assert!(spectrum_point(&p, 0.5, 1.0, 0.0, &NoiseParams::noiseless(), space(4)).is_err());
    }

    #[test]
    fn short_resonant_probe_excites_more_than_off_resonant() {
        let wa = 2.0 * PI * 25e3;
        let p = QrmParams { omega_sigma: 4.32 * wa, omega_a: wa, lambda: 0.27 * wa, theta: PI / 2.0 };
        let om = 0.95;
        let res = dressed_resonance(2, 1.0, om).unwrap();
        let noise = NoiseParams::noiseless();
        let on = spectrum_point(&p, om * wa, res, 150e-6, &noise, space(10)).unwrap();
        let off = spectrum_point(&p, om * wa, 2.6, 150e-6, &noise, space(10)).unwrap();
        assert!(on.mean_phonon > off.mean_phonon);
    }

    #[test]
    fn schedule_definition() {
        let s = make_schedule(OMEGA_MAX, OMEGA_TARGET, 40e-6, 0.0, 100e-6).unwrap();
        assert_eq!(s.omega_a(0.0), OMEGA_MAX);
        let at_tau = OMEGA_TARGET + (OMEGA_MAX - OMEGA_TARGET) / core::f64::consts::E;
        assert!((s.omega_a(40e-6) - at_tau).abs() < 1e-9 * OMEGA_MAX);
        assert!((s.omega_a(1.0) - OMEGA_TARGET).abs() < 1e-9 * OMEGA_TARGET);
        assert!((s.to_envelope().value(40e-6).re - at_tau).abs() < 1e-9 * OMEGA_MAX);
    }

    #[test]
    fn schedule_rejects_invariant_violations() {
        assert!(make_schedule(1.0, 2.0, 1.0, 0.0, 1.0).is_err());
        assert!(make_schedule(2.0, 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(make_schedule(2.0, 1.0, 0.0, 0.0, 1.0).is_err());
        assert!(make_schedule(2.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(make_schedule(2.0, 1.0, 1.0, -1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn schedule_is_monotone(tau in 1e-6f64..1e-3, a in 0.0f64..1e-3, b in 0.0f64..1e-3) {
            let s = make_schedule(OMEGA_MAX, OMEGA_TARGET, tau, 0.0, 2e-3).unwrap();
            let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(s.omega_a(t1) >= s.omega_a(t2));
        }
    }

    #[test]
    fn uncoupled_ramp_keeps_ground_vacuum() {
        let p = QrmParams { omega_sigma: 4.5 * OMEGA_TARGET, omega_a: OMEGA_TARGET, lambda: 0.0, theta: PI / 2.0 };
        let s = make_schedule(OMEGA_MAX, OMEGA_TARGET, 10e-6, 0.0, 30e-6).unwrap();
        let r = prepare_ground_adiabatic(&p, &s, None, space(10)).unwrap();
        assert!((r.fidelity - 1.0).abs() < 1e-9);
        assert!(r.track.iter().all(|&(_, f)| (f - 1.0).abs() < 1e-9));
        assert_eq!(r.track.len(), PREP_TRACK_SAMPLES);
    }

    #[test]
    fn adiabatic_prep_requires_matching_target() {
        let p = QrmParams { omega_sigma: 4.5, omega_a: 1.0, lambda: 0.1, theta: 0.0 };
        let s = make_schedule(OMEGA_MAX, OMEGA_TARGET, 10e-6, 0.0, 30e-6).unwrap();
        assert!(prepare_ground_adiabatic(&p, &s, None, space(4)).is_err());
    }

    #[test]
    fn slower_ramp_is_more_adiabatic() {
        let wa = OMEGA_TARGET;
        let p = QrmParams { omega_sigma: 4.5 * wa, omega_a: wa, lambda: 1.0 * wa, theta: PI / 6.0 };
        let fast = make_schedule(OMEGA_MAX, wa, 10e-6, 0.0, 40e-6).unwrap();
        let slow = make_schedule(OMEGA_MAX, wa, 40e-6, 0.0, 160e-6).unwrap();
        let f_fast = prepare_ground_adiabatic(&p, &fast, None, space(20)).unwrap().fidelity;
        let f_slow = prepare_ground_adiabatic(&p, &slow, None, space(20)).unwrap().fidelity;
        assert!(f_slow >= f_fast, "{f_slow} < {f_fast}");
    }

    #[test]
    fn noisy_prep_is_a_valid_state() {
        let wa = OMEGA_TARGET;
        let p = QrmParams { omega_sigma: 4.5 * wa, omega_a: wa, lambda: 0.5 * wa, theta: PI / 6.0 };
        let s = make_schedule(OMEGA_MAX, wa, 10e-6, 0.0, 30e-6).unwrap();
        let r = prepare_ground_adiabatic(&p, &s, Some(&NoiseParams::default()), space(8)).unwrap();
        assert!(r.pure_state.is_none());
        assert!((0.0..=1.0).contains(&r.fidelity));
        assert!((r.state.trace().re - 1.0).abs() < 1e-7);
    }

    #[test]
    fn quiet_ensemble_has_zero_spread() {
        let model = ShotNoiseModel::quiet(0.05, 5);
        let stats = shot_noise_ensemble(&model, |s| Ok(alloc::vec![s.intensity, s.stark, s.nbar])).unwrap();
        assert_eq!(stats.mean, [1.0, 0.0, 0.05]);
        assert!(stats.std.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn ensemble_is_reproducible_and_stream_indexed() {
        let model = ShotNoiseModel { sample_count: 8, seed: 42, ..ShotNoiseModel::default() };
        let a = draw_shots(&model).unwrap();
        let b = draw_shots(&model).unwrap();
        assert_eq!(a, b);
        // shot k does not depend on how many shots are drawn
        let bigger = draw_shots(&ShotNoiseModel { sample_count: 16, ..model }).unwrap();
        assert_eq!(&bigger[..8], &a[..]);
        assert_ne!(a[0], a[1]);
        assert!(a.iter().all(|s| (0.0..=0.1).contains(&s.nbar)));
    }

    #[test]
    fn ensemble_statistics_match_the_model() {
        let model = ShotNoiseModel { sample_count: 4000, seed: 7, ..ShotNoiseModel::default() };
        let stats = shot_noise_ensemble(&model, |s| Ok(alloc::vec![s.intensity, s.stark, s.nbar])).unwrap();
        assert!((stats.mean[0] - 1.0).abs() < 4.0 * 0.0226 / 4000f64.sqrt());
        assert!((stats.std[0] / 0.0226 - 1.0).abs() < 0.05);
        assert!((stats.std[1] / (model.ac_stark_max / 3.0) - 1.0).abs() < 0.05);
        assert!((stats.mean[2] - 0.05).abs() < 0.003);
    }

    #[test]
    fn ensemble_mean_converges() {
        let wa = OMEGA_TARGET;
        let p = QrmParams { omega_sigma: 4.5 * wa, omega_a: wa, lambda: 0.5 * wa, theta: PI / 6.0 };
        let s = space(12);
        let run = |count: usize| {
            let model = ShotNoiseModel { sample_count: count, seed: 3, ..ShotNoiseModel::default() };
            shot_noise_ensemble(&model, |shot| {
                let gs = ground_state(&shot.hamiltonian(&p, s)?)?;
                Ok(alloc::vec![qubit_entropy(&gs.state, s, LogBase::Natural)?])
            })
            .unwrap()
        };
        let small = run(40);
        let large = run(80);
        assert!((small.mean[0] - large.mean[0]).abs() < 2.0 * small.standard_error()[0]);
    }

    #[test]
    fn stark_shift_is_bare_sigma_z() {
        let s = space(3);
        let shot = ShotSample { index: 0, intensity: 1.0, stark: 2.0, nbar: 0.0 };
        let s_op = pulse::s_operator(s).unwrap();
        let bare = s_op.adjoint() * shot.stark_term(s).unwrap() * &s_op;
        let want = fock::on_qubit(&fock::pauli(Axis::Z), s).unwrap();
        assert!(crate::linalg::frobenius(&(bare - want)) < 1e-12);
    }

    #[test]
    fn empty_ensemble_is_rejected() {
        assert!(EnsembleStats::from_results(Vec::new(), Vec::new()).is_err());
        assert!(draw_shots(&ShotNoiseModel { sample_count: 0, ..ShotNoiseModel::default() }).is_err());
    }

    fn fig2a() -> (QrmParams, IonParams) {
        let wa = 2.0 * PI * 25e3;
        (QrmParams { omega_sigma: 4.32 * wa, omega_a: wa, lambda: 0.27 * wa, theta: PI / 2.0 }, IonParams::reference())
    }

    #[test]
    fn rwa_free_evolution_is_exact() {
        let (p, ion) = fig2a();
        let s = space(6);
        let mut spec = pulse::compile_tones(&p, &ion).unwrap();
        for t in &mut spec.tones {
            t.rabi_rate = 0.0;
        }
        let free = TimeDependentHamiltonian::constant(
            fock::on_boson(&fock::number(s), s).unwrap() * c(p.omega_a, 0.0),
            p.omega_a,
        );
        let period = 2.0 * PI / p.omega_a;
        let steps = rwa_required_steps(&spec, &ion, p.omega_a, period, s).unwrap();
        let r = validate_rwa_spec(&spec, &ion, p.omega_a, &free, period, steps, s).unwrap();
        assert!(r.infidelity < 1e-12 && r.max_deviation < 1e-12);
    }

    #[test]
    fn rwa_refuses_coarse_steps() {
        let (p, ion) = fig2a();
        let period = 2.0 * PI / p.omega_a;
        match validate_rwa(&p, None, &ion, period, 100, space(6)) {
            Err(Error::InsufficientResolution { steps: 100, required }) => assert!(required > 100),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rwa_probe_only_matches_cosine_drive() {
        let wa = 2.0 * PI * 25e3;
        let ion = IonParams::reference();
        let d = DriveParams { omega_rabi: 0.95 * wa, omega_l: 6.0 * wa };
        let s = space(4);
        let spec = pulse::compile_probe(&d, &ion).unwrap();
        let sx = fock::on_qubit(&fock::pauli(Axis::X), s).unwrap();
        let target = TimeDependentHamiltonian::constant(fock::on_boson(&fock::number(s), s).unwrap() * c(wa, 0.0), wa)
            .with_term(DriveTerm {
                op: sx,
                envelope: Envelope::Cosine { amplitude: d.omega_rabi, omega: d.omega_l, phase: 0.0 },
                add_conjugate: false,
            });
        let duration = 10.0 * 2.0 * PI / d.omega_l;
        let steps = 2 * rwa_required_steps(&spec, &ion, wa, duration, s).unwrap();
        let r = validate_rwa_spec(&spec, &ion, wa, &target, duration, steps, s).unwrap();
        assert!(r.infidelity < 1e-3, "{}", r.infidelity);
    }

    #[test]
    fn rwa_degrades_as_the_mode_separation_shrinks() {
        let (p, ion) = fig2a();
        let s = space(10);
        let period = 2.0 * PI / p.omega_a;
        let side = 2.0 * p.lambda / ion.eta;
        let mut last = 0.0;
        for ratio in [40.0, 10.0, 3.0] {
            let ion = IonParams { omega_z: p.omega_a + ratio * side, ..ion };
            let spec = pulse::compile_tones(&p, &ion).unwrap();
            let steps = rwa_required_steps(&spec, &ion, p.omega_a, period, s).unwrap();
            let r = validate_rwa(&p, None, &ion, period, steps, s).unwrap();
            assert!(r.infidelity > last, "ratio {ratio}: {} <= {last}", r.infidelity);
            last = r.infidelity;
        }
    }

    #[test]
    fn thermal_spectrum_start_matches_nbar() {
        let s = space(12);
        let rho = thermal_state(0.05, s).unwrap();
        let mean: f64 = (0..12).map(|n| n as f64 * rho.as_matrix()[(n, n)].re).sum();
        assert!((mean - 0.05).abs() < 1e-9);
    }
}
