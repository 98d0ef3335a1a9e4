//! Lindblad and Schrödinger time evolution.
//!
//! The master equation
//!
//! ```text
//! ρ̇ = −i[H(t), ρ] + Σ_n (C_n ρ C_n† − ½{C_n† C_n, ρ})
//! ```
//!
//! is evaluated as `G + G† + Σ C ρ C†` with `G = −i H_eff ρ` and
//! `H_eff = H − (i/2) Σ C†C`, applying the (very sparse) operators directly to
//! the column-major density matrix.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::fock::{self, DensityMatrix, Operator, SpaceSpec, StateVector};
use crate::linalg::{c, CMatrix, CVector, SparseOp, C64, ZERO};
use crate::model::{Envelope, TimeDependentHamiltonian};
use crate::{Error, Result};

/// Decoherence channels and initial phonon occupation.
///
/// Infinite times (or a zero rate) switch the corresponding channel off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseParams {
    /// Qubit dephasing time (s).
    pub tau1: f64,
    /// Phonon dephasing time (s).
    pub tau2: f64,
    /// Heating rate `γ(n_th) ≈ γ(n_th + 1)` (1/s).
    pub gamma_heat: f64,
    /// Mean thermal phonon number of the initial state.
    pub nbar_init: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams { tau1: 1.5e-3, tau2: 8.0e-3, gamma_heat: 60.0, nbar_init: 0.05 }
    }
}

impl NoiseParams {
    pub fn noiseless() -> Self {
        NoiseParams { tau1: f64::INFINITY, tau2: f64::INFINITY, gamma_heat: 0.0, nbar_init: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("tau1", self.tau1),
            ("tau2", self.tau2),
            ("gamma_heat", self.gamma_heat),
            ("nbar_init", self.nbar_init),
        ];
        for (name, v) in checks {
            if !(v >= 0.0) {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        Ok(())
    }

    /// Shortest decoherence time scale, infinite for a closed system.
    pub fn coherence_time(&self) -> f64 {
        let heat = if self.gamma_heat > 0.0 { 1.0 / self.gamma_heat } else { f64::INFINITY };
        self.tau1.min(self.tau2).min(heat)
    }
}

fn rate(tau: f64) -> f64 {
    if tau.is_finite() && tau > 0.0 {
        1.0 / tau
    } else if tau == 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// `[√(1/τ₁) σ_z, √(1/τ₂) a†a, √γ a†, √γ a]` embedded in the composite space,
/// with channels of zero strength dropped.
pub fn collapse_set(n: &NoiseParams, space: SpaceSpec) -> Result<Vec<Operator>> {
    n.validate()?;
    let a = fock::annihilator(space);
    let candidates = [
        (rate(n.tau1), fock::on_qubit(&fock::pauli(fock::Axis::Z), space)?),
        (rate(n.tau2), fock::on_boson(&fock::number(space), space)?),
        (n.gamma_heat, fock::on_boson(&a.adjoint(), space)?),
        (n.gamma_heat, fock::on_boson(&a, space)?),
    ];
    let mut out = Vec::new();
    for (r, op) in candidates {
        if !r.is_finite() {
            return Err(Error::invalid("noise", "decoherence times must be positive"));
        }
        if r > 0.0 {
            out.push(op * c(r.sqrt(), 0.0));
        }
    }
    Ok(out)
}

/// Boson-only thermal state `P(n) = n̄ⁿ/(1+n̄)^{n+1}`, renormalized on the
/// kept levels.
pub fn thermal_state(nbar: f64, space: SpaceSpec) -> Result<DensityMatrix> {
    let p = thermal_populations(nbar, space.fock_cutoff())?;
    let n = p.len();
    let m = CMatrix::from_fn(n, n, |i, j| if i == j { c(p[i], 0.0) } else { ZERO });
    Ok(DensityMatrix::new_unchecked(m))
}

pub fn thermal_populations(nbar: f64, cutoff: usize) -> Result<Vec<f64>> {
    if !(nbar >= 0.0 && nbar.is_finite()) {
        return Err(Error::invalid("nbar", "must be non-negative"));
    }
    let ratio = nbar / (1.0 + nbar);
    let mut p = Vec::with_capacity(cutoff);
    let mut term = 1.0 / (1.0 + nbar);
    for _ in 0..cutoff {
        p.push(term);
        term *= ratio;
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    Ok(p)
}

/// `ρ_qubit ⊗ thermal(n̄)` on the composite space.
pub fn thermal_with_qubit(nbar: f64, qubit: &StateVector, space: SpaceSpec) -> Result<DensityMatrix> {
    if qubit.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: qubit.dim() });
    }
    Ok(qubit.projector().tensor(&thermal_state(nbar, space)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    /// Classical fourth-order Runge-Kutta with steps aligned to sample times.
    Rk4,
    /// Dormand-Prince 5(4) with error control.
    Adaptive { rtol: f64, atol: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StoreStates {
    FinalOnly,
    All,
    Every(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    /// Number of uniformly spaced output times, including `t = 0` and `t_final`.
    pub samples: usize,
    /// Explicit step cap; when `None` the step follows
    /// `min(2π/(50·ω_scale), coherence_time/10⁴)`.
    pub max_step: Option<f64>,
    /// Shortest decoherence time of the run (see [`NoiseParams::coherence_time`]).
    pub coherence_time: f64,
    pub trace_tol: f64,
    pub store: StoreStates,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Rk4,
            samples: 200,
            max_step: None,
            coherence_time: f64::INFINITY,
            trace_tol: 1e-7,
            store: StoreStates::FinalOnly,
        }
    }
}

impl SolverConfig {
    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_noise(mut self, noise: &NoiseParams) -> Self {
        self.coherence_time = noise.coherence_time();
        self
    }

    /// Step cap for a generator with largest model frequency `omega` and
    /// Gershgorin bound `norm`.
    ///
    /// The frequency rule uses `max(omega, norm)`: RK4 damps an oscillation
    /// at `ω` by roughly `(ω h)⁶/144` per step, so the whole kept spectrum has
    /// to be resolved, not only the bare model frequencies.
    fn step_cap(&self, omega: f64, norm: f64) -> f64 {
        if let Some(h) = self.max_step {
            return h;
        }
        let mut cap = f64::INFINITY;
        let scale = omega.max(norm);
        if scale > 0.0 {
            cap = cap.min(2.0 * PI / (50.0 * scale));
        }
        if self.coherence_time.is_finite() {
            cap = cap.min(self.coherence_time / 1e4);
        }
        cap
    }
}

/// Named real-valued observable track.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Stored states and the times they belong to; always ends with the final state.
    pub states: Vec<(f64, DensityMatrix)>,
    pub tracks: Vec<Track>,
    pub steps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &DensityMatrix {
        &self.states.last().expect("trajectory always stores its final state").1
    }

    pub fn track(&self, name: &str) -> Option<&[f64]> {
        self.tracks.iter().find(|t| t.name == name).map(|t| t.values.as_slice())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PureTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<(f64, StateVector)>,
    pub tracks: Vec<Track>,
    pub steps: usize,
}

impl PureTrajectory {
    pub fn final_state(&self) -> &StateVector {
        &self.states.last().expect("trajectory always stores its final state").1
    }

    pub fn track(&self, name: &str) -> Option<&[f64]> {
        self.tracks.iter().find(|t| t.name == name).map(|t| t.values.as_slice())
    }
}

pub(crate) fn sample_times(t_final: f64, samples: usize) -> Vec<f64> {
    let n = samples.max(2);
    (0..n).map(|k| if k + 1 == n { t_final } else { t_final * k as f64 / (n - 1) as f64 }).collect()
}

trait Rhs {
    fn eval(&mut self, t: f64, y: &[C64], dy: &mut [C64]);

    /// Maps `y` back onto the invariant set after an accepted step.
    fn project(&self, _y: &mut [C64]) {}
}

struct TimeTerm {
    op: SparseOp,
    adjoint: Option<SparseOp>,
    envelope: Envelope,
}

/// `−i H(t)` (plus the anti-Hermitian decay part for the master equation)
/// as a static sparse generator and a list of enveloped terms.
struct Generator {
    fixed: SparseOp,
    terms: Vec<TimeTerm>,
}

impl Generator {
    fn new(h: &TimeDependentHamiltonian, decay: Option<&CMatrix>) -> Self {
        let minus_i = c(0.0, -1.0);
        let mut fixed = &h.static_part * minus_i;
        if let Some(d) = decay {
            fixed -= d * c(0.5, 0.0);
        }
        let terms = h
            .terms
            .iter()
            .map(|t| TimeTerm {
                op: SparseOp::from_dense(&(&t.op * minus_i)),
                adjoint: t.add_conjugate.then(|| SparseOp::from_dense(&(t.op.adjoint() * minus_i))),
                envelope: t.envelope,
            })
            .collect();
        Generator { fixed: SparseOp::from_dense(&fixed), terms }
    }

    fn apply_dense(&self, t: f64, x: &[C64], out: &mut [C64]) {
        out.fill(ZERO);
        self.fixed.mul_dense_acc(x, out);
        for term in &self.terms {
            let f = term.envelope.value(t);
            term.op.mul_dense_scaled_acc(f, x, out);
            if let Some(adj) = &term.adjoint {
                adj.mul_dense_scaled_acc(f.conj(), x, out);
            }
        }
    }

    fn apply_vec(&self, t: f64, x: &[C64], out: &mut [C64]) {
        out.fill(ZERO);
        self.fixed.mul_vec_acc(x, out);
        for term in &self.terms {
            let f = term.envelope.value(t);
            term.op.mul_vec_scaled_acc(f, x, out);
            if let Some(adj) = &term.adjoint {
                adj.mul_vec_scaled_acc(f.conj(), x, out);
            }
        }
    }
}

struct Lindblad {
    dim: usize,
    generator: Generator,
    jumps: Vec<SparseOp>,
    scratch: Vec<C64>,
}

impl Rhs for Lindblad {
    fn eval(&mut self, t: f64, y: &[C64], dy: &mut [C64]) {
        let d = self.dim;
        self.generator.apply_dense(t, y, &mut self.scratch);
        let g = &self.scratch;
        for j in 0..d {
            for i in 0..d {
                dy[i + j * d] = g[i + j * d] + g[j + i * d].conj();
            }
        }
        for jump in &self.jumps {
            jump.sandwich_acc(y, dy);
        }
    }

    // `eval` assumes a Hermitian argument. A round-off anti-Hermitian part A
    // would evolve under Σ C A C† alone, without the −½{K, A} damping, and
    // grow like e^{n m t/τ₂} under number-operator dephasing.
    fn project(&self, y: &mut [C64]) {
        let d = self.dim;
        for j in 0..d {
            y[j + j * d].im = 0.0;
            for i in j + 1..d {
                let m = (y[i + j * d] + y[j + i * d].conj()) * 0.5;
                y[i + j * d] = m;
                y[j + i * d] = m.conj();
            }
        }
    }
}

struct Schrodinger {
    generator: Generator,
}

impl Rhs for Schrodinger {
    fn eval(&mut self, t: f64, y: &[C64], dy: &mut [C64]) {
        self.generator.apply_vec(t, y, dy);
    }
}

fn axpy(out: &mut [C64], y: &[C64], h: f64, k: &[C64]) {
    let h = c(h, 0.0);
    for ((o, &yi), &ki) in out.iter_mut().zip(y).zip(k) {
        *o = yi + h * ki;
    }
}

struct Rk4State {
    k: [Vec<C64>; 4],
    tmp: Vec<C64>,
}

impl Rk4State {
    fn new(n: usize) -> Self {
        Rk4State { k: [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]], tmp: vec![ZERO; n] }
    }

    fn step<R: Rhs>(&mut self, rhs: &mut R, t: f64, h: f64, y: &mut [C64]) {
        let [k1, k2, k3, k4] = &mut self.k;
        rhs.eval(t, y, k1);
        axpy(&mut self.tmp, y, h / 2.0, k1);
        rhs.eval(t + h / 2.0, &self.tmp, k2);
        axpy(&mut self.tmp, y, h / 2.0, k2);
        rhs.eval(t + h / 2.0, &self.tmp, k3);
        axpy(&mut self.tmp, y, h, k3);
        rhs.eval(t + h, &self.tmp, k4);
        let w = c(h / 6.0, 0.0);
        for i in 0..y.len() {
            y[i] += w * (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]);
        }
    }
}

// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct DpState {
    k: Vec<Vec<C64>>,
    tmp: Vec<C64>,
    fsal_valid: bool,
}

impl DpState {
    fn new(n: usize) -> Self {
        DpState { k: (0..7).map(|_| vec![ZERO; n]).collect(), tmp: vec![ZERO; n], fsal_valid: false }
    }

    /// Attempts one step; on acceptance `y` is advanced and the scaled error
    /// norm (≤ 1) returned, otherwise `y` is untouched.
    fn try_step<R: Rhs>(&mut self, rhs: &mut R, t: f64, h: f64, y: &mut [C64], rtol: f64, atol: f64) -> f64 {
        if !self.fsal_valid {
            rhs.eval(t, y, &mut self.k[0]);
        }
        for s in 1..7 {
            self.tmp.copy_from_slice(y);
            for (j, &a) in DP_A[s].iter().enumerate().take(s) {
                if a != 0.0 {
                    let w = c(h * a, 0.0);
                    for (o, &kj) in self.tmp.iter_mut().zip(&self.k[j]) {
                        *o += w * kj;
                    }
                }
            }
            let (_, rest) = self.k.split_at_mut(s);
            rhs.eval(t + DP_C[s] * h, &self.tmp, &mut rest[0]);
        }
        // tmp now holds the 5th-order solution (stage 7 abscissa is the step end)
        let mut acc = 0.0;
        for (i, (yi, yt)) in y.iter().zip(&self.tmp).enumerate() {
            let mut e = ZERO;
            for (k, &w) in self.k.iter().zip(&DP_E) {
                if w != 0.0 {
                    e += k[i] * w;
                }
            }
            let scale = atol + rtol * yi.norm().max(yt.norm());
            acc += (e * h).norm_sqr() / (scale * scale);
        }
        let err = (acc / y.len() as f64).sqrt();
        if err <= 1.0 {
            y.copy_from_slice(&self.tmp);
            self.k.swap(0, 6);
        }
        // on rejection k[0] still belongs to (t, y)
        self.fsal_valid = true;
        err
    }
}

/// Integrates `y` through `times`, calling `observe` at every sample.
fn integrate<R: Rhs>(
    rhs: &mut R,
    y: &mut [C64],
    times: &[f64],
    method: Method,
    cap: f64,
    mut observe: impl FnMut(usize, f64, &[C64]) -> Result<()>,
) -> Result<usize> {
    observe(0, times[0], y)?;
    let mut steps = 0;
    match method {
        Method::Rk4 => {
            let mut st = Rk4State::new(y.len());
            for (idx, w) in times.windows(2).enumerate() {
                let span = w[1] - w[0];
                let n = ((span / cap) - 1e-9).ceil().max(1.0) as usize;
                let h = span / n as f64;
                for k in 0..n {
                    st.step(rhs, w[0] + k as f64 * h, h, y);
                    rhs.project(y);
                }
                steps += n;
                observe(idx + 1, w[1], y)?;
            }
        }
        Method::Adaptive { rtol, atol } => {
            let mut st = DpState::new(y.len());
            let t_end = *times.last().unwrap_or(&0.0);
            let min_step = 1e-14 * t_end.abs().max(f64::MIN_POSITIVE);
            let mut h = cap.min((times.get(1).copied().unwrap_or(t_end) - times[0]).max(min_step)) * 0.5;
            let mut t = times[0];
            for (idx, &target) in times.iter().enumerate().skip(1) {
                while t < target {
                    let hh = h.min(target - t);
                    let last = hh == target - t;
                    let err = st.try_step(rhs, t, hh, y, rtol, atol);
                    let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    if err <= 1.0 {
                        rhs.project(y);
                        t = if last { target } else { t + hh };
                        steps += 1;
                        if !y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                            return Err(Error::NonFinite { time: t });
                        }
                    }
                    h = (hh * factor).min(cap);
                    if h < min_step {
                        return Err(Error::StepUnderflow { time: t, step: h });
                    }
                }
                observe(idx, target, y)?;
            }
        }
    }
    Ok(steps)
}

fn check_inputs(dim: usize, h: &TimeDependentHamiltonian, collapses: &[Operator], t_final: f64) -> Result<()> {
    if h.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: h.dim() });
    }
    for op in h.terms.iter().map(|t| &t.op).chain(collapses) {
        if op.nrows() != dim || op.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: op.nrows() });
        }
    }
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::invalid("t_final", "must be positive"));
    }
    Ok(())
}

fn expectation_sparse(op: &SparseOp, rho: &[C64], d: usize) -> f64 {
    // Tr(ρ O) = Σ O_ij ρ_ji
    op.entries.iter().map(|&(i, j, o)| o * rho[j + i * d]).sum::<C64>().re
}

fn should_store(store: StoreStates, idx: usize, last: usize) -> bool {
    match store {
        StoreStates::FinalOnly => idx == last,
        StoreStates::All => true,
        StoreStates::Every(k) => idx == last || (k > 0 && idx.is_multiple_of(k)),
    }
}

/// Integrates the master equation from `rho0` to `t_final`.
///
/// `observables` are recorded (as real expectation values) at every sample time.
pub fn evolve(
    rho0: &DensityMatrix,
    h: &TimeDependentHamiltonian,
    collapses: &[Operator],
    t_final: f64,
    config: &SolverConfig,
    observables: &[(&str, &Operator)],
) -> Result<Trajectory> {
    let d = rho0.dim();
    check_inputs(d, h, collapses, t_final)?;
    for (_, op) in observables {
        if op.nrows() != d {
            return Err(Error::DimensionMismatch { expected: d, found: op.nrows() });
        }
    }
    let decay = collapses.iter().fold(CMatrix::zeros(d, d), |acc, op| acc + op.adjoint() * op);
    let mut rhs = Lindblad {
        dim: d,
        generator: Generator::new(h, (!collapses.is_empty()).then_some(&decay)),
        jumps: collapses.iter().map(SparseOp::from_dense).collect(),
        scratch: vec![ZERO; d * d],
    };
    let cap = config.step_cap(h.frequency_scale, h.norm_bound());
    let times = sample_times(t_final, config.samples);
    let last = times.len() - 1;
    let probes: Vec<SparseOp> = observables.iter().map(|(_, op)| SparseOp::from_dense(op)).collect();
    let mut tracks: Vec<Track> = observables
        .iter()
        .map(|(name, _)| Track { name: String::from(*name), values: Vec::with_capacity(times.len()) })
        .collect();
    let mut states = Vec::new();
    let trace0 = rho0.trace().re;

    let mut y: Vec<C64> = rho0.as_matrix().as_slice().to_vec();
    let steps = integrate(&mut rhs, &mut y, &times, config.method, cap, |idx, t, y| {
        let tr: C64 = (0..d).map(|i| y[i + i * d]).sum();
        if !tr.re.is_finite() || !tr.im.is_finite() {
            return Err(Error::NonFinite { time: t });
        }
        let drift = (tr.re - trace0).abs().max(tr.im.abs());
        if drift > config.trace_tol {
            return Err(Error::TraceDrift { time: t, drift });
        }
        for (track, probe) in tracks.iter_mut().zip(&probes) {
            track.values.push(expectation_sparse(probe, y, d));
        }
        if should_store(config.store, idx, last) {
            states.push((t, DensityMatrix::new_unchecked(CMatrix::from_column_slice(d, d, y))));
        }
        Ok(())
    })?;
    Ok(Trajectory { times, states, tracks, steps })
}

/// Integrates the Schrödinger equation `ψ̇ = −i H(t) ψ`.
pub fn evolve_pure(
    psi0: &StateVector,
    h: &TimeDependentHamiltonian,
    t_final: f64,
    config: &SolverConfig,
    observables: &[(&str, &Operator)],
) -> Result<PureTrajectory> {
    evolve_pure_with(psi0, h, t_final, config, observables, |_, _| Ok(()))
}

/// [`evolve_pure`] with an extra callback at every sample time.
pub fn evolve_pure_with(
    psi0: &StateVector,
    h: &TimeDependentHamiltonian,
    t_final: f64,
    config: &SolverConfig,
    observables: &[(&str, &Operator)],
    mut on_sample: impl FnMut(f64, &StateVector) -> Result<()>,
) -> Result<PureTrajectory> {
    let d = psi0.dim();
    check_inputs(d, h, &[], t_final)?;
    let mut rhs = Schrodinger { generator: Generator::new(h, None) };
    let cap = config.step_cap(h.frequency_scale, h.norm_bound());
    let times = sample_times(t_final, config.samples);
    let last = times.len() - 1;
    let mut tracks: Vec<Track> = observables
        .iter()
        .map(|(name, _)| Track { name: String::from(*name), values: Vec::with_capacity(times.len()) })
        .collect();
    let mut states = Vec::new();

    let mut y: Vec<C64> = psi0.as_vector().as_slice().to_vec();
    let steps = integrate(&mut rhs, &mut y, &times, config.method, cap, |idx, t, y| {
        let v = CVector::from_column_slice(y);
        let norm = v.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite { time: t });
        }
        let drift = (norm * norm - 1.0).abs();
        if drift > config.trace_tol {
            return Err(Error::TraceDrift { time: t, drift });
        }
        let psi = StateVector::normalized(v)?;
        for (track, (_, op)) in tracks.iter_mut().zip(observables) {
            track.values.push(psi.expectation(op).re);
        }
        on_sample(t, &psi)?;
        if should_store(config.store, idx, last) {
            states.push((t, psi));
        }
        Ok(())
    })?;
    Ok(PureTrajectory { times, states, tracks, steps })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub cutoffs: Vec<usize>,
    /// Observable vectors per cutoff.
    pub values: Vec<Vec<f64>>,
    /// Max absolute difference between successive cutoffs.
    pub max_diffs: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Default pass threshold for [`convergence_check`].
pub const CONVERGENCE_TOL: f64 = 1e-3;

/// Reruns `protocol` at each cutoff and compares the tracked observables of
/// successive cutoffs.
pub fn convergence_check(
    cutoffs: &[usize],
    tolerance: f64,
    mut protocol: impl FnMut(SpaceSpec) -> Result<Vec<f64>>,
) -> Result<ConvergenceReport> {
    if cutoffs.len() < 2 {
        return Err(Error::invalid("cutoffs", "need at least two cutoffs"));
    }
    let mut values = Vec::with_capacity(cutoffs.len());
    for &n in cutoffs {
        values.push(protocol(SpaceSpec::new(n)?)?);
    }
    let mut max_diffs = Vec::new();
    for w in values.windows(2) {
        if w[0].len() != w[1].len() {
            return Err(Error::DimensionMismatch { expected: w[0].len(), found: w[1].len() });
        }
        let diff = w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        max_diffs.push(diff);
    }
    let passed = max_diffs.iter().all(|&d| d < tolerance);
    Ok(ConvergenceReport { cutoffs: cutoffs.to_vec(), values, max_diffs, tolerance, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{annihilator, basis_state, number, on_boson, parity_operator, Qubit};
    use crate::linalg::{eigvalsh, frobenius};
    use crate::model::{build_hs, build_total, DriveParams, QrmParams};
    use proptest::prelude::*;

    fn space(n: usize) -> SpaceSpec {
        SpaceSpec::new(n).unwrap()
    }

    #[test]
    fn collapse_prefactors() {
        let s = space(5);
        let ops = collapse_set(&NoiseParams::default(), s).unwrap();
        assert_eq!(ops.len(), 4);
        let g = s.index(0, Qubit::Ground);
        let e = s.index(0, Qubit::Excited);
        assert!((ops[0][(e, e)].re - (1.0 / 1.5e-3f64).sqrt()).abs() < 1e-9);
        assert!((ops[0][(g, g)].re + (1.0 / 1.5e-3f64).sqrt()).abs() < 1e-9);
        assert!((ops[1][(1, 1)].re - (1.0 / 8e-3f64).sqrt()).abs() < 1e-9);
        assert!((ops[2][(1, 0)].re - 60f64.sqrt()).abs() < 1e-12);
        assert!((ops[3][(0, 1)].re - 60f64.sqrt()).abs() < 1e-12);
        for op in &ops {
            assert!(eigvalsh(&(op.adjoint() * op))[0] > -1e-9);
        }
        assert!(collapse_set(&NoiseParams::noiseless(), s).unwrap().is_empty());
    }

    #[test]
    fn thermal_populations_and_mean() {
        let s = space(15);
        let rho = thermal_state(0.05, s).unwrap();
        assert!((rho.as_matrix()[(0, 0)].re - 0.9523809523809523).abs() < 1e-12);
        assert!((rho.as_matrix()[(1, 1)].re - 0.045351473922902494).abs() < 1e-12);
        let mean: f64 = (0..15).map(|n| n as f64 * rho.as_matrix()[(n, n)].re).sum();
        assert!((mean - 0.05).abs() < 1e-10);
        let vac = thermal_state(0.0, s).unwrap();
        assert_eq!(vac.as_matrix()[(0, 0)].re, 1.0);
    }

    #[test]
    fn zero_hamiltonian_is_static() {
        let s = space(3);
        let rho0 = thermal_with_qubit(0.3, &fock::StateVector::normalized(CVector::from_vec(vec![c(1.0, 0.0), c(0.5, 0.5)])).unwrap(), s).unwrap();
        let h = TimeDependentHamiltonian::constant(CMatrix::zeros(6, 6), 1.0);
        let traj = evolve(&rho0, &h, &[], 3.0, &SolverConfig::default().with_samples(5), &[]).unwrap();
        assert!(frobenius(&(traj.final_state().as_matrix() - rho0.as_matrix())) < 1e-15);
    }

    #[test]
    fn parity_is_conserved_at_half_pi() {
        let s = space(15);
        let p = QrmParams { omega_sigma: 4.32, omega_a: 1.0, lambda: 0.27, theta: PI / 2.0 };
        let h = TimeDependentHamiltonian::constant(build_hs(&p, s).unwrap(), p.frequency_scale());
        let rho0 = basis_state(0, Qubit::Excited, s).unwrap().projector();
        let par = parity_operator(s);
        let traj = evolve(&rho0, &h, &[], 20.0, &SolverConfig::default(), &[("parity", &par)]).unwrap();
        let track = traj.track("parity").unwrap();
        assert!(track.iter().all(|v| (v + 1.0).abs() < 1e-6));
        assert!((traj.final_state().purity() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn phonon_dephasing_coherence_decay() {
        // C = √(1/τ) a†a on (|0⟩+|2⟩)/√2: |ρ_02| = ½ e^{−(0−2)² t/(2τ)}
        let s = space(3);
        let tau = 8e-3;
        let v = basis_state(0, Qubit::Ground, s).unwrap().into_inner() + basis_state(2, Qubit::Ground, s).unwrap().into_inner();
        let rho0 = StateVector::normalized(v).unwrap().projector();
        let noise = NoiseParams { tau1: f64::INFINITY, tau2: tau, gamma_heat: 0.0, nbar_init: 0.0 };
        let ops = collapse_set(&noise, s).unwrap();
        let h = TimeDependentHamiltonian::constant(CMatrix::zeros(6, 6), 0.0);
        let cfg = SolverConfig { max_step: Some(tau / 2000.0), ..SolverConfig::default() }.with_samples(3);
        let traj = evolve(&rho0, &h, &ops, tau, &cfg, &[]).unwrap();
        let i0 = s.index(0, Qubit::Ground);
        let i2 = s.index(2, Qubit::Ground);
        let got = traj.final_state().as_matrix()[(i0, i2)].norm();
        assert!((got - 0.5 * (-2.0f64).exp()).abs() < 1e-9, "{got}");
        assert!((0.5 * (-2.0f64).exp() - 0.06767).abs() < 1e-5);
    }

    #[test]
    fn strong_number_dephasing_stays_hermitian() {
        // round-off anti-Hermitian parts must not grow like e^{n m t/τ₂}
        let s = space(12);
        let w = 2.0 * PI * 10e3;
        let a = annihilator(s);
        let x = on_boson(&(&a + a.adjoint()), s).unwrap() * c(w, 0.0);
        let h = TimeDependentHamiltonian::constant(x + on_boson(&number(s), s).unwrap() * c(w, 0.0), 5.0 * w);
        let noise = NoiseParams { tau1: f64::INFINITY, tau2: 2e-5, gamma_heat: 0.0, nbar_init: 0.0 };
        let rho0 = basis_state(0, Qubit::Ground, s).unwrap().projector();
        let cfg = SolverConfig { store: StoreStates::All, ..SolverConfig::default().with_noise(&noise) }.with_samples(5);
        let traj = evolve(&rho0, &h, &collapse_set(&noise, s).unwrap(), 1e-4, &cfg, &[]).unwrap();
        for (_, rho) in &traj.states {
            let m = rho.as_matrix();
            assert!((rho.trace().re - 1.0).abs() < 1e-9);
            assert!(frobenius(&(m - m.adjoint())) < 1e-12);
        }
    }

    #[test]
    fn driven_noisy_run_keeps_density_matrix_valid() {
        let s = space(8);
        let wa = 2.0 * PI * 25e3;
        let p = QrmParams { omega_sigma: 4.32 * wa, omega_a: wa, lambda: 0.27 * wa, theta: PI / 6.0 };
        let d = DriveParams { omega_rabi: 0.95 * wa, omega_l: 6.1 * wa };
        let noise = NoiseParams::default();
        let h = build_total(&p, &d, s).unwrap();
        let g = StateVector::new(CVector::from_vec(vec![ZERO, c(1.0, 0.0)])).unwrap();
        let rho0 = thermal_with_qubit(noise.nbar_init, &g, s).unwrap();
        let ops = collapse_set(&noise, s).unwrap();
        let cfg = SolverConfig { store: StoreStates::Every(10), ..SolverConfig::default().with_noise(&noise) };
        let traj = evolve(&rho0, &h, &ops, 100e-6, &cfg, &[]).unwrap();
        for (_, rho) in &traj.states {
            let m = rho.as_matrix();
            assert!((rho.trace().re - 1.0).abs() < 1e-7);
            assert!(frobenius(&(m - m.adjoint())) < 1e-9);
        }
        assert!(eigvalsh(traj.final_state().as_matrix())[0] > -1e-6);
        assert!(traj.states.len() > 10);
    }

    fn rk4_final(h: f64) -> CMatrix {
        let s = space(4);
        let p = QrmParams { omega_sigma: 2.0, omega_a: 1.0, lambda: 0.5, theta: 1.0 };
        let d = DriveParams { omega_rabi: 0.7, omega_l: 2.5 };
        let ht = build_total(&p, &d, s).unwrap();
        let ops = collapse_set(&NoiseParams { tau1: 4.0, tau2: 9.0, gamma_heat: 0.05, nbar_init: 0.0 }, s).unwrap();
        let rho0 = basis_state(1, Qubit::Ground, s).unwrap().projector();
        let cfg = SolverConfig { max_step: Some(h), ..SolverConfig::default() }.with_samples(2);
        evolve(&rho0, &ht, &ops, 4.0, &cfg, &[]).unwrap().final_state().as_matrix().clone()
    }

    #[test]
    fn rk4_is_fourth_order() {
        let reference = rk4_final(0.2 / 4.0);
        let e1 = frobenius(&(rk4_final(0.4) - &reference));
        let e2 = frobenius(&(rk4_final(0.2) - &reference));
        let expected = 16.0;
        let ratio = e1 / e2;
        assert!((ratio / expected - 1.0).abs() < 0.2, "ratio {ratio}, expected {expected}");
    }

    #[test]
    fn adaptive_matches_fixed_step() {
        let s = space(6);
        let p = QrmParams { omega_sigma: 3.0, omega_a: 1.0, lambda: 0.8, theta: 0.9 };
        let d = DriveParams { omega_rabi: 0.5, omega_l: 4.0 };
        let ht = build_total(&p, &d, s).unwrap();
        let rho0 = basis_state(0, Qubit::Ground, s).unwrap().projector();
        let fixed = evolve(&rho0, &ht, &[], 10.0, &SolverConfig { max_step: Some(1e-3), ..SolverConfig::default() }, &[]).unwrap();
        let cfg = SolverConfig { method: Method::Adaptive { rtol: 1e-10, atol: 1e-12 }, ..SolverConfig::default() };
        let adaptive = evolve(&rho0, &ht, &[], 10.0, &cfg, &[]).unwrap();
        assert!(frobenius(&(fixed.final_state().as_matrix() - adaptive.final_state().as_matrix())) < 1e-8);
        assert!(adaptive.steps < fixed.steps);
    }

    #[test]
    fn pure_and_mixed_evolution_agree() {
        let s = space(10);
        let p = QrmParams { omega_sigma: 4.0, omega_a: 1.0, lambda: 0.9, theta: 0.4 };
        let ht = build_total(&p, &DriveParams { omega_rabi: 0.3, omega_l: 5.0 }, s).unwrap();
        let psi0 = basis_state(0, Qubit::Ground, s).unwrap();
        let num = on_boson(&fock::number(s), s).unwrap();
        let cfg = SolverConfig::default().with_samples(20);
        let pure = evolve_pure(&psi0, &ht, 6.0, &cfg, &[("n", &num)]).unwrap();
        let mixed = evolve(&psi0.projector(), &ht, &[], 6.0, &cfg, &[("n", &num)]).unwrap();
        for (a, b) in pure.track("n").unwrap().iter().zip(mixed.track("n").unwrap()) {
            assert!((a - b).abs() < 1e-6, "{a} {b}");
        }
    }

    #[test]
    fn convergence_of_trivial_ground_state() {
        let report = convergence_check(&[5, 10], CONVERGENCE_TOL, |s| {
            let p = QrmParams { omega_sigma: 1.0, omega_a: 1.0, lambda: 0.0, theta: 0.3 };
            let gs = crate::model::ground_state(&build_hs(&p, s)?)?;
            Ok(vec![gs.energy, gs.state.expectation(&on_boson(&fock::number(s), s)?).re])
        })
        .unwrap();
        assert!(report.passed);
        assert_eq!(report.max_diffs, vec![0.0]);
        assert!(convergence_check(&[5], 1e-3, |_| Ok(vec![])).is_err());
    }

    proptest! {
        #[test]
        fn closed_evolution_preserves_trace_and_purity(theta in 0.0..PI, lambda in 0.0f64..1.0, omega in 0.0f64..1.0) {
            let s = space(5);
            let p = QrmParams { omega_sigma: 2.0, omega_a: 1.0, lambda, theta };
            let ht = build_total(&p, &DriveParams { omega_rabi: omega, omega_l: 2.5 }, s).unwrap();
            let rho0 = basis_state(1, Qubit::Excited, s).unwrap().projector();
            let traj = evolve(&rho0, &ht, &[], 3.0, &SolverConfig::default().with_samples(4), &[]).unwrap();
            let rho = traj.final_state();
            prop_assert!((rho.trace().re - 1.0).abs() < 1e-7);
            prop_assert!((rho.purity() - 1.0).abs() < 1e-6);
            prop_assert!(frobenius(&(rho.as_matrix() - rho.as_matrix().adjoint())) < 1e-9);
        }
    }
}
