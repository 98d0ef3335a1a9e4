//! Compilation of model parameters into a multi-tone laser table, and the
//! symbolic and numerical tools that check the compiled table.
//!
//! Lab model for one ion and tones `m`:
//!
//! ```text
//! H = (ω₀/2) σ_z + ω_z a†a + Σ_m (Ω_m/2) σ† e^{iη(a + a†)} e^{−i(ω_m t + φ_m)} + h.c.
//! ```
//!
//! In the frame rotating at `ω₀` (spin) and `δ = ω_z − ω_a` (phonon), to first
//! order in `η`, every tone contributes three terms (plus conjugates):
//!
//! ```text
//! σ†    (Ω/2)  e^{−iφ} e^{i(ω₀ − ω_m)t}
//! σ†a   (iηΩ/2) e^{−iφ} e^{i(ω₀ − ω_m − δ)t}
//! σ†a†  (iηΩ/2) e^{−iφ} e^{i(ω₀ − ω_m + δ)t}
//! ```
//!
//! and the rotating-wave approximation keeps those with `|ν| < |δ|/2`. The
//! spin operators here act on the bare `(|↑⟩, |↓⟩)` basis; [`s_matrix`] maps
//! the resulting `σ_y`-form Hamiltonian onto the `σ_z`-form model.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use crate::fock::{self, Operator, SpaceSpec};
use crate::linalg::{c, kron, CMatrix, C64, ZERO};
use crate::model::{DriveParams, DriveTerm, Envelope, QrmParams, TimeDependentHamiltonian};
use crate::{Error, Result};

/// Single-ion parameters, angular frequencies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IonParams {
    pub omega_0: f64,
    pub omega_z: f64,
    pub eta: f64,
}

impl IonParams {
    /// 729 nm qubit transition, 2.04 MHz axial mode, `η = 0.05`.
    pub fn reference() -> Self {
        IonParams { omega_0: 2.0 * PI * 411.042e12, omega_z: 2.0 * PI * 2.04e6, eta: 0.05 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_0 > 0.0) {
            return Err(Error::invalid("omega_0", "must be positive"));
        }
        if !(self.omega_z > 0.0) {
            return Err(Error::invalid("omega_z", "must be positive"));
        }
        if !(self.eta > 0.0) {
            return Err(Error::invalid("eta", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ToneRole {
    Red,
    Blue,
    Carrier,
    ProbeLow,
    ProbeHigh,
}

impl ToneRole {
    pub fn label(self) -> &'static str {
        match self {
            ToneRole::Red => "red",
            ToneRole::Blue => "blue",
            ToneRole::Carrier => "carrier",
            ToneRole::ProbeLow => "probe-",
            ToneRole::ProbeHigh => "probe+",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        [ToneRole::Red, ToneRole::Blue, ToneRole::Carrier, ToneRole::ProbeLow, ToneRole::ProbeHigh]
            .into_iter()
            .find(|r| r.label() == s)
    }
}

/// One laser component `(Ω_m, ω_m, φ_m)`.
///
/// `offset = ω_m − ω₀` is kept alongside the absolute frequency since the
/// difference of two optical frequencies loses the sub-Hz part.
#[derive(Clone, Debug, PartialEq)]
pub struct Tone {
    pub role: ToneRole,
    pub rabi_rate: f64,
    pub frequency: f64,
    pub offset: f64,
    pub phase: f64,
}

impl Tone {
    pub fn new(role: ToneRole, rabi_rate: f64, ion: &IonParams, offset: f64, phase: f64) -> Self {
        Tone { role, rabi_rate, frequency: ion.omega_0 + offset, offset, phase }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ToneSpec {
    pub tones: Vec<Tone>,
}

impl ToneSpec {
    pub fn extend(mut self, other: ToneSpec) -> Self {
        self.tones.extend(other.tones);
        self
    }

    pub fn max_rabi(&self) -> f64 {
        self.tones.iter().map(|t| t.rabi_rate).fold(0.0, f64::max)
    }
}

pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    // rem_euclid can round up to exactly 2π
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

/// Red and blue sidebands `(2λ/η, ω₀ ∓ (ω_z − ω_a), π + θ)` and the carrier
/// `(ω_σ, ω₀, π/2)`.
///
/// The sideband phase `π + θ` is the choice that yields `−λ sin θ σ_x(a + a†)`
/// under the `e^{−i(ω_m t + φ_m)}` convention of the lab model above.
pub fn compile_tones(p: &QrmParams, ion: &IonParams) -> Result<ToneSpec> {
    p.validate()?;
    ion.validate()?;
    let delta = ion.omega_z - p.omega_a;
    let side = 2.0 * p.lambda / ion.eta;
    let phase = wrap_phase(PI + p.theta);
    let tones = alloc::vec![
        Tone::new(ToneRole::Red, side, ion, -delta, phase),
        Tone::new(ToneRole::Blue, side, ion, delta, phase),
        Tone::new(ToneRole::Carrier, p.omega_sigma, ion, 0.0, FRAC_PI_2),
    ];
    check_frequencies(&tones)?;
    Ok(ToneSpec { tones })
}

/// Probe pair `(Ω, ω₀ ∓ ω_L, 0)`; empty when `Ω = 0`.
pub fn compile_probe(d: &DriveParams, ion: &IonParams) -> Result<ToneSpec> {
    d.validate()?;
    ion.validate()?;
    if d.omega_rabi == 0.0 {
        return Ok(ToneSpec::default());
    }
    let tones = alloc::vec![
        Tone::new(ToneRole::ProbeLow, d.omega_rabi, ion, -d.omega_l, 0.0),
        Tone::new(ToneRole::ProbeHigh, d.omega_rabi, ion, d.omega_l, 0.0),
    ];
    check_frequencies(&tones)?;
    Ok(ToneSpec { tones })
}

fn check_frequencies(tones: &[Tone]) -> Result<()> {
    for t in tones {
        if !(t.frequency > 0.0) {
            return Err(Error::invalid("frequency", alloc::format!("{} tone frequency {} is not positive", t.role.label(), t.frequency)));
        }
    }
    Ok(())
}

/// Spin-phonon structure of a frame term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coupling {
    /// `σ†`
    Carrier,
    /// `σ† a`
    Red,
    /// `σ† a†`
    Blue,
}

/// `coefficient · e^{iνt} · op + h.c.` in the rotating frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameTerm {
    pub tone: usize,
    pub coupling: Coupling,
    pub coefficient: C64,
    pub frequency: f64,
}

/// First-order Lamb-Dicke expansion of every tone in the rotating frame.
pub fn expand_terms(spec: &ToneSpec, ion: &IonParams, omega_a: f64) -> Vec<FrameTerm> {
    let delta = ion.omega_z - omega_a;
    let mut out = Vec::with_capacity(3 * spec.tones.len());
    for (k, t) in spec.tones.iter().enumerate() {
        let base = C64::from_polar(t.rabi_rate / 2.0, -t.phase);
        let side = base * c(0.0, ion.eta);
        let nu = -t.offset;
        out.push(FrameTerm { tone: k, coupling: Coupling::Carrier, coefficient: base, frequency: nu });
        out.push(FrameTerm { tone: k, coupling: Coupling::Red, coefficient: side, frequency: nu - delta });
        out.push(FrameTerm { tone: k, coupling: Coupling::Blue, coefficient: side, frequency: nu + delta });
    }
    out
}

/// Splits terms into (retained, dropped) by the `|ν| < |δ|/2` rule.
pub fn rwa_split(terms: &[FrameTerm], ion: &IonParams, omega_a: f64) -> (Vec<FrameTerm>, Vec<FrameTerm>) {
    let cut = (ion.omega_z - omega_a).abs() / 2.0;
    terms.iter().partition(|t| t.frequency.abs() < cut || t.frequency == 0.0)
}

/// Real coefficients of the static effective Hamiltonian, in the `σ_z`-form
/// basis (after [`s_matrix`]), with `x = a + a†` and `p = i(a† − a)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct EffectiveCoefficients {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_z: f64,
    pub number: f64,
    pub sigma_x_x: f64,
    pub sigma_y_x: f64,
    pub sigma_z_x: f64,
    pub sigma_x_p: f64,
    pub sigma_y_p: f64,
    pub sigma_z_p: f64,
}

impl EffectiveCoefficients {
    /// The coefficient set the model Hamiltonian requires.
    pub fn target(p: &QrmParams) -> Self {
        EffectiveCoefficients {
            sigma_z: p.omega_sigma / 2.0,
            number: p.omega_a,
            sigma_z_x: p.lambda * p.theta.cos(),
            sigma_x_x: -p.lambda * p.theta.sin(),
            ..Default::default()
        }
    }

    pub fn as_array(&self) -> [f64; 10] {
        [
            self.sigma_x,
            self.sigma_y,
            self.sigma_z,
            self.number,
            self.sigma_x_x,
            self.sigma_y_x,
            self.sigma_z_x,
            self.sigma_x_p,
            self.sigma_y_p,
            self.sigma_z_p,
        ]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.as_array().iter().zip(other.as_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Collects the time-independent retained terms into model coefficients.
///
/// Bare `c σ† + c* σ = Re c · σ_x − Im c · σ_y`; the basis change sends bare
/// `(σ_x, σ_y, σ_z)` to `(σ_x, σ_z, −σ_y)`.
pub fn effective_coefficients(retained: &[FrameTerm], omega_a: f64) -> EffectiveCoefficients {
    let mut q = ZERO;
    let mut red = ZERO;
    let mut blue = ZERO;
    for t in retained.iter().filter(|t| t.frequency == 0.0) {
        match t.coupling {
            Coupling::Carrier => q += t.coefficient,
            Coupling::Red => red += t.coefficient,
            Coupling::Blue => blue += t.coefficient,
        }
    }
    // σ†(c_r a + c_b a†) = σ†(d_x x + d_p p), d_x = (c_r + c_b)/2, d_p = i(c_r − c_b)/2
    let dx = (red + blue) / 2.0;
    let dp = (red - blue) * c(0.0, 0.5);
    EffectiveCoefficients {
        sigma_x: q.re,
        sigma_y: 0.0,
        sigma_z: -q.im,
        number: omega_a,
        sigma_x_x: dx.re,
        sigma_y_x: 0.0,
        sigma_z_x: -dx.im,
        sigma_x_p: dp.re,
        sigma_y_p: 0.0,
        sigma_z_p: -dp.im,
    }
}

/// `S = ((−1, i), (i, −1))/√2`: `S σ_y S† = σ_z`, `S σ_x S† = σ_x`.
pub fn s_matrix() -> CMatrix {
    let r = core::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(2, 2, &[c(-r, 0.0), c(0.0, r), c(0.0, r), c(-r, 0.0)])
}

fn coupling_op(coupling: Coupling, space: SpaceSpec) -> Result<Operator> {
    let sp = fock::sigma_plus();
    let a = fock::annihilator(space);
    match coupling {
        Coupling::Carrier => fock::on_qubit(&sp, space),
        Coupling::Red => fock::embed(&sp, &a, space),
        Coupling::Blue => fock::embed(&sp, &a.adjoint(), space),
    }
}

/// Rotating-frame Hamiltonian in the bare basis built from `terms`, plus the
/// residual `ω_a a†a`.
pub fn frame_hamiltonian(terms: &[FrameTerm], omega_a: f64, space: SpaceSpec) -> Result<TimeDependentHamiltonian> {
    let num = fock::on_boson(&fock::number(space), space)?;
    let mut h = TimeDependentHamiltonian::constant(num * c(omega_a, 0.0), omega_a);
    for t in terms {
        if t.coefficient == ZERO {
            continue;
        }
        h = h.with_term(DriveTerm {
            op: coupling_op(t.coupling, space)?,
            envelope: Envelope::Phasor { amplitude: t.coefficient, omega: t.frequency },
            add_conjugate: true,
        });
    }
    Ok(h)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Lint {
    /// `η √(n_max + 1)` above the Lamb-Dicke threshold.
    LambDicke { value: f64, threshold: f64 },
    /// A dropped term oscillates less than `min_ratio` times faster than the
    /// strongest coupling.
    RwaMargin { tone: String, coupling: Coupling, frequency: f64, ratio: f64, min_ratio: f64 },
    /// Sideband tones sit on the carrier (`ω_z = ω_a`).
    DegenerateFrame { separation: f64 },
    /// Sideband Rabi rate above the hardware ceiling.
    RabiCeiling { rabi: f64, ceiling: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LintConfig {
    /// Largest mean phonon number the protocol is expected to reach.
    pub nbar_max: f64,
    pub lamb_dicke_threshold: f64,
    pub rwa_min_ratio: f64,
    /// Hardware ceiling on a single tone's Rabi rate (rad/s).
    pub rabi_ceiling: f64,
}

impl Default for LintConfig {
    fn default() -> Self {
        LintConfig { nbar_max: 10.0, lamb_dicke_threshold: 0.2, rwa_min_ratio: 10.0, rabi_ceiling: 2.0 * PI * 1e6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LintReport {
    pub warnings: Vec<Lint>,
    /// `η √(n_max+1)` / threshold; below 1 is fine.
    pub lamb_dicke_ratio: f64,
    /// Smallest `|ν_dropped| / max coupling` over dropped terms.
    pub rwa_margin: f64,
    /// Largest tone Rabi rate / ceiling.
    pub rabi_ratio: f64,
}

impl LintReport {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}

pub fn check_validity(spec: &ToneSpec, p: &QrmParams, ion: &IonParams, cfg: &LintConfig) -> LintReport {
    let mut warnings = Vec::new();
    let ld = ion.eta * (cfg.nbar_max + 1.0).sqrt();
    if ld > cfg.lamb_dicke_threshold {
        warnings.push(Lint::LambDicke { value: ld, threshold: cfg.lamb_dicke_threshold });
    }
    let separation = ion.omega_z - p.omega_a;
    if separation.abs() <= 1e-9 * ion.omega_z {
        warnings.push(Lint::DegenerateFrame { separation });
    }
    let terms = expand_terms(spec, ion, p.omega_a);
    let strongest = terms.iter().map(|t| t.coefficient.norm()).fold(0.0, f64::max);
    let (_, dropped) = rwa_split(&terms, ion, p.omega_a);
    let mut margin = f64::INFINITY;
    for t in dropped.iter().filter(|t| t.coefficient.norm() > 0.0) {
        let ratio = t.frequency.abs() / strongest;
        margin = margin.min(ratio);
        if ratio < cfg.rwa_min_ratio {
            warnings.push(Lint::RwaMargin {
                tone: String::from(spec.tones[t.tone].role.label()),
                coupling: t.coupling,
                frequency: t.frequency,
                ratio,
                min_ratio: cfg.rwa_min_ratio,
            });
        }
    }
    let side = spec
        .tones
        .iter()
        .filter(|t| matches!(t.role, ToneRole::Red | ToneRole::Blue))
        .map(|t| t.rabi_rate)
        .fold(0.0, f64::max);
    if side > cfg.rabi_ceiling {
        warnings.push(Lint::RabiCeiling { rabi: side, ceiling: cfg.rabi_ceiling });
    }
    LintReport {
        warnings,
        lamb_dicke_ratio: ld / cfg.lamb_dicke_threshold,
        rwa_margin: margin,
        rabi_ratio: spec.max_rabi() / cfg.rabi_ceiling,
    }
}

/// `S ⊗ I`, mapping bare-basis states to the model basis.
pub fn s_operator(space: SpaceSpec) -> Result<Operator> {
    fock::embed(&s_matrix(), &fock::boson_identity(space), space)
}

/// The `σ_y`-form Hamiltonian in the bare basis:
/// `(ω_σ/2) σ_y + ω_a a†a + λ(cos θ σ_y − sin θ σ_x)(a + a†)`.
pub fn bare_model_hamiltonian(p: &QrmParams, space: SpaceSpec) -> Result<Operator> {
    p.validate()?;
    let a = fock::annihilator(space);
    let x = &a + a.adjoint();
    let sy = fock::pauli(fock::Axis::Y);
    let sx = fock::pauli(fock::Axis::X);
    let coupling = &sy * c(p.theta.cos(), 0.0) - &sx * c(p.theta.sin(), 0.0);
    let mut h = kron(&sy, &fock::boson_identity(space)) * c(p.omega_sigma / 2.0, 0.0);
    h += kron(&fock::qubit_identity(), &fock::number(space)) * c(p.omega_a, 0.0);
    h += kron(&coupling, &x) * c(p.lambda, 0.0);
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{pauli, Axis};
    use crate::linalg::frobenius;
    use crate::model::build_hs;
    use proptest::prelude::*;

    fn fig2a() -> (QrmParams, IonParams) {
        let wa = 2.0 * PI * 25e3;
        let p = QrmParams { omega_sigma: 4.32 * wa, omega_a: wa, lambda: 0.27 * wa, theta: PI / 2.0 };
        (p, IonParams::reference())
    }

    #[test]
    fn s_matrix_maps_pauli_operators() {
        let s = s_matrix();
        let sd = s.adjoint();
        assert!(frobenius(&(&s * &sd - CMatrix::identity(2, 2))) < 1e-15);
        assert!(frobenius(&(&s * pauli(Axis::Y) * &sd - pauli(Axis::Z))) < 1e-15);
        assert!(frobenius(&(&s * pauli(Axis::X) * &sd - pauli(Axis::X))) < 1e-15);
        assert!(frobenius(&(&s * pauli(Axis::Z) * &sd + pauli(Axis::Y))) < 1e-15);
    }

    #[test]
    fn sideband_rate_for_fig2a() {
        let (p, ion) = fig2a();
        let spec = compile_tones(&p, &ion).unwrap();
        assert_eq!(spec.tones.len(), 3);
        let expected = 2.0 * PI * 270e3;
        assert!((spec.tones[0].rabi_rate - expected).abs() < 1e-6 * expected);
        assert_eq!(spec.tones[2].rabi_rate, p.omega_sigma);
        assert_eq!(spec.tones[2].frequency, ion.omega_0);
        let delta = ion.omega_z - p.omega_a;
        assert_eq!(spec.tones[0].offset, -delta);
        assert_eq!(spec.tones[1].offset, delta);
        assert!((spec.tones[1].frequency - ion.omega_0 - delta).abs() < 1.0);
        assert!(spec.tones.iter().all(|t| (0.0..2.0 * PI).contains(&t.phase)));
    }

    #[test]
    fn zero_coupling_leaves_only_the_carrier_amplitude() {
        let (mut p, ion) = fig2a();
        p.lambda = 0.0;
        let spec = compile_tones(&p, &ion).unwrap();
        let live: Vec<_> = spec.tones.iter().filter(|t| t.rabi_rate > 0.0).collect();
        assert_eq!(live.len(), 1);
        assert_eq!(live[0].role, ToneRole::Carrier);
    }

    #[test]
    fn rejects_bad_ion() {
        let (p, mut ion) = fig2a();
        ion.eta = 0.0;
        assert!(compile_tones(&p, &ion).is_err());
        let (p, mut ion) = fig2a();
        ion.omega_0 = 1.0;
        assert!(compile_tones(&p, &ion).is_err());
    }

    #[test]
    fn probe_pair() {
        let ion = IonParams::reference();
        assert!(compile_probe(&DriveParams { omega_rabi: 0.0, omega_l: 1e6 }, &ion).unwrap().tones.is_empty());
        let d = DriveParams { omega_rabi: 2.0 * PI * 23.75e3, omega_l: 2.0 * PI * 150e3 };
        let spec = compile_probe(&d, &ion).unwrap();
        assert_eq!(spec.tones[0].offset + spec.tones[1].offset, 0.0);
        // retained part is Ω cos(ω_L t) σ_x
        let terms = expand_terms(&spec, &ion, 2.0 * PI * 25e3);
        let (kept, _) = rwa_split(&terms, &ion, 2.0 * PI * 25e3);
        assert_eq!(kept.len(), 2);
        assert!(kept.iter().all(|t| t.coupling == Coupling::Carrier && t.frequency.abs() == d.omega_l));
        assert!(kept.iter().all(|t| (t.coefficient - c(d.omega_rabi / 2.0, 0.0)).norm() < 1e-9));
    }

    #[test]
    fn lint_fig2a_is_clean() {
        let (p, ion) = fig2a();
        let spec = compile_tones(&p, &ion).unwrap();
        let report = check_validity(&spec, &p, &ion, &LintConfig::default());
        assert!(report.is_clean(), "{:?}", report.warnings);
        assert!(report.rwa_margin > 10.0 && report.lamb_dicke_ratio < 1.0 && report.rabi_ratio < 1.0);
    }

    #[test]
    fn lint_flags_each_rule() {
        let (p, ion) = fig2a();
        let mut degenerate = ion;
        degenerate.omega_z = p.omega_a;
        let spec = compile_tones(&p, &degenerate).unwrap();
        let r = check_validity(&spec, &p, &degenerate, &LintConfig::default());
        assert!(r.warnings.iter().any(|w| matches!(w, Lint::DegenerateFrame { .. })));

        let mut loose = ion;
        loose.eta = 0.4;
        let spec = compile_tones(&p, &loose).unwrap();
        let r = check_validity(&spec, &p, &loose, &LintConfig::default());
        assert!(r.warnings.iter().any(|w| matches!(w, Lint::LambDicke { .. })));

        let spec = compile_tones(&p, &ion).unwrap();
        let tight = LintConfig { rabi_ceiling: 2.0 * PI * 100e3, ..LintConfig::default() };
        assert!(check_validity(&spec, &p, &ion, &tight).warnings.iter().any(|w| matches!(w, Lint::RabiCeiling { .. })));

        let mut close = ion;
        close.omega_z = p.omega_a + 2.0 * PI * 500e3;
        let spec = compile_tones(&p, &close).unwrap();
        let r = check_validity(&spec, &p, &close, &LintConfig::default());
        assert!(r.warnings.iter().any(|w| matches!(w, Lint::RwaMargin { .. })));
    }

    #[test]
    fn frame_hamiltonian_is_hermitian() {
        let (p, ion) = fig2a();
        let s = SpaceSpec::new(5).unwrap();
        let spec = compile_tones(&p, &ion).unwrap();
        let h = frame_hamiltonian(&expand_terms(&spec, &ion, p.omega_a), p.omega_a, s).unwrap();
        for t in [0.0, 1.3e-7, 4.1e-6] {
            let m = h.evaluate(t);
            assert!(frobenius(&(&m - m.adjoint())) < 1e-9 * frobenius(&m));
        }
    }

    proptest! {
        #[test]
        fn symbolic_round_trip_reproduces_model(
            ws in 0.5f64..8.0, wa in 0.5f64..2.0, lambda in 0.0f64..3.0, theta in 0.0..PI, eta in 0.01f64..0.2
        ) {
            let scale = 2.0 * PI * 10e3;
            let p = QrmParams { omega_sigma: ws * scale, omega_a: wa * scale, lambda: lambda * scale, theta };
            let ion = IonParams { eta, ..IonParams::reference() };
            let spec = compile_tones(&p, &ion).unwrap();
            let terms = expand_terms(&spec, &ion, p.omega_a);
            let (kept, _) = rwa_split(&terms, &ion, p.omega_a);
            prop_assert_eq!(kept.len(), 3);
            let got = effective_coefficients(&kept, p.omega_a);
            let want = EffectiveCoefficients::target(&p);
            prop_assert!(got.max_abs_diff(&want) <= 1e-12 * scale * (1.0 + ws + wa + lambda));
        }

        #[test]
        fn s_transform_maps_sigma_y_form_to_model(
            ws in 0.1f64..8.0, lambda in 0.0f64..3.0, theta in 0.0..PI
        ) {
            let space = SpaceSpec::new(6).unwrap();
            let p = QrmParams { omega_sigma: ws, omega_a: 1.0, lambda, theta };
            let s = s_operator(space).unwrap();
            let mapped = &s * bare_model_hamiltonian(&p, space).unwrap() * s.adjoint();
            prop_assert!(frobenius(&(mapped - build_hs(&p, space).unwrap())) < 1e-12);
        }
    }
}
