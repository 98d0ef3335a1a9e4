//! Extended quantum Rabi Hamiltonian, its driven form, and exact ground states.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::fock::{self, Axis, Operator, SpaceSpec, StateVector};
use crate::linalg::{c, eigh, gershgorin_radius, hermiticity_defect, kron, CMatrix, CVector, C64, ZERO};
use crate::{Error, Result};

/// Static model parameters, all angular frequencies except `theta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QrmParams {
    pub omega_sigma: f64,
    pub omega_a: f64,
    pub lambda: f64,
    pub theta: f64,
}

impl QrmParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        self.collect_problems(&mut problems);
        match problems.into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Every violated invariant, in field order.
    pub fn collect_problems(&self, out: &mut Vec<Error>) {
        if !(self.omega_a > 0.0 && self.omega_a.is_finite()) {
            out.push(Error::invalid("omega_a", "must be positive"));
        }
        if !(self.omega_sigma > 0.0 && self.omega_sigma.is_finite()) {
            out.push(Error::invalid("omega_sigma", "must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            out.push(Error::invalid("lambda", "must be non-negative"));
        }
        if !(0.0..=PI).contains(&self.theta) {
            out.push(Error::invalid("theta", "theta must lie in [0, π]"));
        }
    }

    pub fn frequency_scale(&self) -> f64 {
        self.omega_sigma.abs().max(self.omega_a.abs()).max(self.lambda.abs())
    }
}

/// Probe drive `Ω cos(ω_L t) σ_x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveParams {
    pub omega_rabi: f64,
    pub omega_l: f64,
}

impl DriveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_rabi >= 0.0 && self.omega_rabi.is_finite()) {
            return Err(Error::invalid("omega_rabi", "must be non-negative"));
        }
        if !self.omega_l.is_finite() {
            return Err(Error::invalid("omega_l", "must be finite"));
        }
        Ok(())
    }

    /// Probe frequency for a target detuning `Δ_Lσ = ω_L − ω_σ`.
    pub fn at_detuning(omega_rabi: f64, omega_sigma: f64, delta: f64) -> Self {
        DriveParams { omega_rabi, omega_l: omega_sigma + delta }
    }
}

/// Scalar (possibly complex) time dependence of a Hamiltonian term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Envelope {
    Constant(C64),
    /// `amplitude · cos(omega t + phase)`
    Cosine { amplitude: f64, omega: f64, phase: f64 },
    /// `amplitude · exp(i omega t)`
    Phasor { amplitude: C64, omega: f64 },
    /// `(start − end) · exp(−(t − t0)/tau) + end`
    Exponential { start: f64, end: f64, tau: f64, t0: f64 },
}

impl Envelope {
    pub fn value(&self, t: f64) -> C64 {
        match *self {
            Envelope::Constant(v) => v,
            Envelope::Cosine { amplitude, omega, phase } => c(amplitude * (omega * t + phase).cos(), 0.0),
            Envelope::Phasor { amplitude, omega } => amplitude * C64::from_polar(1.0, omega * t),
            Envelope::Exponential { start, end, tau, t0 } => c((start - end) * (-(t - t0) / tau).exp() + end, 0.0),
        }
    }

    /// Upper bound on `|value(t)|` for `t ≥ t0`.
    pub fn max_abs(&self) -> f64 {
        match *self {
            Envelope::Constant(v) => v.norm(),
            Envelope::Cosine { amplitude, .. } => amplitude.abs(),
            Envelope::Phasor { amplitude, .. } => amplitude.norm(),
            Envelope::Exponential { start, end, .. } => start.abs().max(end.abs()),
        }
    }

    /// Fastest oscillation carried by the envelope itself.
    pub fn frequency(&self) -> f64 {
        match *self {
            Envelope::Cosine { omega, .. } | Envelope::Phasor { omega, .. } => omega.abs(),
            Envelope::Exponential { tau, .. } => 1.0 / tau,
            Envelope::Constant(_) => 0.0,
        }
    }
}

/// A term `f(t)·op`, or `f(t)·op + f(t)*·op†` when `add_conjugate` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct DriveTerm {
    pub op: Operator,
    pub envelope: Envelope,
    pub add_conjugate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeDependentHamiltonian {
    pub static_part: Operator,
    pub terms: Vec<DriveTerm>,
    /// Largest physical frequency of the model, used to pick step sizes.
    pub frequency_scale: f64,
}

impl TimeDependentHamiltonian {
    pub fn constant(h: Operator, frequency_scale: f64) -> Self {
        TimeDependentHamiltonian { static_part: h, terms: Vec::new(), frequency_scale }
    }

    pub fn dim(&self) -> usize {
        self.static_part.nrows()
    }

    pub fn with_term(mut self, term: DriveTerm) -> Self {
        self.frequency_scale = self.frequency_scale.max(term.envelope.frequency()).max(term.envelope.max_abs());
        self.terms.push(term);
        self
    }

    pub fn evaluate(&self, t: f64) -> Operator {
        let mut h = self.static_part.clone();
        for term in &self.terms {
            let f = term.envelope.value(t);
            h += &term.op * f;
            if term.add_conjugate {
                h += term.op.adjoint() * f.conj();
            }
        }
        h
    }

    /// Gershgorin bound on `‖H(t)‖` valid for every `t`.
    pub fn norm_bound(&self) -> f64 {
        let mut bound = gershgorin_radius(&self.static_part);
        for term in &self.terms {
            let k = if term.add_conjugate { 2.0 } else { 1.0 };
            bound += k * term.envelope.max_abs() * gershgorin_radius(&term.op);
        }
        bound
    }
}

/// `H_s` with no parameter validation; used by schedules that vary `ω_a`.
pub(crate) fn assemble_hs(omega_sigma: f64, omega_a: f64, lambda: f64, theta: f64, space: SpaceSpec) -> Operator {
    let a = fock::annihilator(space);
    let x = &a + a.adjoint();
    let num = fock::number(space);
    let coupling = fock::pauli(Axis::Z) * c(theta.cos(), 0.0) - fock::pauli(Axis::X) * c(theta.sin(), 0.0);
    let mut h = kron(&fock::pauli(Axis::Z), &fock::boson_identity(space)) * c(omega_sigma / 2.0, 0.0);
    h += kron(&fock::qubit_identity(), &num) * c(omega_a, 0.0);
    h += kron(&coupling, &x) * c(lambda, 0.0);
    h
}

/// `H_s = (ω_σ/2)σ_z + ω_a a†a + λ(cos θ σ_z − sin θ σ_x)(a + a†)`.
pub fn build_hs(p: &QrmParams, space: SpaceSpec) -> Result<Operator> {
    p.validate()?;
    Ok(assemble_hs(p.omega_sigma, p.omega_a, p.lambda, p.theta, space))
}

/// `H(t) = H_s + Ω cos(ω_L t) σ_x`.
pub fn build_total(p: &QrmParams, d: &DriveParams, space: SpaceSpec) -> Result<TimeDependentHamiltonian> {
    d.validate()?;
    let hs = build_hs(p, space)?;
    let h = TimeDependentHamiltonian::constant(hs, p.frequency_scale());
    if d.omega_rabi == 0.0 {
        return Ok(h);
    }
    let sx = fock::on_qubit(&fock::pauli(Axis::X), space)?;
    Ok(h.with_term(DriveTerm {
        op: sx,
        envelope: Envelope::Cosine { amplitude: d.omega_rabi, omega: d.omega_l, phase: 0.0 },
        add_conjugate: false,
    }))
}

/// `λ_c = √(ω_a ω_σ)/2`.
pub fn critical_coupling(omega_a: f64, omega_sigma: f64) -> Result<f64> {
    if !(omega_a > 0.0) {
        return Err(Error::invalid("omega_a", "must be positive"));
    }
    if !(omega_sigma > 0.0) {
        return Err(Error::invalid("omega_sigma", "must be positive"));
    }
    Ok((omega_a * omega_sigma).sqrt() / 2.0)
}

/// Detuning `Δ_Lσ = ω_L − ω_σ ≥ 0` of the dressed `j`-phonon resonance,
/// `√(j²ω_a² − Ω²)`.
pub fn dressed_resonance(j: u32, omega_a: f64, omega_rabi: f64) -> Result<f64> {
    if j == 0 {
        return Err(Error::invalid("j", "must be at least 1"));
    }
    let limit = j as f64 * omega_a;
    if omega_rabi >= limit {
        return Err(Error::NoRealResonance { j, omega_rabi, limit });
    }
    Ok((limit * limit - omega_rabi * omega_rabi).sqrt())
}

/// `‖HΠ − ΠH‖_F`.
pub fn parity_commutator_norm(h: &Operator, space: SpaceSpec) -> Result<f64> {
    let dim = space.total_dim();
    if h.nrows() != dim || h.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: h.nrows() });
    }
    let p = fock::parity_operator(space);
    let mut sum = 0.0;
    for j in 0..dim {
        for i in 0..dim {
            let d = p[(j, j)] - p[(i, i)];
            sum += (h[(i, j)] * d).norm_sqr();
        }
    }
    Ok(sum.sqrt())
}

/// Lowest eigenpair of a Hamiltonian on the composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundState {
    pub energy: f64,
    pub state: StateVector,
    /// `E_1 − E_0`.
    pub gap: f64,
    /// Number of eigenvalues within the degeneracy tolerance of `E_0`.
    pub degeneracy: usize,
    /// `⟨ψ|Π|ψ⟩` of the returned state.
    pub parity: f64,
}

impl GroundState {
    pub fn is_degenerate(&self) -> bool {
        self.degeneracy > 1
    }
}

/// Relative tolerance for treating the lowest levels as degenerate.
pub const DEGENERACY_REL_TOL: f64 = 1e-10;

/// Ground state with the default degeneracy tolerance
/// `1e-10 · max(|E_0|, frequency unit)`.
pub fn ground_state(h: &Operator) -> Result<GroundState> {
    let (values, vectors) = checked_eigh(h)?;
    let tol = DEGENERACY_REL_TOL * values[0].abs().max(1.0);
    select_ground(values, vectors, tol)
}

/// Ground state treating levels within `tol` (absolute, in the units of `h`)
/// of the minimum as one degenerate subspace.
///
/// Inside a degenerate subspace the returned vector is the combination with
/// the largest parity, so a parity-symmetric model yields the `Π = +1` state.
/// The overall phase makes the largest-magnitude component real positive.
pub fn ground_state_with_tolerance(h: &Operator, tol: f64) -> Result<GroundState> {
    let (values, vectors) = checked_eigh(h)?;
    select_ground(values, vectors, tol)
}

fn checked_eigh(h: &Operator) -> Result<(Vec<f64>, CMatrix)> {
    let dim = h.nrows();
    if dim != h.ncols() {
        return Err(Error::DimensionMismatch { expected: dim, found: h.ncols() });
    }
    if dim < 2 || !dim.is_multiple_of(2) {
        return Err(Error::invalid("hamiltonian", "dimension must be 2·N_c"));
    }
    if hermiticity_defect(h) > 1e-10 {
        return Err(Error::invalid("hamiltonian", "not Hermitian"));
    }
    Ok(eigh(h))
}

fn select_ground(values: Vec<f64>, vectors: CMatrix, tol: f64) -> Result<GroundState> {
    let dim = vectors.nrows();
    let space = SpaceSpec::new(dim / 2)?;
    let parity = fock::parity_operator(space);
    let degeneracy = values.iter().take_while(|&&e| e - values[0] <= tol).count();
    let gap = if dim > 1 { values[1] - values[0] } else { 0.0 };

    let mut psi: CVector = vectors.column(0).into_owned();
    if degeneracy > 1 {
        let basis = vectors.columns(0, degeneracy).into_owned();
        let projected = basis.adjoint() * &parity * &basis;
        let (_, mix) = eigh(&projected);
        // eigenvalues ascending: the last column has the largest parity
        psi = &basis * mix.column(degeneracy - 1);
    }
    fix_phase(&mut psi);
    let state = StateVector::normalized(psi)?;
    let parity_value = state.expectation(&parity).re;
    Ok(GroundState { energy: values[0], state, gap, degeneracy, parity: parity_value })
}

/// Rotates `v` so its largest-magnitude entry (lowest index among near-ties)
/// is real and positive.
pub fn fix_phase(v: &mut CVector) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = v.iter().position(|z| z.norm() >= max * (1.0 - 1e-9)).unwrap_or(0);
    let phase = v[pivot].conj() / c(v[pivot].norm(), 0.0);
    if phase != ZERO {
        *v *= phase;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{basis_state, on_boson, Qubit};
    use crate::linalg::{eigvalsh, frobenius};
    use proptest::prelude::*;

    fn params(ws: f64, lambda: f64, theta: f64) -> QrmParams {
        QrmParams { omega_sigma: ws, omega_a: 1.0, lambda, theta }
    }

    fn mean_phonon(p: &QrmParams, cutoff: usize) -> f64 {
        let s = SpaceSpec::new(cutoff).unwrap();
        let gs = ground_state(&build_hs(p, s).unwrap()).unwrap();
        gs.state.expectation(&on_boson(&fock::number(s), s).unwrap()).re
    }

    #[test]
    fn decoupled_spectrum() {
        let s = SpaceSpec::new(6).unwrap();
        let h = build_hs(&params(2.5, 0.0, 1.0), s).unwrap();
        let vals = eigvalsh(&h);
        let mut expected: Vec<f64> = (0..6).flat_map(|n| [n as f64 - 1.25, n as f64 + 1.25]).collect();
        expected.sort_by(f64::total_cmp);
        for (v, e) in vals.iter().zip(&expected) {
            assert!((v - e).abs() < 1e-12);
        }
        let gs = ground_state(&h).unwrap();
        assert!((gs.energy + 1.25).abs() < 1e-12);
        let g0 = basis_state(0, Qubit::Ground, s).unwrap();
        assert!((gs.state.inner(&g0).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hs_is_exactly_hermitian() {
        let s = SpaceSpec::new(12).unwrap();
        let h = build_hs(&params(4.32, 0.27, 0.7), s).unwrap();
        assert!(hermiticity_defect(&h) < 1e-12);
    }

    #[test]
    fn rejects_bad_theta() {
        let s = SpaceSpec::new(3).unwrap();
        let err = build_hs(&params(1.0, 0.1, 4.0), s).unwrap_err();
        assert!(alloc::format!("{err}").contains("theta must lie in [0, π]"));
    }

    #[test]
    fn phase_transition_in_mean_phonon_number() {
        let lc = critical_coupling(1.0, 6.0).unwrap();
        let below = mean_phonon(&params(6.0, 0.8 * lc, PI / 2.0), 60);
        let above = mean_phonon(&params(6.0, 1.5 * lc, PI / 2.0), 60);
        assert!((below - 0.05685).abs() < 1e-4, "{below}");
        assert!((above - 2.2699).abs() < 1e-3, "{above}");
    }

    #[test]
    fn critical_coupling_values() {
        assert!((critical_coupling(1.0, 6.0).unwrap() - 1.224744871).abs() < 1e-9);
        assert!((critical_coupling(1.0, 4.5).unwrap() - 1.060660172).abs() < 1e-9);
        assert_eq!(critical_coupling(1.0, 1.0).unwrap(), 0.5);
        assert!(critical_coupling(0.0, 1.0).is_err());
    }

    #[test]
    fn dressed_resonances() {
        assert!((dressed_resonance(2, 1.0, 0.95).unwrap() - 1.759971591).abs() < 1e-9);
        assert_eq!(dressed_resonance(1, 1.0, 0.0).unwrap(), 1.0);
        assert!((dressed_resonance(1, 1.0, 0.95).unwrap() - 0.312249900).abs() < 1e-9);
        assert!(matches!(dressed_resonance(1, 1.0, 1.0), Err(Error::NoRealResonance { .. })));
        for j in 1..5 {
            assert_eq!(dressed_resonance(j, 2.0, 0.0).unwrap(), 2.0 * j as f64);
        }
    }

    #[test]
    fn total_hamiltonian_envelope() {
        let s = SpaceSpec::new(4).unwrap();
        let p = params(4.32, 0.27, PI / 2.0);
        let d = DriveParams { omega_rabi: 0.95, omega_l: 6.0 };
        let ht = build_total(&p, &d, s).unwrap();
        let hs = build_hs(&p, s).unwrap();
        let sx = fock::on_qubit(&fock::pauli(Axis::X), s).unwrap();
        assert!(frobenius(&(ht.evaluate(0.0) - (&hs + &sx * c(0.95, 0.0)))) < 1e-14);
        assert!(frobenius(&(ht.evaluate(PI / 12.0) - &hs)) < 1e-14);
        let undriven = build_total(&p, &DriveParams { omega_rabi: 0.0, omega_l: 6.0 }, s).unwrap();
        assert!(undriven.terms.is_empty());
    }

    #[test]
    fn parity_commutator() {
        let s = SpaceSpec::new(20).unwrap();
        let sym = build_hs(&params(4.5, 1.3, PI / 2.0), s).unwrap();
        assert!(parity_commutator_norm(&sym, s).unwrap() < 1e-12);
        let free = build_hs(&params(4.5, 0.0, 0.4), s).unwrap();
        assert!(parity_commutator_norm(&free, s).unwrap() < 1e-12);

        // only the λ cos θ σ_z (a+a†) piece flips parity: ‖·‖ = 2 λ cos θ ‖σ_z⊗(a+a†)‖_F
        let p = params(4.32, 0.27, PI / 6.0);
        let broken = build_hs(&p, s).unwrap();
        let a = fock::annihilator(s);
        let x = &a + a.adjoint();
        let expected = 2.0 * p.lambda * p.theta.cos() * frobenius(&kron(&fock::pauli(Axis::Z), &x));
        let got = parity_commutator_norm(&broken, s).unwrap();
        assert!(got > 0.0);
        assert!((got - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn eigenstates_have_definite_parity_at_half_pi() {
        let s = SpaceSpec::new(20).unwrap();
        let h = build_hs(&params(4.5, 0.6, PI / 2.0), s).unwrap();
        let p = fock::parity_operator(s);
        let (vals, vecs) = eigh(&h);
        for k in 0..10 {
            let isolated = (k == 0 || vals[k] - vals[k - 1] > 1e-6) && vals[k + 1] - vals[k] > 1e-6;
            if !isolated {
                continue;
            }
            let v = vecs.column(k);
            let e = v.dotc(&(&p * v)).re;
            assert!(e.abs() > 1.0 - 1e-9, "level {k}: {e}");
        }
    }

    #[test]
    fn deep_coupling_gap_is_small_but_resolved() {
        let s = SpaceSpec::new(60).unwrap();
        let gs = ground_state(&build_hs(&params(4.5, 2.5, PI / 2.0), s).unwrap()).unwrap();
        assert!((gs.gap - 3.4783e-5).abs() < 2e-8, "{}", gs.gap);
        assert!(!gs.is_degenerate());
        assert!(gs.parity > 1.0 - 1e-9);
    }

    #[test]
    fn degenerate_pair_resolves_to_even_parity() {
        // H = −|0,g⟩⟨0,g| − |0,e⟩⟨0,e| has a degenerate pair of opposite parity,
        // rotated into an arbitrary basis by a mixing unitary
        let s = SpaceSpec::new(2).unwrap();
        let g0 = s.index(0, Qubit::Ground);
        let e0 = s.index(0, Qubit::Excited);
        let mut h = CMatrix::zeros(4, 4);
        h[(g0, g0)] = c(-1.0, 0.0);
        h[(e0, e0)] = c(-1.0, 0.0);
        h[(1, 1)] = c(0.5, 0.0);
        h[(3, 3)] = c(0.7, 0.0);
        let gs = ground_state(&h).unwrap();
        assert_eq!(gs.degeneracy, 2);
        assert!((gs.parity - 1.0).abs() < 1e-12);
        assert!((gs.state.as_vector()[g0] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn phase_convention_is_deterministic() {
        let s = SpaceSpec::new(15).unwrap();
        let h = build_hs(&params(4.32, 0.4, PI / 6.0), s).unwrap();
        let a = ground_state(&h).unwrap();
        let b = ground_state(&(h.clone() * c(1.0, 0.0))).unwrap();
        assert_eq!(a.state, b.state);
        let v = a.state.as_vector();
        let (imax, _) = v.iter().enumerate().fold((0, 0.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
        assert!(v[imax].im.abs() < 1e-15 && v[imax].re > 0.0);
    }

    proptest! {
        #[test]
        fn ground_energy_decreases_with_coupling(theta in 0.0..PI, ws in 0.5f64..6.0) {
            let s = SpaceSpec::new(25).unwrap();
            let mut last = f64::INFINITY;
            for k in 0..8 {
                let e = ground_state(&build_hs(&params(ws, 0.2 * k as f64, theta), s).unwrap()).unwrap().energy;
                prop_assert!(e <= last + 1e-10);
                last = e;
            }
        }

        #[test]
        fn parity_breaking_is_mirror_symmetric(theta in 0.0..PI, lambda in 0.0f64..2.0) {
            let s = SpaceSpec::new(10).unwrap();
            let a = parity_commutator_norm(&build_hs(&params(3.0, lambda, theta), s).unwrap(), s).unwrap();
            let b = parity_commutator_norm(&build_hs(&params(3.0, lambda, PI - theta), s).unwrap(), s).unwrap();
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + a));
        }
    }
}
