//! Qubit ⊗ truncated-Fock composite space and its standard operators.
//!
//! Flat index of `|n, s⟩` is `s · N_c + n` with `s = 0` for `|e⟩` and `s = 1`
//! for `|g⟩`; [`embed`] therefore computes `qubit ⊗ boson` with the qubit as
//! the slow factor.

use alloc::vec::Vec;

use crate::linalg::{c, expm, frobenius, kron, CMatrix, CVector, C64, ONE, ZERO};
use crate::{Error, Result, Warning};

/// Hermitian / unitary operators are plain dense matrices.
pub type Operator = CMatrix;

/// Tolerance on `‖D D† − I‖_F` before a displacement is flagged.
pub const UNITARITY_TOL: f64 = 1e-6;
/// Population allowed in the top kept Fock level of `D(β)|0⟩` before a
/// displacement is flagged as truncation-limited.
pub const EDGE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpaceSpec {
    fock_cutoff: usize,
}

impl SpaceSpec {
    pub const QUBIT_DIM: usize = 2;

    pub fn new(fock_cutoff: usize) -> Result<Self> {
        if fock_cutoff < 1 {
            return Err(Error::invalid("fock_cutoff", "must be at least 1"));
        }
        Ok(SpaceSpec { fock_cutoff })
    }

    pub fn fock_cutoff(&self) -> usize {
        self.fock_cutoff
    }

    pub fn total_dim(&self) -> usize {
        Self::QUBIT_DIM * self.fock_cutoff
    }

    /// Flat index of `|n, s⟩`.
    pub fn index(&self, n: usize, s: Qubit) -> usize {
        s.slot() * self.fock_cutoff + n
    }
}

/// Shorthand for [`SpaceSpec::new`].
pub fn make_space(fock_cutoff: usize) -> Result<SpaceSpec> {
    SpaceSpec::new(fock_cutoff)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Qubit {
    Excited,
    Ground,
}

impl Qubit {
    fn slot(self) -> usize {
        match self {
            Qubit::Excited => 0,
            Qubit::Ground => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Subsystem {
    Qubit,
    Boson,
}

/// Unit-norm state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(CVector);

impl StateVector {
    pub const NORM_TOL: f64 = 1e-12;

    pub fn new(v: CVector) -> Result<Self> {
        let norm = v.norm();
        if (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::invalid("state", alloc::format!("norm {norm} is not 1")));
        }
        Ok(StateVector(v))
    }

    /// Normalizes `v`; fails on the zero vector.
    pub fn normalized(v: CVector) -> Result<Self> {
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::invalid("state", "cannot normalize"));
        }
        Ok(StateVector(v / c(norm, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &CVector {
        &self.0
    }

    pub fn into_inner(self) -> CVector {
        self.0
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn expectation(&self, op: &Operator) -> C64 {
        self.0.dotc(&(op * &self.0))
    }

    pub fn projector(&self) -> DensityMatrix {
        DensityMatrix(&self.0 * self.0.adjoint())
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
///
/// [`DensityMatrix::new`] checks all three; the time-stepping code builds
/// intermediate states with [`DensityMatrix::new_unchecked`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub const TRACE_TOL: f64 = 1e-9;
    pub const EIGEN_TOL: f64 = 1e-9;

    pub fn new(m: CMatrix) -> Result<Self> {
        let (r, cols) = m.shape();
        if r != cols {
            return Err(Error::DimensionMismatch { expected: r, found: cols });
        }
        let scale = frobenius(&m).max(1.0);
        if frobenius(&(&m - m.adjoint())) > 1e-9 * scale {
            return Err(Error::invalid("rho", "not Hermitian"));
        }
        let tr = crate::linalg::trace(&m);
        if (tr.re - 1.0).abs() > Self::TRACE_TOL || tr.im.abs() > Self::TRACE_TOL {
            return Err(Error::invalid("rho", alloc::format!("trace {tr} is not 1")));
        }
        let min = crate::linalg::eigvalsh(&m).first().copied().unwrap_or(0.0);
        if min < -Self::EIGEN_TOL {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        Ok(DensityMatrix(m))
    }

    pub fn new_unchecked(m: CMatrix) -> Self {
        DensityMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> C64 {
        crate::linalg::trace(&self.0)
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix(kron(&self.0, &other.0))
    }
}

pub fn annihilator(space: SpaceSpec) -> Operator {
    let n = space.fock_cutoff();
    let mut a = CMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = c((k as f64).sqrt(), 0.0);
    }
    a
}

pub fn creator(space: SpaceSpec) -> Operator {
    annihilator(space).adjoint()
}

pub fn number(space: SpaceSpec) -> Operator {
    let n = space.fock_cutoff();
    CMatrix::from_fn(n, n, |i, j| if i == j { c(i as f64, 0.0) } else { ZERO })
}

pub fn boson_identity(space: SpaceSpec) -> Operator {
    CMatrix::identity(space.fock_cutoff(), space.fock_cutoff())
}

pub fn qubit_identity() -> Operator {
    CMatrix::identity(2, 2)
}

/// Pauli matrix in the `(|e⟩, |g⟩)` basis, so `σ_z |e⟩ = +|e⟩`.
pub fn pauli(axis: Axis) -> Operator {
    let (a, b, cc, d) = match axis {
        Axis::X => (ZERO, ONE, ONE, ZERO),
        Axis::Y => (ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO),
        Axis::Z => (ONE, ZERO, ZERO, -ONE),
    };
    CMatrix::from_row_slice(2, 2, &[a, b, cc, d])
}

/// Lowering operator `σ = |g⟩⟨e|`.
pub fn sigma_minus() -> Operator {
    CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO])
}

/// Raising operator `σ† = |e⟩⟨g|`.
pub fn sigma_plus() -> Operator {
    sigma_minus().adjoint()
}

/// `qubit_op ⊗ boson_op` on the composite space.
pub fn embed(qubit_op: &Operator, boson_op: &Operator, space: SpaceSpec) -> Result<Operator> {
    check_square(qubit_op, 2)?;
    check_square(boson_op, space.fock_cutoff())?;
    Ok(kron(qubit_op, boson_op))
}

fn check_square(m: &CMatrix, n: usize) -> Result<()> {
    if m.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: m.nrows() });
    }
    if m.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: m.ncols() });
    }
    Ok(())
}

/// Qubit operator on the composite space.
pub fn on_qubit(op: &Operator, space: SpaceSpec) -> Result<Operator> {
    embed(op, &boson_identity(space), space)
}

/// Boson operator on the composite space.
pub fn on_boson(op: &Operator, space: SpaceSpec) -> Result<Operator> {
    embed(&qubit_identity(), op, space)
}

/// `Π = exp(iπ (a†a + (σ_z + 1)/2))`, diagonal with entries ±1.
pub fn parity_operator(space: SpaceSpec) -> Operator {
    let nc = space.fock_cutoff();
    let dim = space.total_dim();
    let mut p = CMatrix::zeros(dim, dim);
    for n in 0..nc {
        let sign = |k: usize| if k.is_multiple_of(2) { ONE } else { -ONE };
        p[(space.index(n, Qubit::Excited), space.index(n, Qubit::Excited))] = sign(n + 1);
        p[(space.index(n, Qubit::Ground), space.index(n, Qubit::Ground))] = sign(n);
    }
    p
}

/// Boson-only parity `exp(iπ a†a)`.
pub fn boson_parity(space: SpaceSpec) -> Operator {
    let n = space.fock_cutoff();
    CMatrix::from_fn(n, n, |i, j| match (i == j, i % 2) {
        (true, 0) => ONE,
        (true, _) => -ONE,
        _ => ZERO,
    })
}

/// A displacement operator together with any truncation diagnostics.
#[derive(Clone, Debug)]
pub struct Displacement {
    pub op: Operator,
    pub warnings: Vec<Warning>,
}

/// `D(β) = exp(β a† − β* a)` on the boson space.
pub fn displacement(space: SpaceSpec, beta: C64) -> Result<Displacement> {
    let a = annihilator(space);
    let generator = a.adjoint() * beta - &a * beta.conj();
    let op = expm(&generator)?;
    let warnings = displacement_diagnostics(&op, beta);
    Ok(Displacement { op, warnings })
}

pub(crate) fn displacement_diagnostics(op: &Operator, beta: C64) -> Vec<Warning> {
    let n = op.nrows();
    let mut warnings = Vec::new();
    let defect = frobenius(&(op * op.adjoint() - CMatrix::identity(n, n)));
    if defect > UNITARITY_TOL {
        warnings.push(Warning::DisplacementNotUnitary { beta, defect });
    }
    // the exponential of a truncated anti-Hermitian generator is unitary by
    // construction, so the defect check rarely trips; the top-level
    // population of D|0⟩ is the informative signal
    let edge_population = op[(n - 1, 0)].norm_sqr();
    if n > 1 && edge_population > EDGE_TOL {
        warnings.push(Warning::TruncationLeakage { beta, edge_population });
    }
    warnings
}

/// Reduced density matrix of the kept subsystem.
pub fn partial_trace(rho: &DensityMatrix, keep: Subsystem, space: SpaceSpec) -> Result<DensityMatrix> {
    let m = rho.as_matrix();
    let dim = space.total_dim();
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: m.nrows() });
    }
    let nc = space.fock_cutoff();
    let out = match keep {
        Subsystem::Qubit => CMatrix::from_fn(2, 2, |s, t| (0..nc).map(|n| m[(s * nc + n, t * nc + n)]).sum()),
        Subsystem::Boson => CMatrix::from_fn(nc, nc, |n, k| m[(n, k)] + m[(nc + n, nc + k)]),
    };
    Ok(DensityMatrix::new_unchecked(out))
}

pub fn basis_state(n: usize, s: Qubit, space: SpaceSpec) -> Result<StateVector> {
    if n >= space.fock_cutoff() {
        return Err(Error::OutOfRange { index: n, limit: space.fock_cutoff() });
    }
    let mut v = CVector::zeros(space.total_dim());
    v[space.index(n, s)] = ONE;
    Ok(StateVector(v))
}

/// Boson Fock state `|n⟩`.
pub fn fock_state(n: usize, space: SpaceSpec) -> Result<StateVector> {
    if n >= space.fock_cutoff() {
        return Err(Error::OutOfRange { index: n, limit: space.fock_cutoff() });
    }
    let mut v = CVector::zeros(space.fock_cutoff());
    v[n] = ONE;
    Ok(StateVector(v))
}

/// Extends (zero-pads) or truncates a boson-space operator to another cutoff.
pub fn resize_boson(m: &CMatrix, cutoff: usize) -> CMatrix {
    CMatrix::from_fn(cutoff, cutoff, |i, j| if i < m.nrows() && j < m.ncols() { m[(i, j)] } else { ZERO })
}
