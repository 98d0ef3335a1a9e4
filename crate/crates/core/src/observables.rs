//! Expectations, phonon statistics, entropy, fidelity, characteristic
//! function and Wigner reconstruction, and blue-sideband distribution fits.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, DVector};

use crate::fock::{self, DensityMatrix, Operator, SpaceSpec, StateVector};
use crate::linalg::{c, eigvalsh, expm, hermiticity_defect, sqrtm_psd, CMatrix, C64, ZERO};
use crate::{Error, Result, Warning};

/// `Tr(ρ O)`.
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<C64> {
    let m = rho.as_matrix();
    let d = m.nrows();
    if op.nrows() != d || op.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: op.nrows() });
    }
    let mut acc = ZERO;
    for j in 0..d {
        for i in 0..d {
            acc += m[(i, j)] * op[(j, i)];
        }
    }
    Ok(acc)
}

/// `Tr(ρ O)` for Hermitian `O`; fails if the imaginary part exceeds 1e-10
/// (relative to the operator scale).
pub fn expectation_real(rho: &DensityMatrix, op: &Operator) -> Result<f64> {
    let v = expectation(rho, op)?;
    let scale = op.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if v.im.abs() > 1e-10 * scale || hermiticity_defect(op) > 1e-10 {
        return Err(Error::invalid("operator", "expectation is not real; operator is not Hermitian"));
    }
    Ok(v.re)
}

/// Probability vector, with a warning if negative round-off had to be clipped.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    pub probs: Vec<f64>,
    pub warning: Option<Warning>,
}

impl Distribution {
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }
}

/// Diagonal of a boson-only density matrix.
pub fn phonon_distribution(rho_a: &DensityMatrix) -> Distribution {
    let m = rho_a.as_matrix();
    let raw: Vec<f64> = (0..m.nrows()).map(|n| m[(n, n)].re).collect();
    normalize_probabilities(raw)
}

/// Phonon distribution of a composite state (qubit traced out).
pub fn phonon_distribution_of(rho: &DensityMatrix, space: SpaceSpec) -> Result<Distribution> {
    Ok(phonon_distribution(&fock::partial_trace(rho, fock::Subsystem::Boson, space)?))
}

fn normalize_probabilities(mut p: Vec<f64>) -> Distribution {
    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    let mut warning = None;
    if min < -1e-9 {
        warning = Some(Warning::ClippedDistribution { min_value: min });
    }
    p.iter_mut().for_each(|x| *x = x.max(0.0));
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        p.iter_mut().for_each(|x| *x /= total);
    }
    Distribution { probs: p, warning }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

/// Eigenvalues below this are treated as exact zeros in entropies.
pub const ENTROPY_CLIP: f64 = 1e-12;

/// `−Σ eᵢ ln eᵢ` over eigenvalues above [`ENTROPY_CLIP`], optionally in bits.
pub fn vn_entropy(rho: &DensityMatrix, base: LogBase) -> f64 {
    let s: f64 = eigvalsh(rho.as_matrix())
        .into_iter()
        .filter(|&e| e > ENTROPY_CLIP)
        .map(|e| -e * e.ln())
        .sum();
    match base {
        LogBase::Natural => s,
        LogBase::Two => s / LN_2,
    }
}

/// Uhlmann fidelity `Tr √(√ρ₁ ρ₂ √ρ₁)`, clamped to `[0, 1]`.
pub fn fidelity(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    if rho1.dim() != rho2.dim() {
        return Err(Error::DimensionMismatch { expected: rho1.dim(), found: rho2.dim() });
    }
    for rho in [rho1, rho2] {
        let min = eigvalsh(rho.as_matrix())[0];
        if min < -1e-8 {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
    }
    let s = sqrtm_psd(rho1.as_matrix());
    let inner = &s * rho2.as_matrix() * &s;
    let eig = eigvalsh(&inner);
    // round-off eigenvalues of rank-deficient inputs would otherwise add √ε each
    let floor = 1e-13 * eig.last().copied().unwrap_or(0.0).max(0.0);
    let f: f64 = eig.into_iter().filter(|&e| e > floor).map(f64::sqrt).sum();
    Ok(f.clamp(0.0, 1.0))
}

/// Fidelity of a pure state with a density matrix, `√⟨ψ|ρ|ψ⟩`.
pub fn fidelity_pure(psi: &StateVector, rho: &DensityMatrix) -> Result<f64> {
    if psi.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: psi.dim() });
    }
    let v = psi.as_vector();
    Ok(v.dotc(&(rho.as_matrix() * v)).re.max(0.0).sqrt().min(1.0))
}

/// Fidelity between pure states, `|⟨ψ|φ⟩|`.
pub fn fidelity_states(psi: &StateVector, phi: &StateVector) -> Result<f64> {
    if psi.dim() != phi.dim() {
        return Err(Error::DimensionMismatch { expected: psi.dim(), found: phi.dim() });
    }
    Ok(psi.inner(phi).norm().min(1.0))
}

/// Square sampling grid for `χ(β)`: `points × points` values over
/// `Re β, Im β ∈ [−extent, extent]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiGridSpec {
    pub extent: f64,
    pub points: usize,
}

impl Default for ChiGridSpec {
    fn default() -> Self {
        ChiGridSpec { extent: 3.0, points: 41 }
    }
}

impl ChiGridSpec {
    pub fn axis(&self) -> Vec<f64> {
        let n = self.points;
        (0..n).map(|k| -self.extent + 2.0 * self.extent * k as f64 / (n - 1) as f64).collect()
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / (self.points - 1) as f64
    }

    fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::invalid("points", "need at least 2 grid points"));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::invalid("extent", "must be positive"));
        }
        Ok(())
    }
}

/// `χ(β) = Tr(ρ D(β))` sampled on a grid. Index `[i_re · n_im + i_im]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiGrid {
    pub beta_re: Vec<f64>,
    pub beta_im: Vec<f64>,
    pub real: Vec<f64>,
    pub imag: Vec<f64>,
    pub warnings: Vec<Warning>,
}

impl ChiGrid {
    pub fn value(&self, i_re: usize, i_im: usize) -> C64 {
        let k = i_re * self.beta_im.len() + i_im;
        c(self.real[k], self.imag[k])
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.imag.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Samples the characteristic function of a boson-only state.
///
/// `D(r e^{iφ}) = R(φ) D(r) R(φ)†` with `R(φ) = e^{iφ a†a}`, so one matrix
/// exponential per distinct radius suffices:
/// `χ = Σ_{mn} ρ_{mn} D(r)_{nm} e^{iφ(n−m)}`.
pub fn characteristic_function(rho_a: &DensityMatrix, spec: &ChiGridSpec) -> Result<ChiGrid> {
    spec.validate()?;
    let space = SpaceSpec::new(rho_a.dim())?;
    let axis = spec.axis();
    let rho = rho_a.as_matrix();
    let n = space.fock_cutoff();
    let a = fock::annihilator(space);
    let generator = a.adjoint() - &a;

    let mut cache: BTreeMap<u64, CMatrix> = BTreeMap::new();
    let mut worst: Option<(f64, Vec<Warning>)> = None;
    let mut real = Vec::with_capacity(axis.len() * axis.len());
    let mut imag = Vec::with_capacity(axis.len() * axis.len());
    for &br in &axis {
        for &bi in &axis {
            let beta = c(br, bi);
            let r = beta.norm();
            let phi = beta.arg();
            let key = r.to_bits();
            if let alloc::collections::btree_map::Entry::Vacant(slot) = cache.entry(key) {
                let d0 = expm(&(&generator * c(r, 0.0)))?;
                let warnings = fock::displacement_diagnostics(&d0, c(r, 0.0));
                if !warnings.is_empty() && worst.as_ref().is_none_or(|(w, _)| r > *w) {
                    worst = Some((r, warnings));
                }
                slot.insert(d0);
            }
            let d0 = &cache[&key];
            let mut acc = ZERO;
            for m in 0..n {
                for k in 0..n {
                    let phase = C64::from_polar(1.0, phi * (k as f64 - m as f64));
                    acc += rho[(m, k)] * d0[(k, m)] * phase;
                }
            }
            real.push(acc.re);
            imag.push(acc.im);
        }
    }
    // report the truncation diagnostics of the largest offending radius only
    let warnings = worst.map(|(_, w)| w).unwrap_or_default();
    Ok(ChiGrid { beta_re: axis.clone(), beta_im: axis, real, imag, warnings })
}

/// Output window and zero-padding for [`wigner_from_chi`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WignerSpec {
    /// Half-width of the square `(x, p)` window.
    pub extent: f64,
    /// Zero-padding factor of the transform.
    pub pad: usize,
}

impl Default for WignerSpec {
    fn default() -> Self {
        WignerSpec { extent: 4.0, pad: 4 }
    }
}

/// `W(x, p)` on a uniform lattice, `γ = x + ip`. Index `[i_x · n_p + i_p]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerGrid {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub values: Vec<f64>,
    pub dx: f64,
    pub dp: f64,
    /// Largest imaginary residue of the transform (zero for a Hermitian χ).
    pub max_imag: f64,
}

/// A local maximum of a Wigner grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub ix: usize,
    pub ip: usize,
    pub x: f64,
    pub p: f64,
    pub value: f64,
}

impl WignerGrid {
    pub fn value(&self, ix: usize, ip: usize) -> f64 {
        self.values[ix * self.p.len() + ip]
    }

    /// `Σ W Δx Δp`.
    pub fn normalization(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx * self.dp
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value at the lattice point closest to `(x, p)`.
    pub fn nearest(&self, x: f64, p: f64) -> f64 {
        let ix = nearest_index(&self.x, x);
        let ip = nearest_index(&self.p, p);
        self.value(ix, ip)
    }

    /// Interior points not exceeded by any of their 8 neighbours and at least
    /// `min_fraction · max W`.
    pub fn local_maxima(&self, min_fraction: f64) -> Vec<Peak> {
        let (nx, np) = (self.x.len(), self.p.len());
        let floor = min_fraction * self.max();
        let mut out = Vec::new();
        for ix in 1..nx.saturating_sub(1) {
            for ip in 1..np.saturating_sub(1) {
                let v = self.value(ix, ip);
                if v < floor {
                    continue;
                }
                let is_max = (ix - 1..=ix + 1)
                    .flat_map(|jx| (ip - 1..=ip + 1).map(move |jp| (jx, jp)))
                    .filter(|&(jx, jp)| (jx, jp) != (ix, ip))
                    .all(|(jx, jp)| self.value(jx, jp) <= v);
                if is_max {
                    out.push(Peak { ix, ip, x: self.x[ix], p: self.p[ip], value: v });
                }
            }
        }
        out
    }
}

fn nearest_index(axis: &[f64], v: f64) -> usize {
    axis.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn uniform_spacing(axis: &[f64]) -> Result<f64> {
    if axis.len() < 2 {
        return Err(Error::NonUniformGrid);
    }
    let d = axis[1] - axis[0];
    if !(d > 0.0) || axis.windows(2).any(|w| ((w[1] - w[0]) - d).abs() > 1e-9 * d) {
        return Err(Error::NonUniformGrid);
    }
    Ok(d)
}

/// Discrete form of `W(γ) = (1/π²) ∫ χ(β) e^{γβ* − γ*β} d²β`.
///
/// With `γ = x + ip` the kernel is `exp(2i(p β_r − x β_i))`. The transform is
/// evaluated directly on the zero-padded frequency lattice, whose spacing is
/// `π/(pad · n · Δβ)` for `n` samples per axis; only lattice points with
/// `|x|, |p| ≤ extent` are returned. The sampled χ can only represent
/// `|x|, |p| ≤ π/(2Δβ)`, and a larger window is rejected.
pub fn wigner_from_chi(chi: &ChiGrid, spec: &WignerSpec) -> Result<WignerGrid> {
    let dr = uniform_spacing(&chi.beta_re)?;
    let di = uniform_spacing(&chi.beta_im)?;
    if spec.pad == 0 {
        return Err(Error::invalid("pad", "must be at least 1"));
    }
    let limit = PI / (2.0 * dr.max(di));
    if spec.extent > limit + 1e-12 {
        return Err(Error::NyquistViolation { extent: spec.extent, limit });
    }
    let lattice = |d: f64, n: usize| {
        let step = PI / (spec.pad as f64 * n as f64 * d);
        let k = (spec.extent / step + 1e-9).floor() as i64;
        ((-k..=k).map(|j| j as f64 * step).collect::<Vec<f64>>(), step)
    };
    let (xs, dx) = lattice(di, chi.beta_im.len());
    let (ps, dp) = lattice(dr, chi.beta_re.len());
    let (nr, ni) = (chi.beta_re.len(), chi.beta_im.len());

    // T[r][x] = Σ_i χ(r, i) e^{−2i x β_i}
    let mut t = vec![ZERO; nr * xs.len()];
    for r in 0..nr {
        for (ix, &x) in xs.iter().enumerate() {
            let mut acc = ZERO;
            for i in 0..ni {
                acc += chi.value(r, i) * C64::from_polar(1.0, -2.0 * x * chi.beta_im[i]);
            }
            t[r * xs.len() + ix] = acc;
        }
    }
    let norm = dr * di / (PI * PI);
    let mut values = Vec::with_capacity(xs.len() * ps.len());
    let mut max_imag: f64 = 0.0;
    for (ix, _) in xs.iter().enumerate() {
        for &p in &ps {
            let mut acc = ZERO;
            for r in 0..nr {
                acc += t[r * xs.len() + ix] * C64::from_polar(1.0, 2.0 * p * chi.beta_re[r]);
            }
            let w = acc * norm;
            max_imag = max_imag.max(w.im.abs());
            values.push(w.re);
        }
    }
    Ok(WignerGrid { x: xs, p: ps, values, dx, dp, max_imag })
}

/// Decay model of blue-sideband flops: `Ω_n = η Ω₀ √(n+1)`,
/// `κ_n = κ₀ (n+1)^exponent`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SidebandModel {
    pub base_rabi: f64,
    pub eta: f64,
    pub kappa0: f64,
    pub exponent: f64,
}

impl SidebandModel {
    pub fn new(base_rabi: f64, eta: f64, kappa0: f64) -> Self {
        SidebandModel { base_rabi, eta, kappa0, exponent: 0.7 }
    }

    pub fn rabi(&self, n: usize) -> f64 {
        self.eta * self.base_rabi * ((n + 1) as f64).sqrt()
    }

    pub fn decay(&self, n: usize) -> f64 {
        self.kappa0 * ((n + 1) as f64).powf(self.exponent)
    }

    /// Single-level flop `½[1 − cos(Ω_n t) e^{−κ_n t}]`.
    pub fn basis(&self, n: usize, t: f64) -> f64 {
        0.5 * (1.0 - (self.rabi(n) * t).cos() * (-self.decay(n) * t).exp())
    }

    fn validate(&self) -> Result<()> {
        if !(self.base_rabi > 0.0 && self.eta > 0.0) {
            return Err(Error::invalid("sideband", "base_rabi and eta must be positive"));
        }
        if !(self.kappa0 >= 0.0) {
            return Err(Error::invalid("kappa0", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SidebandSignal {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub model: SidebandModel,
}

/// Forward model `P_flip(t) = ½ Σ_n P_n [1 − cos(Ω_n t) e^{−κ_n t}]`.
pub fn blue_sideband_signal(populations: &[f64], model: SidebandModel, times: &[f64]) -> Result<SidebandSignal> {
    model.validate()?;
    let values = times
        .iter()
        .map(|&t| populations.iter().enumerate().map(|(n, &p)| p * model.basis(n, t)).sum())
        .collect();
    Ok(SidebandSignal { times: times.to_vec(), values, model })
}

/// [`blue_sideband_signal`] for the phonon distribution of a boson-only state.
pub fn blue_sideband_from_state(rho_a: &DensityMatrix, model: SidebandModel, times: &[f64]) -> Result<SidebandSignal> {
    blue_sideband_signal(&phonon_distribution(rho_a).probs, model, times)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    /// Fitted populations, normalized to sum to 1.
    pub probs: Vec<f64>,
    /// One-sigma uncertainty per component (same normalization).
    pub uncertainty: Vec<f64>,
    /// Unnormalized fitted weight `Σ P_n`; 1 for a consistent signal.
    pub weight: f64,
    pub residual_rms: f64,
}

/// Non-negative least-squares fit of a sideband signal onto the flop
/// dictionary `{n = 0 .. n_max−1}`.
///
/// A signal that no non-negative combination explains (for instance a flat
/// zero signal) returns [`Error::InfeasibleFit`].
pub fn extract_distribution(signal: &SidebandSignal, n_max: usize) -> Result<Extraction> {
    let model = signal.model;
    model.validate()?;
    if n_max == 0 {
        return Err(Error::invalid("n_max", "must be at least 1"));
    }
    let m = signal.times.len();
    if m != signal.values.len() {
        return Err(Error::DimensionMismatch { expected: m, found: signal.values.len() });
    }
    if m < n_max {
        return Err(Error::IllConditioned(alloc::format!("{m} samples for {n_max} unknowns")));
    }
    let span = signal.times.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - signal.times.iter().copied().fold(f64::INFINITY, f64::min);
    let slowest = 2.0 * PI / model.rabi(0);
    if span < slowest {
        return Err(Error::IllConditioned(alloc::format!(
            "time span {span:e} shorter than the slowest Rabi period {slowest:e}"
        )));
    }
    let a = DMatrix::from_fn(m, n_max, |i, n| model.basis(n, signal.times[i]));
    let y = DVector::from_column_slice(&signal.values);
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin > 1e-10 * smax) {
        return Err(Error::IllConditioned(alloc::format!("dictionary condition number {:e}", smax / smin)));
    }

    let w = nnls(&a, &y)?;
    let weight: f64 = w.iter().sum();
    if !(weight > 1e-9) {
        return Err(Error::InfeasibleFit { weight });
    }
    let resid = &y - &a * &w;
    let rss = resid.norm_squared();
    let dof = (m - n_max).max(1) as f64;
    let sigma2 = rss / dof;
    let ata = a.transpose() * &a;
    let cov = ata.try_inverse().ok_or(Error::Singular)?;
    let probs = w.iter().map(|v| v / weight).collect();
    let uncertainty = (0..n_max).map(|n| (sigma2 * cov[(n, n)]).max(0.0).sqrt() / weight).collect();
    Ok(Extraction { probs, uncertainty, weight, residual_rms: (rss / m as f64).sqrt() })
}

fn lstsq(a: &DMatrix<f64>, cols: &[usize], y: &DVector<f64>) -> Result<DVector<f64>> {
    let sub = DMatrix::from_fn(a.nrows(), cols.len(), |i, k| a[(i, cols[k])]);
    sub.svd(true, true).solve(y, 1e-14).map_err(|_| Error::Singular)
}

/// Lawson-Hanson active-set non-negative least squares.
pub fn nnls(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * a.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0) * y.norm().max(1.0);
    for _ in 0..3 * n + 10 {
        let grad = a.transpose() * (y - a * &x);
        let candidate = (0..n).filter(|&j| !passive[j]).max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let Some(j) = candidate else { break };
        if grad[j] <= tol {
            break;
        }
        passive[j] = true;
        loop {
            let cols: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let s_p = lstsq(a, &cols, y)?;
            let mut s = DVector::zeros(n);
            for (k, &col) in cols.iter().enumerate() {
                s[col] = s_p[k];
            }
            if cols.iter().all(|&k| s[k] > 0.0) {
                x = s;
                break;
            }
            let alpha = cols
                .iter()
                .filter(|&&k| s[k] <= 0.0)
                .map(|&k| x[k] / (x[k] - s[k]))
                .fold(f64::INFINITY, f64::min);
            x += (s - &x) * alpha;
            for &k in &cols {
                if x[k] <= 1e-15 {
                    x[k] = 0.0;
                    passive[k] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    Ok(x)
}
