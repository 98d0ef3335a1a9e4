//! Dense complex linear-algebra helpers shared by the rest of the crate.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Kronecker product `a ⊗ b`, with `a` carrying the slow index.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn trace(m: &CMatrix) -> C64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// Relative anti-Hermitian part `‖M − M†‖_F / ‖M‖_F` (zero for the zero matrix).
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let norm = frobenius(m);
    if norm == 0.0 {
        return 0.0;
    }
    frobenius(&(m - m.adjoint())) / norm
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted ascending.
///
/// Column `k` of the returned matrix is the eigenvector for eigenvalue `k`.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    // symmetrize so round-off in the input cannot leak into the solver
    let herm = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(m: &CMatrix) -> Vec<f64> {
    let herm = (m + m.adjoint()) * c(0.5, 0.0);
    let mut values: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Applies `f` to the spectrum of a Hermitian matrix: `V f(Λ) V†`.
pub fn hermitian_map(m: &CMatrix, f: impl Fn(f64) -> C64) -> CMatrix {
    let (values, vectors) = eigh(m);
    let n = m.nrows();
    let mut scaled = vectors.clone();
    for (k, &v) in values.iter().enumerate() {
        let fk = f(v);
        for r in 0..n {
            scaled[(r, k)] *= fk;
        }
    }
    scaled * vectors.adjoint()
}

/// Principal square root of a positive semidefinite matrix; negative
/// round-off eigenvalues are clipped to zero.
pub fn sqrtm_psd(m: &CMatrix) -> CMatrix {
    hermitian_map(m, |v| c(v.max(0.0).sqrt(), 0.0))
}

// Padé [13/13] coefficients and the matching scaling threshold (Higham 2005).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn norm1(m: &CMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a Padé-13 approximant.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
    }
    if n == 0 {
        return Ok(a.clone());
    }
    let norm = norm1(a);
    if !norm.is_finite() {
        return Err(Error::invalid("matrix", "non-finite entries"));
    }
    let squarings = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a * c(2f64.powi(-squarings), 0.0);

    let ident = CMatrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |k: usize| c(PADE13[k], 0.0);

    let u_inner = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9));
    let u = &a * (u_inner + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &ident * b(1));
    let v_inner = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8));
    let v = v_inner + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &ident * b(0);

    let lu = (&v - &u).lu();
    let mut result = lu.solve(&(&v + &u)).ok_or(Error::Singular)?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// Row-wise Gershgorin bound on the spectral radius.
pub fn gershgorin_radius(m: &CMatrix) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Coordinate-list view of a matrix holding only its nonzero entries.
///
/// Used by the time-stepping kernels, which apply a handful of very sparse
/// operators to dense density matrices many thousands of times.
#[derive(Clone, Debug, Default)]
pub struct SparseOp {
    pub dim: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    pub fn from_dense(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let z = m[(i, j)];
                if z != ZERO {
                    entries.push((i, j, z));
                }
            }
        }
        SparseOp { dim: m.nrows(), entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `out += self · x` for a column-major `dim × dim` matrix `x`.
    pub fn mul_dense_acc(&self, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for (cin, cout) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            for &(i, k, a) in &self.entries {
                cout[i] += a * cin[k];
            }
        }
    }

    /// `out += self · x · self†` for a column-major `dim × dim` matrix `x`.
    pub fn sandwich_acc(&self, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for &(j, l, b) in &self.entries {
            let bc = b.conj();
            let col_in = &x[l * d..(l + 1) * d];
            let col_out = &mut out[j * d..(j + 1) * d];
            for &(i, k, a) in &self.entries {
                col_out[i] += a * col_in[k] * bc;
            }
        }
    }

    /// `out += s · self · x` for a column-major `dim × dim` matrix `x`.
    pub fn mul_dense_scaled_acc(&self, s: C64, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for (cin, cout) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            for &(i, k, a) in &self.entries {
                cout[i] += s * a * cin[k];
            }
        }
    }

    /// `out += self · v` for a vector.
    pub fn mul_vec_acc(&self, v: &[C64], out: &mut [C64]) {
        for &(i, k, a) in &self.entries {
            out[i] += a * v[k];
        }
    }

    /// `out += s · self · v` for a vector.
    pub fn mul_vec_scaled_acc(&self, s: C64, v: &[C64], out: &mut [C64]) {
        for &(i, k, a) in &self.entries {
            out[i] += s * a * v[k];
        }
    }

    pub fn scaled(&self, s: C64) -> SparseOp {
        SparseOp { dim: self.dim, entries: self.entries.iter().map(|&(i, j, a)| (i, j, a * s)).collect() }
    }

    pub fn adjoint(&self) -> SparseOp {
        SparseOp { dim: self.dim, entries: self.entries.iter().map(|&(i, j, a)| (j, i, a.conj())).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(n: usize, seed: u64) -> CMatrix {
        // small LCG; the tests only need reproducible junk
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        CMatrix::from_fn(n, n, |_, _| c(next(), next()))
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = CMatrix::zeros(4, 4);
        let e = expm(&z).unwrap();
        assert!(frobenius(&(e - CMatrix::identity(4, 4))) < 1e-15);
    }

    #[test]
    fn expm_matches_diagonal_exponential() {
        let d = CMatrix::from_diagonal(&CVector::from_vec(alloc::vec![c(1.0, 0.5), c(-3.0, 2.0), c(12.0, -7.0)]));
        let e = expm(&d).unwrap();
        for i in 0..3 {
            let expected = d[(i, i)].exp();
            assert!((e[(i, i)] - expected).norm() / expected.norm() < 1e-13);
        }
    }

    #[test]
    fn expm_agrees_with_eigen_route_for_hermitian_generator() {
        let m = random_matrix(6, 3) * c(4.0, 0.0);
        let h = (&m + m.adjoint()) * c(0.5, 0.0);
        let via_pade = expm(&(&h * c(0.0, -1.0))).unwrap();
        let via_eigen = hermitian_map(&h, |x| c(0.0, -x).exp());
        assert!(frobenius(&(via_pade - via_eigen)) < 1e-11);
    }

    #[test]
    fn eigh_sorts_and_reconstructs() {
        let m = random_matrix(5, 7);
        let h = (&m + m.adjoint()) * c(0.5, 0.0);
        let (vals, vecs) = eigh(&h);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let lam = CMatrix::from_diagonal(&CVector::from_iterator(5, vals.iter().map(|&v| c(v, 0.0))));
        let back = &vecs * lam * vecs.adjoint();
        assert!(frobenius(&(back - h)) < 1e-12);
    }

    #[test]
    fn sparse_kernels_match_dense_products() {
        let mut a = random_matrix(5, 11);
        a[(0, 0)] = ZERO;
        a[(2, 3)] = ZERO;
        let x = random_matrix(5, 13);
        let sp = SparseOp::from_dense(&a);

        let mut out = alloc::vec![ZERO; 25];
        sp.mul_dense_acc(x.as_slice(), &mut out);
        let dense = &a * &x;
        assert!(out.iter().zip(dense.iter()).all(|(p, q)| (p - q).norm() < 1e-14));

        let mut out = alloc::vec![ZERO; 25];
        sp.sandwich_acc(x.as_slice(), &mut out);
        let dense = &a * &x * a.adjoint();
        assert!(out.iter().zip(dense.iter()).all(|(p, q)| (p - q).norm() < 1e-13));
    }

    #[test]
    fn kron_mixed_product() {
        let a = random_matrix(2, 1);
        let b = random_matrix(3, 2);
        let cm = random_matrix(2, 4);
        let d = random_matrix(3, 5);
        let lhs = kron(&a, &b) * kron(&cm, &d);
        let rhs = kron(&(&a * &cm), &(&b * &d));
        assert!(frobenius(&(lhs - rhs)) < 1e-12);
    }
}
