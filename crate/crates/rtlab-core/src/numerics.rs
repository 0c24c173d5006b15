//! Dense complex-matrix numerics: square matrices over `Complex64`, a cyclic
//! Jacobi eigensolver for Hermitian matrices, trace distance, and Uhlmann
//! fidelity.
//!
//! Matrices are row-major and square; dimensions are capped at [`MAX_DIM`]
//! because every state in this crate is a small multi-qubit block evaluated
//! factor-by-factor. Hermiticity is a *validated precondition*, never a
//! silent repair: callers holding almost-Hermitian data must opt in via
//! [`ComplexMatrix::hermitized`].

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
// Needed in pure no_std builds; test builds pull std into the crate graph
// (via dev-dependencies), and std's inherent f64 methods then shadow these.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::states::DensityMatrix;

/// Largest supported matrix dimension.
pub const MAX_DIM: usize = 64;

/// Tolerance on `max |a_ij - conj(a_ji)|` for a matrix to count as Hermitian.
pub const HERMITICITY_TOLERANCE: f64 = 1e-12;

/// Required accuracy of `V diag(w) V' - M` after eigendecomposition.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-10;

const MAX_JACOBI_SWEEPS: usize = 128;

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Zero matrix of dimension `dim`.
    pub fn zeros(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("matrix dimension must be >= 1".into()));
        }
        if dim > MAX_DIM {
            return Err(Error::DimensionTooLarge(dim, MAX_DIM));
        }
        Ok(Self { dim, data: vec![Complex64::new(0.0, 0.0); dim * dim] })
    }

    /// Identity matrix of dimension `dim`.
    pub fn identity(dim: usize) -> Result<Self> {
        let mut m = Self::zeros(dim)?;
        for i in 0..dim {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        Ok(m)
    }

    /// Build from nested rows; all rows must have length equal to the row count.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        let mut m = Self::zeros(dim)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch(row.len(), dim));
            }
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(diag.len())?;
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, Complex64::new(v, 0.0));
        }
        Ok(m)
    }

    /// Rank-1 matrix `|ket><ket|` (no normalization applied).
    pub fn outer(ket: &[Complex64]) -> Result<Self> {
        let mut m = Self::zeros(ket.len())?;
        for i in 0..ket.len() {
            for j in 0..ket.len() {
                m.set(i, j, ket[i] * ket[j].conj());
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.dim + j] = v;
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(self.dim, other.dim));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a -= *b;
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= s;
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let n = self.dim;
        let mut out = Self::zeros(n)?;
        for i in 0..n {
            for k in 0..n {
                let aik = self.get(i, k);
                if aik.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let v = out.get(i, j) + aik * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, self.get(j, i).conj());
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Kronecker product; errors if the combined dimension exceeds [`MAX_DIM`].
    pub fn kron(&self, other: &Self) -> Result<Self> {
        let n = self.dim * other.dim;
        let mut out = Self::zeros(n)?;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let a = self.get(i, j);
                for k in 0..other.dim {
                    for l in 0..other.dim {
                        out.set(i * other.dim + k, j * other.dim + l, a * other.get(k, l));
                    }
                }
            }
        }
        Ok(out)
    }

    /// `max_ij |a_ij - conj(a_ji)|` — zero for exactly Hermitian matrices.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                let d = (self.get(i, j) - self.get(j, i).conj()).norm();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    pub fn is_hermitian_within(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Errors unless the matrix is Hermitian within [`HERMITICITY_TOLERANCE`].
    pub fn require_hermitian(&self) -> Result<()> {
        let defect = self.hermiticity_defect();
        if defect > HERMITICITY_TOLERANCE {
            return Err(Error::NotHermitian(defect));
        }
        Ok(())
    }

    /// Explicit repair: `(M + M')/2`. This is the only sanctioned way to turn
    /// almost-Hermitian data into Hermitian data.
    pub fn hermitized(&self) -> Self {
        let adj = self.adjoint();
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(adj.data.iter()) {
            *a = (*a + *b) * 0.5;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_dim(other)?;
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (*a - *b).norm())
            .fold(0.0, f64::max))
    }

    /// Real part of `Tr(self * other)`.
    pub fn trace_product_re(&self, other: &Self) -> Result<f64> {
        self.check_same_dim(other)?;
        let n = self.dim;
        let mut acc = 0.0;
        for i in 0..n {
            for k in 0..n {
                acc += (self.get(i, k) * other.get(k, i)).re;
            }
        }
        Ok(acc)
    }
}

/// Result of a Hermitian eigendecomposition: `values` ascending, `vectors`
/// holding the matching eigenvectors as columns (unitary).
#[derive(Debug, Clone)]
pub struct Eigendecomposition {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl Eigendecomposition {
    /// Reassemble `V diag(values) V'`.
    pub fn reconstruct(&self) -> Result<ComplexMatrix> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        // scale column j by values[j], then multiply by V'
        for j in 0..n {
            for i in 0..n {
                let v = scaled.get(i, j) * self.values[j];
                scaled.set(i, j, v);
            }
        }
        scaled.matmul(&self.vectors.adjoint())
    }

    /// Apply `f` to every eigenvalue and reassemble the matrix function.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<ComplexMatrix> {
        let mapped = Eigendecomposition {
            values: self.values.iter().map(|&w| f(w)).collect(),
            vectors: self.vectors.clone(),
        };
        mapped.reconstruct()
    }
}

/// One Jacobi rotation zeroing the (p,q) off-diagonal entry of `a`,
/// accumulating the rotation into `v`.
fn jacobi_rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a.get(p, q);
    let m = apq.norm();
    if m == 0.0 {
        return;
    }
    let app = a.get(p, p).re;
    let aqq = a.get(q, q).re;
    let phase = apq / m; // e^{i arg(apq)}

    // Real 2x2 symmetric Schur rotation for [[app, m], [m, aqq]].
    let tau = (aqq - app) / (2.0 * m);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    let n = a.dim();
    // Columns/rows p and q of A; the complex rotation is the real one
    // conjugated by diag(1, e^{-i phi}).
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        let new_kp = akp * c - akq * phase.conj() * s;
        let new_kq = akp * phase * s + akq * c;
        a.set(k, p, new_kp);
        a.set(k, q, new_kq);
        a.set(p, k, new_kp.conj());
        a.set(q, k, new_kq.conj());
    }
    a.set(p, p, Complex64::new(app - t * m, 0.0));
    a.set(q, q, Complex64::new(aqq + t * m, 0.0));
    a.set(p, q, Complex64::new(0.0, 0.0));
    a.set(q, p, Complex64::new(0.0, 0.0));

    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, vkp * c - vkq * phase.conj() * s);
        v.set(k, q, vkp * phase * s + vkq * c);
    }
}

fn offdiag_norm(a: &ComplexMatrix) -> f64 {
    let n = a.dim();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a.get(i, j).norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi sweeps.
///
/// Eigenvalues come back ascending with matching eigenvector columns. Input
/// must be Hermitian within [`HERMITICITY_TOLERANCE`]; almost-Hermitian data
/// is rejected rather than repaired.
pub fn hermitian_eigendecomposition(m: &ComplexMatrix) -> Result<Eigendecomposition> {
    m.require_hermitian()?;
    let n = m.dim();
    let mut a = m.hermitized(); // fold the sub-tolerance asymmetry away exactly
    let mut v = ComplexMatrix::identity(n)?;

    let scale = a.frobenius_norm().max(1.0);
    let threshold = f64::EPSILON * scale;

    if n > 1 {
        let mut converged = false;
        for _ in 0..MAX_JACOBI_SWEEPS {
            if offdiag_norm(&a) <= threshold {
                converged = true;
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    jacobi_rotate(&mut a, &mut v, p, q);
                }
            }
        }
        if !converged && offdiag_norm(&a) > threshold {
            return Err(Error::NoConvergence(MAX_JACOBI_SWEEPS));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a.get(i, i).re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).expect("eigenvalues are finite"));

    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = ComplexMatrix::zeros(n)?;
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..n {
            vectors.set(row, new_col, v.get(row, old_col));
        }
    }
    Ok(Eigendecomposition { values, vectors })
}

/// Trace distance `tau(a, b) = (1/2) sum |eig(a - b)|`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    let diff = a.matrix().sub(b.matrix())?;
    let eig = hermitian_eigendecomposition(&diff)?;
    Ok(0.5 * eig.values.iter().map(|w| w.abs()).sum::<f64>())
}

/// Uhlmann fidelity `F(a, b) = (Tr sqrt(sqrt(a) b sqrt(a)))^2`.
///
/// With this (squared) convention `F(pure, b) = <psi|b|psi>` and
/// `tau <= sqrt(1 - F)`.
pub fn fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    let ea = hermitian_eigendecomposition(a.matrix())?;
    // Density-matrix validation already bounded negative eigenvalues;
    // clamp the numerical dust so the square root is well defined.
    let sqrt_a = ea.map_values(|w| if w > 0.0 { w.sqrt() } else { 0.0 })?;
    let inner = sqrt_a.matmul(b.matrix())?.matmul(&sqrt_a)?;
    // Mathematically Hermitian PSD; hermitize to shed rounding asymmetry.
    let eig = hermitian_eigendecomposition(&inner.hermitized())?;
    let root_sum: f64 = eig.values.iter().map(|&w| if w > 0.0 { w.sqrt() } else { 0.0 }).sum();
    Ok(root_sum * root_sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_eigendecomposition() {
        let m = ComplexMatrix::identity(3).unwrap();
        let eig = hermitian_eigendecomposition(&m).unwrap();
        for w in &eig.values {
            assert_abs_diff_eq!(*w, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn pauli_x_eigenvalues() {
        let x = ComplexMatrix::from_rows(&[
            vec![c(0.0, 0.0), c(1.0, 0.0)],
            vec![c(1.0, 0.0), c(0.0, 0.0)],
        ])
        .unwrap();
        let eig = hermitian_eigendecomposition(&x).unwrap();
        assert_abs_diff_eq!(eig.values[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig.values[1], 1.0, epsilon = 1e-14);
        let rec = eig.reconstruct().unwrap();
        assert!(rec.max_abs_diff(&x).unwrap() < 1e-13);
    }

    #[test]
    fn pauli_y_eigenvalues() {
        let y = ComplexMatrix::from_rows(&[
            vec![c(0.0, 0.0), c(0.0, -1.0)],
            vec![c(0.0, 1.0), c(0.0, 0.0)],
        ])
        .unwrap();
        let eig = hermitian_eigendecomposition(&y).unwrap();
        assert_abs_diff_eq!(eig.values[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig.values[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = ComplexMatrix::from_rows(&[
            vec![c(0.0, 0.0), c(1.0, 0.0)],
            vec![c(0.5, 0.0), c(0.0, 0.0)],
        ])
        .unwrap();
        assert!(matches!(
            hermitian_eigendecomposition(&m),
            Err(Error::NotHermitian(_))
        ));
    }

    #[test]
    fn rejects_oversized() {
        assert!(matches!(
            ComplexMatrix::zeros(MAX_DIM + 1),
            Err(Error::DimensionTooLarge(_, _))
        ));
    }

    #[test]
    fn trace_distance_matches_hand_value() {
        // tau(I/2, diag(7/12, 5/12)) = 1/12
        let a = DensityMatrix::maximally_mixed(2).unwrap();
        let b = DensityMatrix::from_diagonal(&[7.0 / 12.0, 5.0 / 12.0]).unwrap();
        let tau = trace_distance(&a, &b).unwrap();
        assert_abs_diff_eq!(tau, 1.0 / 12.0, epsilon = 1e-14);
    }

    #[test]
    fn fidelity_pure_reduction() {
        // F(|0><0|, I/2) = <0| I/2 |0> = 1/2
        let zero = DensityMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        let f = fidelity(&zero, &mixed).unwrap();
        assert_abs_diff_eq!(f, 0.5, epsilon = 1e-12);
    }

    /// Random Hermitian matrix strategy (dim 2..=6, entries bounded).
    fn hermitian_strategy(max_dim: usize) -> impl Strategy<Value = ComplexMatrix> {
        (2..=max_dim)
            .prop_flat_map(|n| {
                proptest::collection::vec(
                    (-1.0f64..1.0, -1.0f64..1.0),
                    n * n,
                )
                .prop_map(move |vals| {
                    let mut m = ComplexMatrix::zeros(n).unwrap();
                    for i in 0..n {
                        for j in 0..n {
                            let (re, im) = vals[i * n + j];
                            m.set(i, j, c(re, im));
                        }
                    }
                    m.hermitized()
                })
            })
    }

    proptest! {
        #[test]
        fn eigendecomposition_reconstructs(m in hermitian_strategy(6)) {
            let eig = hermitian_eigendecomposition(&m).unwrap();
            let rec = eig.reconstruct().unwrap();
            prop_assert!(rec.max_abs_diff(&m).unwrap() <= RECONSTRUCTION_TOLERANCE);
        }

        #[test]
        fn eigenvectors_unitary(m in hermitian_strategy(6)) {
            let eig = hermitian_eigendecomposition(&m).unwrap();
            let gram = eig.vectors.adjoint().matmul(&eig.vectors).unwrap();
            let id = ComplexMatrix::identity(m.dim()).unwrap();
            prop_assert!(gram.max_abs_diff(&id).unwrap() <= RECONSTRUCTION_TOLERANCE);
        }

        #[test]
        fn eigenvalues_ascending(m in hermitian_strategy(6)) {
            let eig = hermitian_eigendecomposition(&m).unwrap();
            for w in eig.values.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
        }

        #[test]
        fn trace_preserved(m in hermitian_strategy(6)) {
            let eig = hermitian_eigendecomposition(&m).unwrap();
            let sum: f64 = eig.values.iter().sum();
            prop_assert!((sum - m.trace().re).abs() < 1e-10);
        }
    }
}
