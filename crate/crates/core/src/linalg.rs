//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::error::{Error, Result};
use crate::Scalar;

/// Relative condition-number threshold beyond which a Gram matrix is
/// treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Kronecker product `a (x) b`.
pub fn kron<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    a.kronecker(b)
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(T::zero(), |acc, v| if v > acc { v } else { acc })
}

/// Symmetrize in place: `(m + m') / 2`.
pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let half = T::from_f64_lossy(0.5);
    let mt = m.transpose();
    (m + mt) * half
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    let mut ev: Vec<T> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues must be comparable"));
    ev
}

/// Symmetric positive definite square root via spectral decomposition.
pub fn matrix_sqrt_pd<T: Scalar>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "matrix_sqrt_pd needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let eig = symmetrize(m).symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= T::zero()) {
        return Err(Error::NotPositiveDefinite("matrix_sqrt_pd".into()));
    }
    let sqrt_vals = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| Float::sqrt(l)),
    );
    let q = &eig.eigenvectors;
    Ok(symmetrize(&(q * DMatrix::from_diagonal(&sqrt_vals) * q.transpose())))
}

/// Inverse of a symmetric PD matrix through its spectral decomposition,
/// rejecting matrices with relative condition above [`CONDITION_LIMIT`].
pub fn inv_spd<T: Scalar>(m: &DMatrix<T>, context: &str) -> Result<DMatrix<T>> {
    let eig = symmetrize(m).symmetric_eigen();
    let (mut lo, mut hi) = (T::infinity(), T::zero());
    for &l in eig.eigenvalues.iter() {
        if l < lo {
            lo = l;
        }
        if l > hi {
            hi = l;
        }
    }
    if !(lo > T::zero()) || !Float::is_finite(hi) {
        return Err(Error::SingularDesign(format!(
            "{context}: non-positive or non-finite eigenvalue"
        )));
    }
    if hi / lo > T::from_f64_lossy(CONDITION_LIMIT) {
        return Err(Error::SingularDesign(format!(
            "{context}: condition estimate {} exceeds {CONDITION_LIMIT:e}",
            hi / lo
        )));
    }
    let inv_vals = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| T::one() / l),
    );
    let q = &eig.eigenvectors;
    Ok(symmetrize(&(q * DMatrix::from_diagonal(&inv_vals) * q.transpose())))
}

/// Solve `m x = rhs` for symmetric PD `m` with the same conditioning guard
/// as [`inv_spd`]; uses a Cholesky factorization for the solve itself.
pub fn solve_spd<T: Scalar>(m: &DMatrix<T>, rhs: &DMatrix<T>, context: &str) -> Result<DMatrix<T>> {
    check_spd_conditioning(m, context)?;
    let chol = symmetrize(m)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(context.into()))?;
    Ok(chol.solve(rhs))
}

/// Reject a symmetric matrix whose eigenvalue spread signals (near) singularity.
pub fn check_spd_conditioning<T: Scalar>(m: &DMatrix<T>, context: &str) -> Result<()> {
    let ev = sym_eigenvalues(m);
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if !(lo > T::zero()) || !Float::is_finite(hi) {
        return Err(Error::SingularDesign(format!(
            "{context}: non-positive or non-finite eigenvalue"
        )));
    }
    if hi / lo > T::from_f64_lossy(CONDITION_LIMIT) {
        return Err(Error::SingularDesign(format!(
            "{context}: condition estimate {} exceeds {CONDITION_LIMIT:e}",
            hi / lo
        )));
    }
    Ok(())
}

/// Log-determinant and inverse-application helper for a PD matrix.
///
/// Wraps a Cholesky factor so callers can evaluate `ln det M` and quadratic
/// forms `v' M^{-1} v` without forming the inverse.
pub struct PdFactor<T: Scalar> {
    chol: nalgebra::Cholesky<T, nalgebra::Dyn>,
}

impl<T: Scalar> PdFactor<T> {
    pub fn new(m: &DMatrix<T>, context: &str) -> Result<Self> {
        let chol = symmetrize(m)
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(context.into()))?;
        Ok(Self { chol })
    }

    pub fn ln_det(&self) -> T {
        let two = T::from_f64_lossy(2.0);
        self.chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|&d| Float::ln(d))
            .sum::<T>()
            * two
    }

    /// Quadratic form `v' M^{-1} v`.
    pub fn quad_inv(&self, v: &DVector<T>) -> T {
        let y = self.chol.solve(v);
        v.dot(&y)
    }

    pub fn inverse(&self) -> DMatrix<T> {
        self.chol.inverse()
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<T>) -> DMatrix<T> {
        self.chol.solve(rhs)
    }
}

/// Pairwise (cascade) summation of `f(i)` over `range`, stable under
/// reordering to roughly `log2(n)` rounding units.
pub fn pairwise_sum<T: Scalar>(range: std::ops::Range<usize>, f: &impl Fn(usize) -> T) -> T {
    const BLOCK: usize = 32;
    let len = range.end - range.start;
    if len <= BLOCK {
        let mut acc = T::zero();
        for i in range {
            acc += f(i);
        }
        acc
    } else {
        let mid = range.start + len / 2;
        pairwise_sum(range.start..mid, f) + pairwise_sum(mid..range.end, f)
    }
}

/// Frobenius norm of the difference, relative to the norm of `reference`.
pub fn rel_frobenius<T: Scalar>(m: &DMatrix<T>, reference: &DMatrix<T>) -> T {
    (m - reference).norm() / reference.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sqrt_of_identity_is_identity() {
        let eye = DMatrix::<f64>::identity(3, 3);
        let s = matrix_sqrt_pd(&eye).unwrap();
        assert_relative_eq!(s, eye, epsilon = 1e-14);
    }

    #[test]
    fn sqrt_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let s = matrix_sqrt_pd(&m).unwrap();
        assert_relative_eq!(s[(0, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(s[(1, 1)], 3.0, epsilon = 1e-12);
        assert_relative_eq!(s[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sqrt_reconstructs_random_pd() {
        // fixed entries, PD by construction a'a + I
        let a = DMatrix::from_row_slice(2, 2, &[0.3, -1.2, 0.7, 0.4]);
        let m = a.transpose() * &a + DMatrix::identity(2, 2);
        let s = matrix_sqrt_pd(&m).unwrap();
        let err = (&s * &s - &m).norm() / m.norm();
        assert!(err < 1e-10, "reconstruction error {err}");
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matrix_sqrt_pd(&m).is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let p = pairwise_sum(0..xs.len(), &|i| xs[i]);
        let n: f64 = xs.iter().sum();
        assert_relative_eq!(p, n, epsilon = 1e-9);
    }

    #[test]
    fn spd_inverse_round_trip() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let inv = inv_spd(&a, "test").unwrap();
        assert_relative_eq!(&a * &inv, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn conditioning_guard_trips() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-14]));
        assert!(matches!(
            inv_spd(&m, "test"),
            Err(crate::Error::SingularDesign(_))
        ));
    }
}
