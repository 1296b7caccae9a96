//! Nonparametric estimation of the innovation covariance path.
//!
//! The covariance at date `t` is a kernel-weighted average of residual outer
//! products, `S_t = sum_i w_ti(b) u_i u_i'`, with `w_ti` proportional to
//! `K((t - i) / (n b))`, zero self-weight and weights normalized to one.
//! The bandwidth is picked on a grid by leave-one-out cross-validation.

use nalgebra::DMatrix;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use crate::Scalar;

/// Smoothing kernel. Both choices are bounded densities, unimodal at zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelSpec {
    /// Standard normal density (default).
    Gaussian,
    /// `0.75 (1 - z^2)` on `[-1, 1]`.
    Epanechnikov,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::Gaussian
    }
}

impl KernelSpec {
    pub fn evaluate<T: Scalar>(&self, z: T) -> T {
        match self {
            Self::Gaussian => {
                let half = T::from_f64_lossy(0.5);
                let norm = T::from_f64_lossy(1.0 / (2.0 * std::f64::consts::PI).sqrt());
                norm * Float::exp(-half * z * z)
            }
            Self::Epanechnikov => {
                if Float::abs(z) <= T::one() {
                    T::from_f64_lossy(0.75) * (T::one() - z * z)
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Epanechnikov => "epanechnikov",
        }
    }
}

impl std::str::FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Self::Gaussian),
            "epanechnikov" => Ok(Self::Epanechnikov),
            other => Err(Error::InvalidArgument(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Strictly increasing bandwidth candidates inside `[c_min b_n, c_max b_n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandwidthGrid<T: Scalar> {
    values: Vec<T>,
}

impl<T: Scalar> BandwidthGrid<T> {
    /// Log-spaced grid of `n_points` bandwidths.
    pub fn new(b_n: T, c_min: T, c_max: T, n_points: usize) -> Result<Self> {
        if !(b_n > T::zero()) || !(c_min > T::zero()) || !(c_min < c_max) {
            return Err(Error::InvalidArgument(
                "bandwidth grid needs 0 < c_min < c_max and b_n > 0".into(),
            ));
        }
        if n_points == 0 {
            return Err(Error::InvalidArgument("bandwidth grid cannot be empty".into()));
        }
        let lo = Float::ln(c_min * b_n);
        let hi = Float::ln(c_max * b_n);
        let values = if n_points == 1 {
            vec![Float::exp((lo + hi) * T::from_f64_lossy(0.5))]
        } else {
            let step = (hi - lo) / T::from_usize_lossy(n_points - 1);
            (0..n_points)
                .map(|i| Float::exp(lo + step * T::from_usize_lossy(i)))
                .collect()
        };
        Ok(Self { values })
    }

    /// Default grid for a sample of size `n`: rate `n^{-1/5}`, constants
    /// 0.1 and 3, twelve points. The lower constant leaves room below the
    /// smoothing-optimal rate; with a tighter floor the cross-validation
    /// optimum piles up on the boundary under break-type variance.
    pub fn default_for(n: usize) -> Self {
        let b_n = Float::powf(T::from_usize_lossy(n), T::from_f64_lossy(-0.2));
        Self::new(
            b_n,
            T::from_f64_lossy(0.1),
            T::from_f64_lossy(3.0),
            12,
        )
        .expect("default grid parameters are valid")
    }

    /// Singleton grid pinning the bandwidth.
    pub fn fixed(b: T) -> Result<Self> {
        if !(b > T::zero()) {
            return Err(Error::InvalidArgument("bandwidth must be positive".into()));
        }
        Ok(Self { values: vec![b] })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Smoothed covariance sequence together with the settings that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct VariancePathEstimate<T: Scalar> {
    matrices: Vec<DMatrix<T>>,
    bandwidth: T,
    floor: T,
}

impl<T: Scalar> VariancePathEstimate<T> {
    /// Wrap an externally supplied PD sequence (used to feed the adaptive
    /// estimator with oracle variances in simulations).
    pub fn from_matrices(matrices: Vec<DMatrix<T>>, bandwidth: T, floor: T) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::InvalidArgument("variance path estimate cannot be empty".into()));
        }
        let d = matrices[0].nrows();
        for m in &matrices {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Dimension("inconsistent matrix sizes".into()));
            }
        }
        Ok(Self { matrices, bandwidth, floor })
    }

    pub fn matrices(&self) -> &[DMatrix<T>] {
        &self.matrices
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn floor(&self) -> T {
        self.floor
    }

    pub fn n(&self) -> usize {
        self.matrices.len()
    }
}

/// Kernel values `K((t - i)/(n b))` for `i = 1..n` with the self-term zeroed.
fn raw_kernel_values<T: Scalar>(t: usize, n: usize, b: T, kernel: &KernelSpec) -> Result<Vec<T>> {
    if t == 0 || t > n {
        return Err(Error::InvalidArgument(format!("index t={t} outside 1..={n}")));
    }
    if !(b > T::zero()) {
        return Err(Error::InvalidArgument("bandwidth must be positive".into()));
    }
    let nb = T::from_usize_lossy(n) * b;
    // values depend on |t - i| only, so evaluate the kernel once per offset
    let mut by_offset = vec![T::zero(); n];
    for delta in 1..n {
        by_offset[delta] = kernel.evaluate(T::from_usize_lossy(delta) / nb);
    }
    Ok((1..=n)
        .map(|i| {
            if i == t {
                T::zero()
            } else {
                by_offset[t.abs_diff(i)]
            }
        })
        .collect())
}

/// Normalized smoothing weights for date `t` (1-based), with `w_tt = 0` and
/// the remaining weights summing to one.
pub fn kernel_weights<T: Scalar>(
    t: usize,
    n: usize,
    b: T,
    kernel: &KernelSpec,
) -> Result<Vec<T>> {
    let mut vals = raw_kernel_values(t, n, b, kernel)?;
    let total = pairwise_sum(0..n, &|i| vals[i]);
    if !(total > T::zero()) {
        return Err(Error::DegenerateWeights {
            t,
            bandwidth: b.to_f64().unwrap_or(f64::NAN),
        });
    }
    for v in vals.iter_mut() {
        *v /= total;
    }
    Ok(vals)
}

/// Sample covariance of the residuals, `n^{-1} sum u_t u_t'`.
pub fn residual_covariance<T: Scalar>(residuals: &[nalgebra::DVector<T>]) -> DMatrix<T> {
    let d = residuals[0].len();
    let mut out = DMatrix::zeros(d, d);
    for u in residuals {
        out += u * u.transpose();
    }
    out / T::from_usize_lossy(residuals.len())
}

/// Default eigenvalue floor: `1e-6 * tr(Sigma_u_hat) / d`.
pub fn default_floor<T: Scalar>(residuals: &[nalgebra::DVector<T>]) -> T {
    let cov = residual_covariance(residuals);
    let d = T::from_usize_lossy(cov.nrows());
    T::from_f64_lossy(1e-6) * cov.trace() / d
}

/// Raw smoothed matrices, before any eigenvalue flooring.
fn smooth_outer_products<T: Scalar>(
    residuals: &[nalgebra::DVector<T>],
    b: T,
    kernel: &KernelSpec,
) -> Result<Vec<DMatrix<T>>> {
    let n = residuals.len();
    let d = residuals[0].len();
    let mut out = Vec::with_capacity(n);
    for t in 1..=n {
        let w = kernel_weights(t, n, b, kernel)?;
        let mut m = DMatrix::zeros(d, d);
        for r in 0..d {
            for c in r..d {
                let s = pairwise_sum(0..n, &|i| w[i] * residuals[i][r] * residuals[i][c]);
                m[(r, c)] = s;
                m[(c, r)] = s;
            }
        }
        out.push(m);
    }
    Ok(out)
}

/// Clamp eigenvalues at `floor`; exact no-op when already above it.
fn floor_eigenvalues<T: Scalar>(m: &DMatrix<T>, floor: T) -> DMatrix<T> {
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return m.clone();
    }
    let clamped = nalgebra::DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| if l < floor { floor } else { l }),
    );
    let q = &eig.eigenvectors;
    crate::linalg::symmetrize(&(q * DMatrix::from_diagonal(&clamped) * q.transpose()))
}

/// Kernel estimate of the covariance path from residuals: smoothed outer
/// products with eigenvalues floored at `floor` so inverses are defined.
pub fn estimate_variance_path<T: Scalar>(
    residuals: &[nalgebra::DVector<T>],
    b: T,
    kernel: &KernelSpec,
    floor: T,
) -> Result<VariancePathEstimate<T>> {
    let n = residuals.len();
    let d = residuals.first().map(|u| u.len()).unwrap_or(0);
    if n < d + 1 {
        return Err(Error::InvalidArgument(format!(
            "need at least d+1 = {} residuals, have {n}",
            d + 1
        )));
    }
    if !(floor > T::zero()) {
        return Err(Error::InvalidArgument("eigenvalue floor must be positive".into()));
    }
    let matrices = smooth_outer_products(residuals, b, kernel)?
        .into_iter()
        .map(|m| floor_eigenvalues(&m, floor))
        .collect();
    Ok(VariancePathEstimate { matrices, bandwidth: b, floor })
}

/// Leave-one-out cross-validation score
/// `CV(b) = sum_t || u_t u_t' - S_t(b) ||_F^2`, where the smoother already
/// excludes observation `t` through its zero self-weight.
pub fn cv_score<T: Scalar>(
    residuals: &[nalgebra::DVector<T>],
    b: T,
    kernel: &KernelSpec,
) -> Result<T> {
    let smoothed = smooth_outer_products(residuals, b, kernel)?;
    let mut score = T::zero();
    for (u, s) in residuals.iter().zip(smoothed.iter()) {
        let diff = u * u.transpose() - s;
        score += diff.norm_squared();
    }
    Ok(score)
}

/// Pick the bandwidth minimizing the cross-validation score over the grid;
/// ties break toward the smaller bandwidth. Bandwidths whose weights
/// degenerate are skipped.
pub fn cross_validate_bandwidth<T: Scalar>(
    residuals: &[nalgebra::DVector<T>],
    grid: &BandwidthGrid<T>,
    kernel: &KernelSpec,
) -> Result<T> {
    let mut best: Option<(T, T)> = None;
    for &b in grid.values() {
        let score = match cv_score(residuals, b, kernel) {
            Ok(s) => s,
            Err(Error::DegenerateWeights { .. }) => continue,
            Err(e) => return Err(e),
        };
        match best {
            Some((_, best_score)) if !(score < best_score) => {}
            _ => best = Some((b, score)),
        }
    }
    best.map(|(b, _)| b).ok_or(Error::DegenerateWeights {
        t: 0,
        bandwidth: grid.values()[0].to_f64().unwrap_or(f64::NAN),
    })
}

/// How the smoothing bandwidth is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum BandwidthChoice<T: Scalar> {
    /// Use this value as-is.
    Fixed(T),
    /// Cross-validate over the given grid.
    CrossValidate(BandwidthGrid<T>),
    /// Cross-validate over [`BandwidthGrid::default_for`] the sample size.
    Auto,
}

impl<T: Scalar> BandwidthChoice<T> {
    /// Resolve to a concrete bandwidth for the given residuals.
    pub fn resolve(&self, residuals: &[nalgebra::DVector<T>], kernel: &KernelSpec) -> Result<T> {
        match self {
            Self::Fixed(b) => {
                if !(*b > T::zero()) {
                    return Err(Error::InvalidArgument("bandwidth must be positive".into()));
                }
                Ok(*b)
            }
            Self::CrossValidate(grid) => cross_validate_bandwidth(residuals, grid, kernel),
            Self::Auto => cross_validate_bandwidth(
                residuals,
                &BandwidthGrid::default_for(residuals.len()),
                kernel,
            ),
        }
    }
}
