//! VAR process types, deterministic variance paths and trajectory simulation.
//!
//! A process is driven by `X_t = A_1 X_{t-1} + ... + A_p X_{t-p} + u_t` with
//! `u_t = H_t eps_t`, where `H_t H_t' = Sigma(t/n)` follows a deterministic
//! path on rescaled time `r in (0, 1]` and `eps_t` is iid standard Gaussian.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, sym_eigenvalues};
use crate::Scalar;

/// Default number of discarded start-up steps in [`simulate`].
pub const DEFAULT_BURN_IN: usize = 200;

/// Stability margin used by [`simulate`] when rejecting explosive models.
pub const DEFAULT_STABILITY_TOL: f64 = 1e-8;

/// A finite-order VAR model: dimension `d` and coefficient matrices
/// `A_1..A_p`, each `d x d`.
#[derive(Clone, Debug, PartialEq)]
pub struct VarModel<T: Scalar> {
    d: usize,
    coeffs: Vec<DMatrix<T>>,
}

impl<T: Scalar> VarModel<T> {
    /// Build a model from its coefficient matrices.
    ///
    /// Checks shapes and finiteness only; stability is queried separately
    /// through [`is_stable`] so that unstable models can still be inspected.
    pub fn new(d: usize, coeffs: Vec<DMatrix<T>>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension d must be positive".into()));
        }
        for (i, a) in coeffs.iter().enumerate() {
            if a.nrows() != d || a.ncols() != d {
                return Err(Error::Dimension(format!(
                    "coefficient matrix {} is {}x{}, expected {d}x{d}",
                    i + 1,
                    a.nrows(),
                    a.ncols()
                )));
            }
            if a.iter().any(|v| !Float::is_finite(*v)) {
                return Err(Error::NonFinite(format!("coefficient matrix {}", i + 1)));
            }
        }
        Ok(Self { d, coeffs })
    }

    /// Series dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Autoregressive order `p` (number of coefficient matrices).
    pub fn p(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficient matrices `A_1..A_p`.
    pub fn coeffs(&self) -> &[DMatrix<T>] {
        &self.coeffs
    }

    /// The same process viewed at a higher order `p >= self.p()`, with zero
    /// matrices appended.
    pub fn embedded(&self, p: usize) -> Result<Self> {
        if p < self.p() {
            return Err(Error::InvalidArgument(format!(
                "cannot embed order {} model at lower order {p}",
                self.p()
            )));
        }
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(p, DMatrix::zeros(self.d, self.d));
        Ok(Self { d: self.d, coeffs })
    }

    /// Column-stacked coefficient vector `(vec A_1', ..., vec A_p')'`.
    pub fn theta(&self) -> DVector<T> {
        let d = self.d;
        let p = self.p();
        let mut theta = DVector::zeros(p * d * d);
        for (l, a) in self.coeffs.iter().enumerate() {
            for c in 0..d {
                for r in 0..d {
                    theta[l * d * d + c * d + r] = a[(r, c)];
                }
            }
        }
        theta
    }
}

/// Companion form of a VAR model: block matrix with `A_1..A_p` in the top
/// block row and identity blocks on the sub-diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct CompanionMatrix<T: Scalar> {
    matrix: DMatrix<T>,
}

impl<T: Scalar> CompanionMatrix<T> {
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.matrix
    }

    /// Largest eigenvalue modulus.
    pub fn spectral_radius(&self) -> T {
        spectral_radius(&self.matrix)
    }
}

/// Build the `dp x dp` companion matrix of a model; for `p = 1` this is
/// `A_1` itself and for `p = 0` the empty matrix.
pub fn companion_matrix<T: Scalar>(model: &VarModel<T>) -> CompanionMatrix<T> {
    let d = model.d();
    let p = model.p();
    let mut m = DMatrix::zeros(d * p, d * p);
    for (l, a) in model.coeffs().iter().enumerate() {
        m.view_mut((0, l * d), (d, d)).copy_from(a);
    }
    for l in 1..p {
        m.view_mut((l * d, (l - 1) * d), (d, d))
            .copy_from(&DMatrix::identity(d, d));
    }
    CompanionMatrix { matrix: m }
}

/// Result of a stability query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stability<T> {
    pub stable: bool,
    pub spectral_radius: T,
}

/// A model is accepted as stable when its companion spectral radius is at
/// most `1 - tol`.
pub fn is_stable<T: Scalar>(model: &VarModel<T>, tol: T) -> Stability<T> {
    let radius = companion_matrix(model).spectral_radius();
    Stability {
        stable: radius <= T::one() - tol,
        spectral_radius: radius,
    }
}

/// One piece of a piecewise-defined variance path: the map is used on
/// `(lower, upper]` where `lower` is the previous segment's upper endpoint.
#[derive(Clone)]
pub struct Segment<T: Scalar> {
    pub upper: T,
    pub f: Arc<dyn Fn(T) -> DMatrix<T> + Send + Sync>,
}

impl<T: Scalar> fmt::Debug for Segment<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Segment")
            .field("upper", &self.upper)
            .field("f", &"<fn>")
            .finish()
    }
}

/// Deterministic innovation covariance path `r in (0, 1] -> Sigma(r)`.
///
/// Only shapes that are bounded and piecewise Lipschitz are constructible:
/// a constant matrix, the bivariate smooth-trend and abrupt-break families,
/// and explicit piecewise segments.
#[derive(Clone, Debug)]
pub enum VariancePath<T: Scalar> {
    /// `Sigma(r) = sigma` for all `r`.
    Constant { sigma: DMatrix<T> },
    /// Bivariate trend: entry (1,1) is `(1 + g1 r)(1 + rho^2)`, entry (2,2)
    /// is `(1 + g2 r)` and the off-diagonals are
    /// `rho sqrt((1 + g1 r)(1 + g2 r))`.
    SmoothTrend { gamma1: T, gamma2: T, rho: T },
    /// Bivariate single break at `break_fraction`: with
    /// `f_i(r) = (gamma_i - 1) 1{r >= break_fraction}`, entry (i,i) is
    /// `(1 + f_i)(1 + rho^2)` and the off-diagonals are
    /// `rho sqrt((1 + f_1)(1 + f_2))`.
    AbruptBreak {
        gamma1: T,
        gamma2: T,
        rho: T,
        break_fraction: T,
    },
    /// Explicit segments covering `(0, 1]`; the last upper endpoint must be 1.
    PiecewiseCustom { d: usize, segments: Vec<Segment<T>> },
}

impl<T: Scalar> VariancePath<T> {
    /// Constant path, validating symmetry of the supplied matrix.
    pub fn constant(sigma: DMatrix<T>) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() || sigma.nrows() == 0 {
            return Err(Error::Dimension("constant variance must be square and non-empty".into()));
        }
        if (&sigma - sigma.transpose()).amax() > T::from_f64_lossy(1e-12) {
            return Err(Error::InvalidArgument("constant variance must be symmetric".into()));
        }
        Ok(Self::Constant { sigma })
    }

    /// Piecewise path from explicit segments.
    pub fn piecewise(d: usize, segments: Vec<Segment<T>>) -> Result<Self> {
        if d == 0 || segments.is_empty() {
            return Err(Error::InvalidArgument("piecewise path needs d >= 1 and at least one segment".into()));
        }
        let mut prev = T::zero();
        for s in &segments {
            if !(s.upper > prev) {
                return Err(Error::InvalidArgument("segment endpoints must be strictly increasing".into()));
            }
            prev = s.upper;
        }
        if Float::abs(prev - T::one()) > T::from_f64_lossy(1e-12) {
            return Err(Error::InvalidArgument("last segment must end at 1".into()));
        }
        Ok(Self::PiecewiseCustom { d, segments })
    }

    /// Scalar (d = 1) path from a single function on `(0, 1]`.
    pub fn scalar(f: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self::PiecewiseCustom {
            d: 1,
            segments: vec![Segment {
                upper: T::one(),
                f: Arc::new(move |r| DMatrix::from_element(1, 1, f(r))),
            }],
        }
    }

    /// Series dimension of the path.
    pub fn d(&self) -> usize {
        match self {
            Self::Constant { sigma } => sigma.nrows(),
            Self::SmoothTrend { .. } | Self::AbruptBreak { .. } => 2,
            Self::PiecewiseCustom { d, .. } => *d,
        }
    }

    /// Interior discontinuity locations, used to align quadrature cells.
    pub fn breakpoints(&self) -> Vec<T> {
        match self {
            Self::Constant { .. } | Self::SmoothTrend { .. } => Vec::new(),
            Self::AbruptBreak { break_fraction, .. } => vec![*break_fraction],
            Self::PiecewiseCustom { segments, .. } => segments
                .iter()
                .map(|s| s.upper)
                .filter(|&u| u < T::one())
                .collect(),
        }
    }

    /// Evaluate `Sigma(r)` for `r in (0, 1]`.
    pub fn at(&self, r: T) -> Result<DMatrix<T>> {
        if !(r > T::zero()) || r > T::one() {
            return Err(Error::InvalidArgument(format!(
                "variance path evaluated at r={r}, outside (0, 1]"
            )));
        }
        Ok(match self {
            Self::Constant { sigma } => sigma.clone(),
            Self::SmoothTrend { gamma1, gamma2, rho } => {
                let one = T::one();
                let v1 = one + *gamma1 * r;
                let v2 = one + *gamma2 * r;
                let off = *rho * Float::sqrt(v1 * v2);
                DMatrix::from_row_slice(2, 2, &[v1 * (one + *rho * *rho), off, off, v2])
            }
            Self::AbruptBreak {
                gamma1,
                gamma2,
                rho,
                break_fraction,
            } => {
                let one = T::one();
                let (h1, h2) = if r >= *break_fraction {
                    (*gamma1, *gamma2)
                } else {
                    (one, one)
                };
                let off = *rho * Float::sqrt(h1 * h2);
                let load = one + *rho * *rho;
                DMatrix::from_row_slice(2, 2, &[h1 * load, off, off, h2 * load])
            }
            Self::PiecewiseCustom { d, segments } => {
                let seg = segments
                    .iter()
                    .find(|s| r <= s.upper)
                    .unwrap_or_else(|| segments.last().expect("segments non-empty"));
                let m = (seg.f)(r);
                if m.nrows() != *d || m.ncols() != *d {
                    return Err(Error::Dimension(format!(
                        "segment returned {}x{} matrix, expected {d}x{d}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                m
            }
        })
    }

    /// The sequence `Sigma(1/n), ..., Sigma(n/n)`.
    pub fn sample_sequence(&self, n: usize) -> Result<Vec<DMatrix<T>>> {
        let nf = T::from_usize_lossy(n);
        (1..=n)
            .map(|t| self.at(T::from_usize_lossy(t) / nf))
            .collect()
    }

    /// Check symmetry and positive definiteness on an evenly spaced grid.
    pub fn validate_on_grid(&self, points: usize) -> Result<()> {
        let nf = T::from_usize_lossy(points);
        for t in 1..=points {
            let r = T::from_usize_lossy(t) / nf;
            let m = self.at(r)?;
            if (&m - m.transpose()).amax() > T::from_f64_lossy(1e-12) {
                return Err(Error::InvalidArgument(format!("Sigma({r}) is not symmetric")));
            }
            let ev = sym_eigenvalues(&m);
            if !(ev[0] > T::zero()) {
                return Err(Error::NotPositiveDefinite(format!(
                    "Sigma({r}) has smallest eigenvalue {}",
                    ev[0]
                )));
            }
        }
        Ok(())
    }
}

/// A `d`-variate sample: `presample` values `X_{-k+1}..X_0` available for
/// conditioning, followed by the effective observations `X_1..X_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries<T: Scalar> {
    presample: Vec<DVector<T>>,
    values: Vec<DVector<T>>,
}

impl<T: Scalar> TimeSeries<T> {
    pub fn new(presample: Vec<DVector<T>>, values: Vec<DVector<T>>) -> Result<Self> {
        let first = values
            .first()
            .ok_or_else(|| Error::InvalidArgument("time series needs at least one value".into()))?;
        let d = first.len();
        if d == 0 {
            return Err(Error::Dimension("time series dimension must be positive".into()));
        }
        for v in presample.iter().chain(values.iter()) {
            if v.len() != d {
                return Err(Error::Dimension(format!(
                    "inconsistent vector length {} (expected {d})",
                    v.len()
                )));
            }
            if v.iter().any(|x| !Float::is_finite(*x)) {
                return Err(Error::NonFinite("time series value".into()));
            }
        }
        Ok(Self { presample, values })
    }

    /// Series with no presample.
    pub fn from_values(values: Vec<DVector<T>>) -> Result<Self> {
        Self::new(Vec::new(), values)
    }

    pub fn d(&self) -> usize {
        self.values[0].len()
    }

    /// Effective sample size (presample excluded).
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn presample(&self) -> &[DVector<T>] {
        &self.presample
    }

    pub fn values(&self) -> &[DVector<T>] {
        &self.values
    }

    /// Observation `X_t` for `t` in `1-presample_len ..= n` (0 and below
    /// index into the presample).
    pub fn at(&self, t: isize) -> &DVector<T> {
        if t >= 1 {
            &self.values[(t - 1) as usize]
        } else {
            let k = self.presample.len() as isize;
            &self.presample[(k - 1 + t) as usize]
        }
    }

    /// Move the first `k` effective observations into the presample, so
    /// that fits up to order `presample_len + k` condition on them.
    pub fn with_presample(&self, k: usize) -> Result<Self> {
        if k >= self.n() {
            return Err(Error::InvalidArgument(format!(
                "cannot reserve {k} presample values out of {}",
                self.n()
            )));
        }
        let mut presample = self.presample.clone();
        presample.extend_from_slice(&self.values[..k]);
        Ok(Self {
            presample,
            values: self.values[k..].to_vec(),
        })
    }
}

/// Deterministic RNG stream for one replication of a seeded experiment.
pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Simulate `n` observations plus `presample_len` presample values.
///
/// The recursion starts from zeros and runs `burn_in` discarded steps; both
/// the burn-in and the presample draw innovations with the variance frozen
/// at the smallest grid point `Sigma(1/n)`. The retained observations use
/// `Sigma(t/n)` for `t = 1..n`. Identical inputs give identical output.
pub fn simulate<T: Scalar>(
    model: &VarModel<T>,
    path: &VariancePath<T>,
    n: usize,
    presample_len: usize,
    burn_in: usize,
    seed: u64,
) -> Result<TimeSeries<T>> {
    simulate_with_rng(model, path, n, presample_len, burn_in, &mut replication_rng(seed, 0))
}

/// Same as [`simulate`] but drawing from a caller-provided RNG.
pub fn simulate_with_rng<T: Scalar>(
    model: &VarModel<T>,
    path: &VariancePath<T>,
    n: usize,
    presample_len: usize,
    burn_in: usize,
    rng: &mut impl rand::Rng,
) -> Result<TimeSeries<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size n must be at least 1".into()));
    }
    let d = model.d();
    if path.d() != d {
        return Err(Error::Dimension(format!(
            "variance path dimension {} does not match model dimension {d}",
            path.d()
        )));
    }
    let st = is_stable(model, T::from_f64_lossy(DEFAULT_STABILITY_TOL));
    if !st.stable {
        return Err(Error::Unstable {
            radius: st.spectral_radius.to_f64().unwrap_or(f64::NAN),
            tol: DEFAULT_STABILITY_TOL,
        });
    }

    let p = model.p();
    let nf = T::from_usize_lossy(n);
    let chol_at = |r: T| -> Result<DMatrix<T>> {
        let sigma = path.at(r)?;
        crate::linalg::symmetrize(&sigma)
            .cholesky()
            .map(|c| c.l())
            .ok_or_else(|| Error::NotPositiveDefinite(format!("Sigma({r}) in simulate")))
    };
    let h_start = chol_at(T::one() / nf)?;

    // lag buffer, most recent first
    let mut lags: Vec<DVector<T>> = vec![DVector::zeros(d); p];
    let draw = |h: &DMatrix<T>, lags: &mut Vec<DVector<T>>, rng: &mut dyn rand::RngCore| {
        let eps = DVector::from_iterator(d, (0..d).map(|_| T::sample_standard_normal(rng)));
        let mut x = h * eps;
        for (l, a) in model.coeffs().iter().enumerate() {
            x += a * &lags[l];
        }
        if p > 0 {
            lags.rotate_right(1);
            lags[0] = x.clone();
        }
        x
    };

    for _ in 0..burn_in {
        draw(&h_start, &mut lags, rng);
    }
    let presample: Vec<DVector<T>> = (0..presample_len)
        .map(|_| draw(&h_start, &mut lags, rng))
        .collect();
    let mut values = Vec::with_capacity(n);
    for t in 1..=n {
        let h = chol_at(T::from_usize_lossy(t) / nf)?;
        values.push(draw(&h, &mut lags, rng));
    }
    TimeSeries::new(presample, values)
}
