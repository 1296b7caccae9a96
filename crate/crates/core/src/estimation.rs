//! Least-squares estimation of VAR coefficients and the asymptotic
//! covariance building blocks.
//!
//! Three estimators share one normal-equation core:
//! - OLS solves `Gram * B' = Cross'` with `Gram = n^{-1} sum x~ x~'`,
//! - GLS weights each date by the true `Sigma_t^{-1}`,
//! - ALS plugs in the kernel-smoothed `Sigma_t` instead.
//!
//! The covariance estimators follow the sample-average forms
//! `L1 = n^{-1} sum x~x~' (x) S_t^{-1}`, `L2 = n^{-1} sum x~x~' (x) u u'`,
//! `L3 = Gram (x) I`, `L4 = Gram (x) Sigma_u^{-1}`, from which the OLS
//! sandwich `L3^{-1} L2 L3^{-1}`, the adaptive `L1^{-1}` and the standard
//! `L4^{-1}` asymptotic variances are formed.

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::error::{Error, Result};
use crate::kernel::VariancePathEstimate;
use crate::linalg::{check_spd_conditioning, inv_spd, solve_spd, symmetrize, PdFactor};
use crate::varproc::{companion_matrix, is_stable, TimeSeries, VarModel, VariancePath};
use crate::Scalar;

/// Response/regressor pairs for a VAR(p) fit: row `t` pairs `X_t` with the
/// stacked lags `(X_{t-1}', ..., X_{t-p}')'`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignSet<T: Scalar> {
    d: usize,
    p: usize,
    responses: Vec<DVector<T>>,
    regressors: Vec<DVector<T>>,
}

impl<T: Scalar> DesignSet<T> {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn responses(&self) -> &[DVector<T>] {
        &self.responses
    }

    pub fn regressors(&self) -> &[DVector<T>] {
        &self.regressors
    }

    /// `n^{-1} sum x~ x~'` (`pd x pd`).
    pub fn gram(&self) -> DMatrix<T> {
        let k = self.d * self.p;
        let mut g = DMatrix::zeros(k, k);
        for x in &self.regressors {
            g.ger(T::one(), x, x, T::one());
        }
        symmetrize(&(g / T::from_usize_lossy(self.n())))
    }

    /// `n^{-1} sum X_t x~'` (`d x pd`).
    pub fn cross_moment(&self) -> DMatrix<T> {
        let mut c = DMatrix::zeros(self.d, self.d * self.p);
        for (y, x) in self.responses.iter().zip(self.regressors.iter()) {
            c.ger(T::one(), y, x, T::one());
        }
        c / T::from_usize_lossy(self.n())
    }
}

/// Align responses with stacked lags; every response `X_1..X_n` is kept, so
/// fits at different orders share the same effective sample as long as the
/// presample covers the largest order.
pub fn build_design<T: Scalar>(ts: &TimeSeries<T>, p: usize) -> Result<DesignSet<T>> {
    if ts.presample().len() < p {
        return Err(Error::InsufficientPresample {
            needed: p,
            available: ts.presample().len(),
        });
    }
    let d = ts.d();
    let n = ts.n();
    let mut responses = Vec::with_capacity(n);
    let mut regressors = Vec::with_capacity(n);
    for t in 1..=n as isize {
        responses.push(ts.at(t).clone());
        let mut x = DVector::zeros(d * p);
        for lag in 1..=p as isize {
            x.rows_mut(((lag - 1) as usize) * d, d).copy_from(ts.at(t - lag));
        }
        regressors.push(x);
    }
    Ok(DesignSet { d, p, responses, regressors })
}

/// Which weighting produced an estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Ols,
    Gls,
    Als,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Ols => write!(f, "ols"),
            Method::Gls => write!(f, "gls"),
            Method::Als => write!(f, "als"),
        }
    }
}

/// A fitted VAR(p): stacked coefficient vector, residuals and, for OLS, the
/// constant-variance residual covariance.
#[derive(Clone, Debug)]
pub struct EstimationResult<T: Scalar> {
    pub method: Method,
    d: usize,
    p: usize,
    /// Column-stacked `(vec A_1', ..., vec A_p')'`, length `p d^2`.
    pub theta: DVector<T>,
    pub residuals: Vec<DVector<T>>,
    /// `n^{-1} sum u u'` over the OLS residuals (OLS fits only).
    pub sigma_u_hat: Option<DMatrix<T>>,
    /// The variance sequence the weighted estimators conditioned on.
    pub variance_used: Option<Vec<DMatrix<T>>>,
}

impl<T: Scalar> EstimationResult<T> {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    /// Coefficient matrices `A_1..A_p` recovered from `theta`.
    pub fn coeff_matrices(&self) -> Vec<DMatrix<T>> {
        let d = self.d;
        (0..self.p)
            .map(|l| {
                DMatrix::from_column_slice(d, d, &self.theta.as_slice()[l * d * d..(l + 1) * d * d])
            })
            .collect()
    }

    /// The model defined by the fitted coefficients.
    pub fn as_model(&self) -> VarModel<T> {
        VarModel::new(self.d, self.coeff_matrices()).expect("fitted coefficients are well-formed")
    }

    /// Last coefficient block `A_p`, the partial autoregressive matrix of
    /// this order.
    pub fn last_block(&self) -> DMatrix<T> {
        let d = self.d;
        if self.p == 0 {
            return DMatrix::zeros(d, d);
        }
        DMatrix::from_column_slice(d, d, &self.theta.as_slice()[(self.p - 1) * d * d..])
    }
}

fn residuals_from_theta<T: Scalar>(design: &DesignSet<T>, theta: &DVector<T>) -> Vec<DVector<T>> {
    let d = design.d;
    let k = design.d * design.p;
    let b = DMatrix::from_column_slice(d, k, theta.as_slice());
    design
        .responses
        .iter()
        .zip(design.regressors.iter())
        .map(|(y, x)| y - &b * x)
        .collect()
}

/// OLS fit of a VAR(p).
pub fn ols_estimate<T: Scalar>(ts: &TimeSeries<T>, p: usize) -> Result<EstimationResult<T>> {
    let design = build_design(ts, p)?;
    let d = design.d;
    let n = design.n();
    let theta = if p == 0 {
        DVector::zeros(0)
    } else {
        let gram = design.gram();
        check_spd_conditioning(&gram, "OLS Gram matrix")?;
        let cross = design.cross_moment();
        // Gram * Z = Cross' so that B = Z' solves B Gram = Cross
        let z = solve_spd(&gram, &cross.transpose(), "OLS solve")?;
        let b = z.transpose();
        DVector::from_column_slice(b.as_slice())
    };
    let residuals = residuals_from_theta(&design, &theta);
    let mut sigma_u = DMatrix::zeros(d, d);
    for u in &residuals {
        sigma_u.ger(T::one(), u, u, T::one());
    }
    let sigma_u = symmetrize(&(sigma_u / T::from_usize_lossy(n)));
    Ok(EstimationResult {
        method: Method::Ols,
        d,
        p,
        theta,
        residuals,
        sigma_u_hat: Some(sigma_u),
        variance_used: None,
    })
}

/// `n^{-1} sum x~ x~' (x) Sigma_t^{-1}`, the weighted Gram matrix of the
/// GLS/ALS normal equations.
pub fn weighted_gram<T: Scalar>(
    design: &DesignSet<T>,
    sigmas: &[DMatrix<T>],
) -> Result<DMatrix<T>> {
    let (d, p, n) = (design.d, design.p, design.n());
    if sigmas.len() != n {
        return Err(Error::Dimension(format!(
            "variance sequence has {} matrices for {n} observations",
            sigmas.len()
        )));
    }
    let k = d * p;
    let mut a = DMatrix::zeros(k * d, k * d);
    for t in 0..n {
        let sig_inv = PdFactor::new(&sigmas[t], "weighted Gram variance")?.inverse();
        let x = &design.regressors[t];
        let mut outer = DMatrix::zeros(k, k);
        outer.ger(T::one(), x, x, T::one());
        kron_acc(&mut a, &symmetrize(&outer), &sig_inv, T::one());
    }
    Ok(symmetrize(&(a / T::from_usize_lossy(n))))
}

/// Asymptotic variance of the estimator weighted by `sigmas`: the inverse
/// of [`weighted_gram`].
pub fn weighted_avar<T: Scalar>(
    design: &DesignSet<T>,
    sigmas: &[DMatrix<T>],
) -> Result<DMatrix<T>> {
    inv_spd(&weighted_gram(design, sigmas)?, "weighted Gram inverse")
}

fn weighted_estimate<T: Scalar>(
    ts: &TimeSeries<T>,
    p: usize,
    sigmas: &[DMatrix<T>],
    method: Method,
) -> Result<EstimationResult<T>> {
    let design = build_design(ts, p)?;
    let d = design.d;
    let n = design.n();
    if sigmas.len() != n {
        return Err(Error::Dimension(format!(
            "variance sequence has {} matrices for {n} observations",
            sigmas.len()
        )));
    }
    let theta = if p == 0 {
        DVector::zeros(0)
    } else {
        let k = d * p;
        let a = weighted_gram(&design, sigmas)?;
        let mut c = DMatrix::zeros(d, k);
        for t in 0..n {
            let sig_inv = PdFactor::new(&sigmas[t], "weighted estimate variance")?.inverse();
            c += &sig_inv * &design.responses[t] * design.regressors[t].transpose();
        }
        c /= T::from_usize_lossy(n);
        check_spd_conditioning(&a, "weighted Gram matrix")?;
        let rhs = DMatrix::from_column_slice(k * d, 1, c.as_slice());
        let sol = solve_spd(&a, &rhs, "weighted solve")?;
        DVector::from_column_slice(sol.as_slice())
    };
    let residuals = residuals_from_theta(&design, &theta);
    Ok(EstimationResult {
        method,
        d,
        p,
        theta,
        residuals,
        sigma_u_hat: None,
        variance_used: Some(sigmas.to_vec()),
    })
}

/// GLS fit weighting by the true (known) covariance sequence.
pub fn gls_estimate<T: Scalar>(
    ts: &TimeSeries<T>,
    p: usize,
    sigmas: &[DMatrix<T>],
) -> Result<EstimationResult<T>> {
    weighted_estimate(ts, p, sigmas, Method::Gls)
}

/// Adaptive fit weighting by the kernel-estimated covariance sequence; the
/// arithmetic path is identical to [`gls_estimate`].
pub fn als_estimate<T: Scalar>(
    ts: &TimeSeries<T>,
    p: usize,
    estimate: &VariancePathEstimate<T>,
) -> Result<EstimationResult<T>> {
    weighted_estimate(ts, p, estimate.matrices(), Method::Als)
}

/// `acc += scale * (a (x) b)` without allocating the Kronecker product.
fn kron_acc<T: Scalar>(acc: &mut DMatrix<T>, a: &DMatrix<T>, b: &DMatrix<T>, scale: T) {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    for i in 0..ar {
        for j in 0..ac {
            let w = scale * a[(i, j)];
            if w == T::zero() {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    acc[(i * br + k, j * bc + l)] += w * b[(k, l)];
                }
            }
        }
    }
}

/// Sample covariance estimators and the asymptotic variances built from them.
#[derive(Clone, Debug)]
pub struct LambdaEstimates<T: Scalar> {
    /// `n^{-1} sum x~x~' (x) S_t^{-1}`, consistent for the GLS/ALS precision.
    pub lambda1_hat: DMatrix<T>,
    /// `n^{-1} sum x~x~' (x) u u'`, the meat of the OLS sandwich.
    pub lambda2_hat: DMatrix<T>,
    /// `Gram (x) I`.
    pub lambda3_hat: DMatrix<T>,
    /// `Gram (x) Sigma_u^{-1}`, the constant-variance expression.
    pub lambda4_hat: DMatrix<T>,
    /// `L3^{-1} L2 L3^{-1}`.
    pub avar_ols: DMatrix<T>,
    /// `L1^{-1}`.
    pub avar_als: DMatrix<T>,
    /// `L4^{-1}`.
    pub avar_std: DMatrix<T>,
}

/// Assemble every covariance estimator from one fitted design.
///
/// `residuals` are the OLS residuals of the same order, `sigma_seq` is the
/// variance sequence for the weighted side (kernel estimates for ALS bounds,
/// or the true path for oracle GLS bounds) and `sigma_u_hat` the OLS
/// residual covariance.
pub fn lambda_estimates<T: Scalar>(
    design: &DesignSet<T>,
    residuals: &[DVector<T>],
    sigma_seq: &[DMatrix<T>],
    sigma_u_hat: &DMatrix<T>,
) -> Result<LambdaEstimates<T>> {
    let d = design.d;
    let p = design.p;
    let n = design.n();
    if p == 0 {
        return Err(Error::InvalidArgument("lambda estimates need p >= 1".into()));
    }
    if residuals.len() != n || sigma_seq.len() != n {
        return Err(Error::Dimension(
            "residuals and variance sequence must match the design length".into(),
        ));
    }
    let k = d * p;
    let nf = T::from_usize_lossy(n);

    let gram = design.gram();
    let eye = DMatrix::identity(d, d);
    let lambda3 = gram.kronecker(&eye);

    let mut lambda1 = DMatrix::zeros(k * d, k * d);
    let mut lambda2 = DMatrix::zeros(k * d, k * d);
    for t in 0..n {
        let x = &design.regressors[t];
        let mut outer = DMatrix::zeros(k, k);
        outer.ger(T::one(), x, x, T::one());
        let outer = symmetrize(&outer);
        let sig_inv = PdFactor::new(&sigma_seq[t], "lambda1 variance")?.inverse();
        kron_acc(&mut lambda1, &outer, &sig_inv, T::one());
        let u = &residuals[t];
        let mut uo = DMatrix::zeros(d, d);
        uo.ger(T::one(), u, u, T::one());
        kron_acc(&mut lambda2, &outer, &symmetrize(&uo), T::one());
    }
    lambda1 /= nf;
    lambda2 /= nf;
    let lambda1 = symmetrize(&lambda1);
    let lambda2 = symmetrize(&lambda2);

    let sigma_u_inv = PdFactor::new(sigma_u_hat, "residual covariance")?.inverse();
    let lambda4 = gram.kronecker(&symmetrize(&sigma_u_inv));

    // sandwich via two symmetric solves
    let half = solve_spd(&lambda3, &lambda2, "lambda3 solve")?;
    let avar_ols = symmetrize(&solve_spd(&lambda3, &half.transpose(), "lambda3 solve")?.transpose());
    let avar_als = inv_spd(&lambda1, "lambda1 inverse")?;
    let avar_std = inv_spd(&lambda4, "lambda4 inverse")?;

    Ok(LambdaEstimates {
        lambda1_hat: lambda1,
        lambda2_hat: lambda2,
        lambda3_hat: lambda3,
        lambda4_hat: lambda4,
        avar_ols,
        avar_als,
        avar_std,
    })
}

/// Population covariance building blocks for a known model and path.
#[derive(Clone, Debug)]
pub struct TheoreticalLambdas<T: Scalar> {
    pub lambda1: DMatrix<T>,
    pub lambda2: DMatrix<T>,
    pub lambda3: DMatrix<T>,
    pub lambda4: DMatrix<T>,
}

impl<T: Scalar> TheoreticalLambdas<T> {
    pub fn avar_ols(&self) -> Result<DMatrix<T>> {
        let half = solve_spd(&self.lambda3, &self.lambda2, "lambda3 solve")?;
        Ok(symmetrize(
            &solve_spd(&self.lambda3, &half.transpose(), "lambda3 solve")?.transpose(),
        ))
    }

    pub fn avar_gls(&self) -> Result<DMatrix<T>> {
        inv_spd(&self.lambda1, "lambda1 inverse")
    }

    pub fn avar_std(&self) -> Result<DMatrix<T>> {
        inv_spd(&self.lambda4, "lambda4 inverse")
    }
}

/// Stationary second-moment matrix of the companion state for innovation
/// variance `sigma`: the series `sum_i Delta^i (e e' (x) sigma) Delta^i'`,
/// truncated once the increment's Frobenius norm drops below `tail_tol`.
fn companion_second_moment<T: Scalar>(
    delta: &DMatrix<T>,
    sigma: &DMatrix<T>,
    tail_tol: T,
) -> Result<DMatrix<T>> {
    let d = sigma.nrows();
    let k = delta.nrows();
    let mut term = DMatrix::zeros(k, k);
    term.view_mut((0, 0), (d, d)).copy_from(sigma);
    let mut total = term.clone();
    const MAX_ITER: usize = 100_000;
    for _ in 0..MAX_ITER {
        term = delta * term * delta.transpose();
        total += &term;
        if term.norm() < tail_tol {
            return Ok(symmetrize(&total));
        }
    }
    Err(Error::NonConvergent {
        iterations: MAX_ITER,
        last_norm: term.norm().to_f64().unwrap_or(f64::NAN),
    })
}

/// Midpoint-rule cells on `(0, 1]` with path breakpoints inserted as cell
/// boundaries; returns `(midpoint, width)` pairs.
fn quadrature_cells<T: Scalar>(path: &VariancePath<T>, grid_size: usize) -> Vec<(T, T)> {
    let mut edges: Vec<T> = vec![T::zero()];
    let mut breaks = path.breakpoints();
    breaks.sort_by(|a, b| a.partial_cmp(b).expect("breakpoints are finite"));
    for b in breaks {
        if b > T::zero() && b < T::one() {
            edges.push(b);
        }
    }
    edges.push(T::one());
    let half = T::from_f64_lossy(0.5);
    let mut cells = Vec::with_capacity(grid_size + edges.len());
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let len = hi - lo;
        let m = Float::round(T::from_usize_lossy(grid_size) * len)
            .to_usize()
            .unwrap_or(1)
            .max(1);
        let width = len / T::from_usize_lossy(m);
        for j in 0..m {
            let mid = lo + width * (T::from_usize_lossy(j) + half);
            cells.push((mid, width));
        }
    }
    cells
}

/// Evaluate the population `Lambda_1..Lambda_4` by midpoint quadrature over
/// the variance path, with the inner matrix series truncated at `tail_tol`.
///
/// `Lambda_4` pairs the time-averaged second moment with the time-averaged
/// innovation variance, which is the probability limit of its sample
/// analogue under the path.
pub fn theoretical_lambdas<T: Scalar>(
    model: &VarModel<T>,
    path: &VariancePath<T>,
    p: usize,
    grid_size: usize,
    tail_tol: T,
) -> Result<TheoreticalLambdas<T>> {
    if grid_size == 0 {
        return Err(Error::InvalidArgument("grid_size must be positive".into()));
    }
    let embedded = model.embedded(p)?;
    let st = is_stable(&embedded, T::from_f64_lossy(1e-9));
    if !st.stable {
        return Err(Error::Unstable {
            radius: st.spectral_radius.to_f64().unwrap_or(f64::NAN),
            tol: 1e-9,
        });
    }
    let d = model.d();
    if path.d() != d {
        return Err(Error::Dimension("path dimension does not match model".into()));
    }
    let delta = companion_matrix(&embedded).into_matrix();
    let k = d * p;
    let eye = DMatrix::identity(d, d);

    let mut lambda1 = DMatrix::zeros(k * d, k * d);
    let mut lambda2 = DMatrix::zeros(k * d, k * d);
    let mut lambda3 = DMatrix::zeros(k * d, k * d);
    let mut s_bar = DMatrix::zeros(k, k);
    let mut sigma_bar = DMatrix::zeros(d, d);

    for (r, w) in quadrature_cells(path, grid_size) {
        let sigma = path.at(r)?;
        let s = companion_second_moment(&delta, &sigma, tail_tol)?;
        let sig_inv = PdFactor::new(&sigma, "theoretical variance")?.inverse();
        kron_acc(&mut lambda1, &s, &symmetrize(&sig_inv), w);
        kron_acc(&mut lambda2, &s, &symmetrize(&sigma), w);
        kron_acc(&mut lambda3, &s, &eye, w);
        s_bar += &s * w;
        sigma_bar += &sigma * w;
    }
    let sigma_bar_inv = PdFactor::new(&sigma_bar, "averaged variance")?.inverse();
    let lambda4 = s_bar.kronecker(&symmetrize(&sigma_bar_inv));

    Ok(TheoreticalLambdas {
        lambda1: symmetrize(&lambda1),
        lambda2: symmetrize(&lambda2),
        lambda3: symmetrize(&lambda3),
        lambda4: symmetrize(&lambda4),
    })
}
