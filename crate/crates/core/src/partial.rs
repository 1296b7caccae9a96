//! Partial autoregressive matrices (PAM) and partial cross-correlation
//! matrices (PCM) with confidence bounds.
//!
//! The PAM at lag `h` is the last coefficient block of an order-`h` fit; it
//! vanishes in population for `h` above the true order. The PCM rescales
//! the same block by long-run covariances,
//! `P(p) = (Su^{-1/2} (x) Sw^{1/2}) vec(A_p)`, where `Sw` is the long-run
//! error variance of the backward regression of `X_{t-p}` on the
//! intermediate lags and `Su` the long-run innovation variance. Half-widths
//! are `1.96 sqrt(diag(avar)/n)` under each requested covariance estimator.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimation::{
    als_estimate, build_design, gls_estimate, lambda_estimates, ols_estimate, weighted_avar,
    EstimationResult,
};
use crate::kernel::{default_floor, estimate_variance_path, BandwidthChoice, KernelSpec};
pub use crate::linalg::matrix_sqrt_pd;
use crate::linalg::{inv_spd, symmetrize};
use crate::varproc::TimeSeries;
use crate::Scalar;

/// Two-sided 95% normal quantile used for all confidence bounds.
pub const Z_95: f64 = 1.96;

/// Confidence-bound flavors.
///
/// `Standard` pairs the OLS estimate with the constant-variance asymptotic
/// covariance, `Ols` with the heteroscedasticity-robust sandwich, `Als`
/// pairs the adaptive estimate with the kernel-weighted precision, and
/// `Gls` pairs the oracle estimate with the true-variance precision
/// (simulations only).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundsMethod {
    Standard,
    Ols,
    Als,
    Gls,
}

impl BoundsMethod {
    pub const ALL: [BoundsMethod; 4] =
        [BoundsMethod::Standard, BoundsMethod::Ols, BoundsMethod::Als, BoundsMethod::Gls];

    /// Feasible methods on real data (no oracle).
    pub const FEASIBLE: [BoundsMethod; 3] =
        [BoundsMethod::Standard, BoundsMethod::Ols, BoundsMethod::Als];

    /// Short label used in table rows (`S`, `OLS`, `ALS`, `GLS`).
    pub fn suffix(&self) -> &'static str {
        match self {
            BoundsMethod::Standard => "S",
            BoundsMethod::Ols => "OLS",
            BoundsMethod::Als => "ALS",
            BoundsMethod::Gls => "GLS",
        }
    }
}

impl std::fmt::Display for BoundsMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundsMethod::Standard => write!(f, "standard"),
            BoundsMethod::Ols => write!(f, "ols"),
            BoundsMethod::Als => write!(f, "als"),
            BoundsMethod::Gls => write!(f, "gls"),
        }
    }
}

impl std::str::FromStr for BoundsMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" | "s" => Ok(BoundsMethod::Standard),
            "ols" => Ok(BoundsMethod::Ols),
            "als" => Ok(BoundsMethod::Als),
            "gls" => Ok(BoundsMethod::Gls),
            other => Err(Error::InvalidArgument(format!("unknown bounds method '{other}'"))),
        }
    }
}

/// Kernel settings for the adaptive side of the bounds.
#[derive(Clone, Debug)]
pub struct PartialConfig<T: Scalar> {
    pub kernel: KernelSpec,
    pub bandwidth: BandwidthChoice<T>,
}

impl<T: Scalar> Default for PartialConfig<T> {
    fn default() -> Self {
        Self { kernel: KernelSpec::Gaussian, bandwidth: BandwidthChoice::Auto }
    }
}

/// Estimates and half-widths for the last coefficient block at one lag.
#[derive(Clone, Debug)]
pub struct PamLag<T: Scalar> {
    pub h: usize,
    /// Point estimate of the block under each method's estimator.
    pub estimates: BTreeMap<BoundsMethod, DMatrix<T>>,
    /// Entrywise 95% half-widths under each method's covariance.
    pub half_widths: BTreeMap<BoundsMethod, DMatrix<T>>,
}

/// PAM estimates for lags `1..=p_max`.
#[derive(Clone, Debug)]
pub struct PamSequence<T: Scalar> {
    pub lags: Vec<PamLag<T>>,
}

/// Long-run covariances normalizing the PCM.
#[derive(Clone, Debug)]
pub struct LongRunCovariances<T: Scalar> {
    pub sigma_w: DMatrix<T>,
    pub sigma_u: DMatrix<T>,
}

/// PCM vector at one lag: `d^2` coordinates in column-major block order.
#[derive(Clone, Debug)]
pub struct PcmVector<T: Scalar> {
    pub p: usize,
    pub estimates: BTreeMap<BoundsMethod, DVector<T>>,
    /// Asymptotic covariance of `sqrt(n)` times the estimate.
    pub covariances: BTreeMap<BoundsMethod, DMatrix<T>>,
    pub half_widths: BTreeMap<BoundsMethod, DVector<T>>,
}

struct MethodFits<T: Scalar> {
    ols: EstimationResult<T>,
    als: Option<EstimationResult<T>>,
    gls: Option<EstimationResult<T>>,
    /// avar of theta-hat per method, full `p d^2` square matrices.
    avars: BTreeMap<BoundsMethod, DMatrix<T>>,
}

/// Shared fitting work for one lag `h`: every requested estimator plus its
/// asymptotic covariance.
fn fit_methods<T: Scalar>(
    ts: &TimeSeries<T>,
    h: usize,
    methods: &[BoundsMethod],
    kernel: &KernelSpec,
    bandwidth: T,
    true_path: Option<&[DMatrix<T>]>,
) -> Result<MethodFits<T>> {
    let want = |m: BoundsMethod| methods.contains(&m);
    let ols = ols_estimate(ts, h)?;
    let design = build_design(ts, h)?;
    let sigma_u = ols.sigma_u_hat.clone().expect("OLS carries sigma_u_hat");

    let als_sigmas = if want(BoundsMethod::Als) {
        let floor = default_floor(&ols.residuals);
        Some(estimate_variance_path(&ols.residuals, bandwidth, kernel, floor)?)
    } else {
        None
    };

    // the lambda assembly needs some weighting sequence; fall back to the
    // constant residual covariance when the adaptive side is not requested
    let lambda_seq: Vec<DMatrix<T>> = match &als_sigmas {
        Some(est) => est.matrices().to_vec(),
        None => vec![sigma_u.clone(); design.n()],
    };
    let lam = lambda_estimates(&design, &ols.residuals, &lambda_seq, &sigma_u)?;

    let mut avars = BTreeMap::new();
    if want(BoundsMethod::Standard) {
        avars.insert(BoundsMethod::Standard, lam.avar_std.clone());
    }
    if want(BoundsMethod::Ols) {
        avars.insert(BoundsMethod::Ols, lam.avar_ols.clone());
    }
    if want(BoundsMethod::Als) {
        avars.insert(BoundsMethod::Als, lam.avar_als.clone());
    }

    let als = match &als_sigmas {
        Some(est) => Some(als_estimate(ts, h, est)?),
        None => None,
    };
    let gls = if want(BoundsMethod::Gls) {
        let sigmas = true_path.ok_or_else(|| {
            Error::InvalidArgument("GLS bounds need the true variance sequence".into())
        })?;
        avars.insert(BoundsMethod::Gls, weighted_avar(&design, sigmas)?);
        Some(gls_estimate(ts, h, sigmas)?)
    } else {
        None
    };

    Ok(MethodFits { ols, als, gls, avars })
}

impl<T: Scalar> MethodFits<T> {
    fn estimate_for(&self, m: BoundsMethod) -> &EstimationResult<T> {
        match m {
            BoundsMethod::Standard | BoundsMethod::Ols => &self.ols,
            BoundsMethod::Als => self.als.as_ref().expect("ALS fit was requested"),
            BoundsMethod::Gls => self.gls.as_ref().expect("GLS fit was requested"),
        }
    }
}

/// Half-width matrix for the last `d x d` block of an order-`h` fit.
fn last_block_half_widths<T: Scalar>(avar: &DMatrix<T>, h: usize, d: usize, n: usize) -> DMatrix<T> {
    let z = T::from_f64_lossy(Z_95);
    let nf = T::from_usize_lossy(n);
    let base = (h - 1) * d * d;
    DMatrix::from_fn(d, d, |r, c| {
        let idx = base + c * d + r;
        z * num_traits::Float::sqrt(avar[(idx, idx)] / nf)
    })
}

/// Fit orders `1..=p_max` and report the last coefficient block of each fit
/// with 95% half-widths under every requested bounds method.
///
/// The bandwidth for the adaptive method is resolved once, on the OLS
/// residuals of the order-`p_max` fit.
pub fn pam_sequence<T: Scalar>(
    ts: &TimeSeries<T>,
    p_max: usize,
    methods: &[BoundsMethod],
    config: &PartialConfig<T>,
    true_path: Option<&[DMatrix<T>]>,
) -> Result<PamSequence<T>> {
    if p_max == 0 {
        return Err(Error::InvalidArgument("p_max must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no bounds method requested".into()));
    }
    if ts.presample().len() < p_max {
        return Err(Error::InsufficientPresample {
            needed: p_max,
            available: ts.presample().len(),
        });
    }
    let bandwidth = resolve_bandwidth(ts, p_max, methods, config)?;
    let d = ts.d();
    let n = ts.n();
    let mut lags = Vec::with_capacity(p_max);
    for h in 1..=p_max {
        let fits = fit_methods(ts, h, methods, &config.kernel, bandwidth, true_path)?;
        let mut estimates = BTreeMap::new();
        let mut half_widths = BTreeMap::new();
        for &m in methods {
            estimates.insert(m, fits.estimate_for(m).last_block());
            half_widths.insert(m, last_block_half_widths(&fits.avars[&m], h, d, n));
        }
        lags.push(PamLag { h, estimates, half_widths });
    }
    Ok(PamSequence { lags })
}

fn resolve_bandwidth<T: Scalar>(
    ts: &TimeSeries<T>,
    p_max: usize,
    methods: &[BoundsMethod],
    config: &PartialConfig<T>,
) -> Result<T> {
    if methods.contains(&BoundsMethod::Als) {
        let top = ols_estimate(ts, p_max)?;
        config.bandwidth.resolve(&top.residuals, &config.kernel)
    } else {
        // unused placeholder when the adaptive side is off
        Ok(T::one())
    }
}

/// Long-run covariances at lag `p`.
///
/// For `p >= 2`, `sigma_w` is the Schur complement from regressing
/// `X_{t-p}` on the intermediate lags `X_{t-p+1}..X_{t-1}` (sum over
/// `t = p..n`, divided by `n`), and `sigma_u` averages the order-`p` OLS
/// residual outer products. For `p = 1` both reduce to the sample second
/// moment of the observations.
pub fn long_run_covariances<T: Scalar>(ts: &TimeSeries<T>, p: usize) -> Result<LongRunCovariances<T>> {
    if p == 0 {
        return Err(Error::InvalidArgument("long-run covariances need p >= 1".into()));
    }
    let d = ts.d();
    let n = ts.n();
    let nf = T::from_usize_lossy(n);

    if p == 1 {
        let mut m = DMatrix::zeros(d, d);
        for t in 1..=n as isize {
            let x = ts.at(t);
            m.ger(T::one(), x, x, T::one());
        }
        let m = symmetrize(&(m / nf));
        return Ok(LongRunCovariances { sigma_w: m.clone(), sigma_u: m });
    }

    if ts.presample().is_empty() {
        return Err(Error::InsufficientPresample { needed: 1, available: 0 });
    }
    let k = (p - 1) * d;
    let mut s_yy = DMatrix::zeros(d, d);
    let mut s_yz = DMatrix::zeros(d, k);
    let mut s_zz = DMatrix::zeros(k, k);
    for t in p as isize..=n as isize {
        let y = ts.at(t - p as isize);
        let mut z = DVector::zeros(k);
        for lag in 1..p as isize {
            z.rows_mut(((lag - 1) as usize) * d, d).copy_from(ts.at(t - lag));
        }
        s_yy.ger(T::one(), y, y, T::one());
        s_yz.ger(T::one(), y, &z, T::one());
        s_zz.ger(T::one(), &z, &z, T::one());
    }
    s_yy /= nf;
    s_yz /= nf;
    s_zz /= nf;
    let s_zz_inv = inv_spd(&s_zz, "intermediate-lag Gram")?;
    let sigma_w = symmetrize(&(&s_yy - &s_yz * s_zz_inv * s_yz.transpose()));

    let ols = ols_estimate(ts, p)?;
    let sigma_u = ols.sigma_u_hat.expect("OLS carries sigma_u_hat");

    for (name, m) in [("sigma_w", &sigma_w), ("sigma_u", &sigma_u)] {
        let ev = crate::linalg::sym_eigenvalues(m);
        if !(ev[0] > T::zero()) {
            return Err(Error::NotPositiveDefinite(format!("long-run {name}")));
        }
    }
    Ok(LongRunCovariances { sigma_w, sigma_u })
}

/// The PCM rescaling `Su^{-1/2} (x) Sw^{1/2}` applied to `vec(A_p)`.
pub fn pcm_transform<T: Scalar>(lr: &LongRunCovariances<T>) -> Result<DMatrix<T>> {
    let w_half = matrix_sqrt_pd(&lr.sigma_w)?;
    let u_half = matrix_sqrt_pd(&lr.sigma_u)?;
    let u_half_inv = inv_spd(&u_half, "sigma_u square root")?;
    Ok(u_half_inv.kronecker(&w_half))
}

/// Partial cross-correlation vector at lag `p` with 95% half-widths under
/// every requested bounds method.
pub fn pcm<T: Scalar>(
    ts: &TimeSeries<T>,
    p: usize,
    methods: &[BoundsMethod],
    config: &PartialConfig<T>,
    true_path: Option<&[DMatrix<T>]>,
) -> Result<PcmVector<T>> {
    if p == 0 {
        return Err(Error::InvalidArgument("pcm needs p >= 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no bounds method requested".into()));
    }
    let d = ts.d();
    let n = ts.n();
    let bandwidth = resolve_bandwidth(ts, p, methods, config)?;
    let fits = fit_methods(ts, p, methods, &config.kernel, bandwidth, true_path)?;
    let lr = long_run_covariances(ts, p)?;
    let f = pcm_transform(&lr)?;

    let z = T::from_f64_lossy(Z_95);
    let nf = T::from_usize_lossy(n);
    let base = (p - 1) * d * d;

    let mut estimates = BTreeMap::new();
    let mut covariances = BTreeMap::new();
    let mut half_widths = BTreeMap::new();
    for &m in methods {
        let block = fits.estimate_for(m).last_block();
        let vec_block = DVector::from_column_slice(block.as_slice());
        estimates.insert(m, &f * &vec_block);

        // R~ avar R~' is the trailing d^2 x d^2 block of the full avar
        let avar_block = fits.avars[&m].view((base, base), (d * d, d * d)).into_owned();
        let cov = symmetrize(&(&f * avar_block * f.transpose()));
        half_widths.insert(
            m,
            DVector::from_iterator(
                d * d,
                (0..d * d).map(|i| z * num_traits::Float::sqrt(cov[(i, i)] / nf)),
            ),
        );
        covariances.insert(m, cov);
    }
    Ok(PcmVector { p, estimates, covariances, half_widths })
}
