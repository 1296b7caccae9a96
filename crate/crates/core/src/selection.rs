//! Gaussian likelihood evaluation and Akaike-type order selection.
//!
//! Each criterion is `-2 loglik + 2 p d^2 / n` with its own likelihood:
//! the standard criterion uses the constant-variance likelihood at the OLS
//! fit, the adaptive criterion the kernel-estimated variance sequence at the
//! ALS fit, and the oracle criterion the true sequence at the GLS fit.
//! Additive `2 pi` constants are dropped from every likelihood, which leaves
//! all argmins unchanged.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimation::{als_estimate, build_design, gls_estimate, ols_estimate};
use crate::kernel::{
    default_floor, estimate_variance_path, BandwidthChoice, KernelSpec, VariancePathEstimate,
};
use crate::linalg::PdFactor;
use crate::varproc::TimeSeries;
use crate::Scalar;

/// Covariance input for a likelihood: one matrix for all dates, or one per date.
pub enum SigmaSequence<'a, T: Scalar> {
    Constant(&'a DMatrix<T>),
    Varying(&'a [DMatrix<T>]),
}

/// `-2/n` times the Gaussian conditional log-likelihood at `theta`, without
/// the `2 pi` constant.
///
/// With a varying sequence this is
/// `n^{-1} sum_t [ ln det Sigma_t + u_t(theta)' Sigma_t^{-1} u_t(theta) ]`;
/// with a constant matrix the log-determinant is taken out of the average.
pub fn gaussian_neg2ll<T: Scalar>(
    theta: &DVector<T>,
    sigma: SigmaSequence<'_, T>,
    ts: &TimeSeries<T>,
    p: usize,
) -> Result<T> {
    let design = build_design(ts, p)?;
    let d = design.d();
    let n = design.n();
    let k = d * p;
    if theta.len() != k * d {
        return Err(Error::Dimension(format!(
            "theta has length {}, expected {}",
            theta.len(),
            k * d
        )));
    }
    let b = DMatrix::from_column_slice(d, k, theta.as_slice());
    let nf = T::from_usize_lossy(n);

    match sigma {
        SigmaSequence::Constant(m) => {
            let factor = PdFactor::new(m, "constant likelihood variance")?;
            let mut quad = T::zero();
            for (y, x) in design.responses().iter().zip(design.regressors()) {
                let u = y - &b * x;
                quad += factor.quad_inv(&u);
            }
            Ok(factor.ln_det() + quad / nf)
        }
        SigmaSequence::Varying(ms) => {
            if ms.len() != n {
                return Err(Error::Dimension(format!(
                    "variance sequence has {} matrices for {n} observations",
                    ms.len()
                )));
            }
            let mut total = T::zero();
            for (t, (y, x)) in design.responses().iter().zip(design.regressors()).enumerate() {
                let factor = PdFactor::new(&ms[t], "likelihood variance")?;
                let u = y - &b * x;
                total += factor.ln_det() + factor.quad_inv(&u);
            }
            Ok(total / nf)
        }
    }
}

/// The three information criteria.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CriterionKind {
    /// Constant-variance likelihood at the OLS fit.
    Aic,
    /// Kernel-estimated variance at the adaptive fit.
    AicAls,
    /// True variance at the GLS fit (simulation only).
    AicGls,
}

impl std::fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CriterionKind::Aic => write!(f, "aic"),
            CriterionKind::AicAls => write!(f, "aic_als"),
            CriterionKind::AicGls => write!(f, "aic_gls"),
        }
    }
}

/// One criterion evaluation at one candidate order.
#[derive(Clone, Copy, Debug)]
pub struct CriterionValue<T: Scalar> {
    pub p: usize,
    pub kind: CriterionKind,
    pub neg2ll: T,
    pub penalty: T,
    pub value: T,
}

/// Variance knowledge handed to [`criterion`].
pub enum VarianceContext<'a, T: Scalar> {
    /// Nothing beyond the data (standard criterion).
    None,
    /// A kernel estimate of the variance path.
    Estimated(&'a VariancePathEstimate<T>),
    /// The true covariance sequence `Sigma_1..Sigma_n`.
    True(&'a [DMatrix<T>]),
}

/// Evaluate one criterion at order `p`.
pub fn criterion<T: Scalar>(
    ts: &TimeSeries<T>,
    p: usize,
    kind: CriterionKind,
    context: VarianceContext<'_, T>,
) -> Result<CriterionValue<T>> {
    let d = ts.d();
    let n = ts.n();
    let penalty = T::from_f64_lossy(2.0) * T::from_usize_lossy(p * d * d) / T::from_usize_lossy(n);
    let neg2ll = match (kind, context) {
        (CriterionKind::Aic, _) => {
            let fit = ols_estimate(ts, p)?;
            let sigma_u = fit.sigma_u_hat.as_ref().expect("OLS carries sigma_u_hat");
            gaussian_neg2ll(&fit.theta, SigmaSequence::Constant(sigma_u), ts, p)?
        }
        (CriterionKind::AicAls, VarianceContext::Estimated(est)) => {
            let fit = als_estimate(ts, p, est)?;
            gaussian_neg2ll(&fit.theta, SigmaSequence::Varying(est.matrices()), ts, p)?
        }
        (CriterionKind::AicGls, VarianceContext::True(sigmas)) => {
            let fit = gls_estimate(ts, p, sigmas)?;
            gaussian_neg2ll(&fit.theta, SigmaSequence::Varying(sigmas), ts, p)?
        }
        _ => {
            return Err(Error::InvalidArgument(
                "criterion kind does not match the provided variance context".into(),
            ))
        }
    };
    Ok(CriterionValue { p, kind, neg2ll, penalty, value: neg2ll + penalty })
}

/// Criterion values at one candidate order, one slot per requested method.
#[derive(Clone, Debug, Default)]
pub struct CriterionTrace<T: Scalar> {
    pub p: usize,
    pub aic: Option<CriterionValue<T>>,
    pub aic_als: Option<CriterionValue<T>>,
    pub aic_gls: Option<CriterionValue<T>>,
}

impl<T: Scalar> CriterionTrace<T> {
    pub fn get(&self, kind: CriterionKind) -> Option<&CriterionValue<T>> {
        match kind {
            CriterionKind::Aic => self.aic.as_ref(),
            CriterionKind::AicAls => self.aic_als.as_ref(),
            CriterionKind::AicGls => self.aic_gls.as_ref(),
        }
    }
}

/// Argmin of one criterion over the scanned orders.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelectedOrder {
    pub kind: CriterionKind,
    pub p: usize,
    /// Set when the selection lands at or beyond the reliability cap, the
    /// point past which identified orders are treated as suspect.
    pub flagged: bool,
}

/// Order-selection output: per-order traces and per-method argmins.
#[derive(Clone, Debug)]
pub struct SelectionReport<T: Scalar> {
    pub traces: Vec<CriterionTrace<T>>,
    pub selected: Vec<SelectedOrder>,
    pub cap: usize,
    /// Bandwidth behind the adaptive criterion, when it was computed.
    pub bandwidth: Option<T>,
}

impl<T: Scalar> SelectionReport<T> {
    pub fn selected_for(&self, kind: CriterionKind) -> Option<&SelectedOrder> {
        self.selected.iter().find(|s| s.kind == kind)
    }
}

/// Settings for the adaptive criterion.
#[derive(Clone, Debug)]
pub struct SelectionConfig<T: Scalar> {
    pub kernel: KernelSpec,
    pub bandwidth: BandwidthChoice<T>,
    /// Reliability cap on the selected order.
    pub cap: usize,
}

impl<T: Scalar> Default for SelectionConfig<T> {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::Gaussian,
            bandwidth: BandwidthChoice::Auto,
            cap: 5,
        }
    }
}

fn argmin<T: Scalar>(values: &[(usize, T)]) -> usize {
    let mut best = values[0];
    for &(p, v) in &values[1..] {
        if v < best.1 {
            best = (p, v);
        }
    }
    best.0
}

/// Scan orders `1..=p_max` and return criterion traces plus argmins.
///
/// All fits condition on the same `p_max` presample values, so every
/// criterion is computed on an identical effective sample across orders.
/// The adaptive criterion resolves its bandwidth once, on the OLS residuals
/// of the order-`p_max` fit, and re-estimates the variance path from the
/// order-`p` residuals for each candidate `p`.
pub fn select_order<T: Scalar>(
    ts: &TimeSeries<T>,
    p_max: usize,
    kinds: &[CriterionKind],
    config: &SelectionConfig<T>,
    true_path: Option<&[DMatrix<T>]>,
) -> Result<SelectionReport<T>> {
    if p_max == 0 {
        return Err(Error::InvalidArgument("p_max must be at least 1".into()));
    }
    if ts.presample().len() < p_max {
        return Err(Error::InsufficientPresample {
            needed: p_max,
            available: ts.presample().len(),
        });
    }
    if kinds.is_empty() {
        return Err(Error::InvalidArgument("no criterion requested".into()));
    }
    let want = |k: CriterionKind| kinds.contains(&k);
    if want(CriterionKind::AicGls) && true_path.is_none() {
        return Err(Error::InvalidArgument(
            "the GLS criterion needs the true variance sequence".into(),
        ));
    }

    let bandwidth = if want(CriterionKind::AicAls) {
        let full_fit = ols_estimate(ts, p_max)?;
        Some(config.bandwidth.resolve(&full_fit.residuals, &config.kernel)?)
    } else {
        None
    };

    let mut traces = Vec::with_capacity(p_max);
    for p in 1..=p_max {
        let mut trace = CriterionTrace { p, ..Default::default() };
        if want(CriterionKind::Aic) {
            trace.aic = Some(criterion(ts, p, CriterionKind::Aic, VarianceContext::None)?);
        }
        if let Some(b) = bandwidth {
            let fit = ols_estimate(ts, p)?;
            let floor = default_floor(&fit.residuals);
            let est = estimate_variance_path(&fit.residuals, b, &config.kernel, floor)?;
            trace.aic_als = Some(criterion(
                ts,
                p,
                CriterionKind::AicAls,
                VarianceContext::Estimated(&est),
            )?);
        }
        if let Some(sigmas) = true_path {
            if want(CriterionKind::AicGls) {
                trace.aic_gls = Some(criterion(
                    ts,
                    p,
                    CriterionKind::AicGls,
                    VarianceContext::True(sigmas),
                )?);
            }
        }
        traces.push(trace);
    }

    let mut selected = Vec::new();
    for &kind in kinds {
        let values: Vec<(usize, T)> = traces
            .iter()
            .filter_map(|t| t.get(kind).map(|c| (t.p, c.value)))
            .collect();
        if values.is_empty() {
            continue;
        }
        let p = argmin(&values);
        selected.push(SelectedOrder { kind, p, flagged: p >= config.cap });
    }

    Ok(SelectionReport { traces, selected, cap: config.cap, bandwidth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::varproc::{
        replication_rng, simulate, simulate_with_rng, VarModel, VariancePath, DEFAULT_BURN_IN,
    };
    use approx::assert_relative_eq;

    fn series_1d(presample: &[f64], values: &[f64]) -> TimeSeries<f64> {
        TimeSeries::new(
            presample.iter().map(|&x| DVector::from_element(1, x)).collect(),
            values.iter().map(|&x| DVector::from_element(1, x)).collect(),
        )
        .unwrap()
    }

    fn study_model() -> VarModel<f64> {
        VarModel::new(
            2,
            vec![
                DMatrix::from_row_slice(2, 2, &[-0.4, 0.1, 0.0, -0.7]),
                DMatrix::from_row_slice(2, 2, &[-0.6, 0.0, 0.0, -0.3]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn neg2ll_zero_residuals_identity_variance() {
        let ts = series_1d(&[0.0], &[0.0, 0.0, 0.0]);
        let theta = DVector::from_element(1, 0.0);
        let eye = DMatrix::identity(1, 1);
        let v = gaussian_neg2ll(&theta, SigmaSequence::Constant(&eye), &ts, 1).unwrap();
        assert_relative_eq!(v, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn neg2ll_direct_evaluation() {
        // residuals (1, 2) with unit variance: 0 + (1 + 4)/2
        let ts = series_1d(&[5.0], &[1.0, 2.0]);
        let theta = DVector::from_element(1, 0.0);
        let eye = DMatrix::identity(1, 1);
        let v = gaussian_neg2ll(&theta, SigmaSequence::Constant(&eye), &ts, 1).unwrap();
        assert_relative_eq!(v, 2.5, epsilon = 1e-14);
    }

    #[test]
    fn neg2ll_scaling_identity() {
        let ts = simulate(
            &study_model(),
            &VariancePath::constant(DMatrix::identity(2, 2)).unwrap(),
            150,
            2,
            DEFAULT_BURN_IN,
            51,
        )
        .unwrap();
        let fit = crate::estimation::ols_estimate(&ts, 2).unwrap();
        let sigma = fit.sigma_u_hat.clone().unwrap();
        let base = gaussian_neg2ll(&fit.theta, SigmaSequence::Constant(&sigma), &ts, 2).unwrap();
        let quad = base - sigma.determinant().ln();

        let c = 3.0;
        let scaled = &sigma * c;
        let v = gaussian_neg2ll(&fit.theta, SigmaSequence::Constant(&scaled), &ts, 2).unwrap();
        let expected = base + 2.0 * c.ln() + (1.0 / c - 1.0) * quad;
        assert_relative_eq!(v, expected, epsilon = 1e-10);
    }

    #[test]
    fn aic_matches_textbook_form() {
        let ts = simulate(
            &study_model(),
            &VariancePath::constant(DMatrix::identity(2, 2)).unwrap(),
            300,
            3,
            DEFAULT_BURN_IN,
            52,
        )
        .unwrap();
        for p in 1..=3 {
            let c = criterion(&ts, p, CriterionKind::Aic, VarianceContext::None).unwrap();
            let fit = crate::estimation::ols_estimate(&ts, p).unwrap();
            let sigma = fit.sigma_u_hat.unwrap();
            let d = 2.0;
            let textbook =
                sigma.determinant().ln() + d + 2.0 * p as f64 * d * d / ts.n() as f64;
            assert_relative_eq!(c.value, textbook, epsilon = 1e-10);
        }
    }

    #[test]
    fn penalty_step_is_constant() {
        let ts = simulate(
            &study_model(),
            &VariancePath::constant(DMatrix::identity(2, 2)).unwrap(),
            200,
            4,
            DEFAULT_BURN_IN,
            53,
        )
        .unwrap();
        let mut prev: Option<CriterionValue<f64>> = None;
        for p in 1..=4 {
            let c = criterion(&ts, p, CriterionKind::Aic, VarianceContext::None).unwrap();
            assert_relative_eq!(c.value - c.neg2ll, c.penalty, epsilon = 1e-15);
            if let Some(q) = prev {
                assert_relative_eq!(
                    c.penalty - q.penalty,
                    2.0 * 4.0 / ts.n() as f64,
                    epsilon = 1e-15
                );
            }
            prev = Some(c);
        }
    }

    #[test]
    fn adaptive_equals_oracle_when_fed_the_truth() {
        let path = VariancePath::SmoothTrend { gamma1: 20.0, gamma2: 20.0 / 3.0, rho: 0.2 };
        let ts = simulate(&study_model(), &path, 200, 3, DEFAULT_BURN_IN, 54).unwrap();
        let sigmas = path.sample_sequence(ts.n()).unwrap();
        let est = VariancePathEstimate::from_matrices(sigmas.clone(), 0.1, 1e-12).unwrap();
        for p in 1..=3 {
            let a = criterion(&ts, p, CriterionKind::AicAls, VarianceContext::Estimated(&est))
                .unwrap();
            let g =
                criterion(&ts, p, CriterionKind::AicGls, VarianceContext::True(&sigmas)).unwrap();
            assert_eq!(a.value, g.value);
        }
    }

    #[test]
    fn argmin_breaks_ties_toward_smaller_order_and_ignores_shifts() {
        let values = vec![(1, 2.0), (2, 1.5), (3, 1.5), (4, 4.0)];
        assert_eq!(argmin(&values), 2);
        let shifted: Vec<(usize, f64)> = values.iter().map(|&(p, v)| (p, v + 10.0)).collect();
        assert_eq!(argmin(&shifted), 2);
    }

    #[test]
    fn select_order_flags_cap_hits() {
        let path = VariancePath::SmoothTrend { gamma1: 20.0, gamma2: 20.0 / 3.0, rho: 0.2 };
        let ts = simulate(&study_model(), &path, 100, 5, DEFAULT_BURN_IN, 55).unwrap();
        let cfg = SelectionConfig { cap: 5, ..Default::default() };
        let report = select_order(&ts, 5, &[CriterionKind::Aic], &cfg, None).unwrap();
        let sel = report.selected_for(CriterionKind::Aic).unwrap();
        assert_eq!(sel.flagged, sel.p >= 5);
    }

    #[test]
    fn adaptive_criterion_keeps_white_noise_order_small() {
        let model = VarModel::<f64>::new(1, vec![]).unwrap();
        let path = VariancePath::constant(DMatrix::identity(1, 1)).unwrap();
        let n = 2000;
        let cfg = SelectionConfig {
            bandwidth: BandwidthChoice::Fixed((n as f64).powf(-0.2)),
            ..Default::default()
        };
        let reps = 100;
        let mut small = 0;
        for rep in 0..reps {
            let mut rng = replication_rng(61, rep);
            let ts = simulate_with_rng(&model, &path, n, 5, DEFAULT_BURN_IN, &mut rng).unwrap();
            let report = select_order(&ts, 5, &[CriterionKind::AicAls], &cfg, None).unwrap();
            if report.selected_for(CriterionKind::AicAls).unwrap().p <= 2 {
                small += 1;
            }
        }
        assert!(small * 100 >= 80 * reps, "small order selected in {small}/{reps} runs");
    }

    #[test]
    fn adaptive_and_standard_criteria_agree_asymptotically_under_homoscedasticity() {
        let model = study_model();
        let path =
            VariancePath::constant(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0])).unwrap();
        let reps = 20;
        let gap = |n: usize, seed: u64, rep: u64| -> f64 {
            let mut rng = replication_rng(seed, rep);
            let ts = simulate_with_rng(&model, &path, n, 2, DEFAULT_BURN_IN, &mut rng).unwrap();
            let cfg = SelectionConfig {
                bandwidth: BandwidthChoice::Fixed((n as f64).powf(-0.2)),
                ..Default::default()
            };
            let report = select_order(
                &ts,
                2,
                &[CriterionKind::Aic, CriterionKind::AicAls],
                &cfg,
                None,
            )
            .unwrap();
            let t = &report.traces[1];
            (t.aic_als.unwrap().value - t.aic.unwrap().value).abs()
        };
        let mut closer = 0;
        for rep in 0..reps {
            let g_small = gap(500, 71, rep);
            let g_large = gap(4000, 72, rep);
            if g_large < 0.5 * g_small {
                closer += 1;
            }
        }
        assert!(closer * 100 >= 70 * reps, "criteria converged in {closer}/{reps} runs");
    }
}
