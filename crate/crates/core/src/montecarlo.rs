//! Replication harness: selection-frequency and bounds-rejection tables.
//!
//! Replications run in parallel with one deterministic RNG stream per
//! replication, so a table depends only on its spec and seed, not on the
//! worker count. Replications that fail (singular designs on short samples)
//! are counted and excluded from the denominators.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{BandwidthChoice, KernelSpec};
use crate::partial::{pam_sequence, pcm, BoundsMethod, PartialConfig};
use crate::selection::{select_order, CriterionKind, SelectionConfig};
use crate::varproc::{is_stable, replication_rng, simulate_with_rng, VarModel, VariancePath};
use crate::Scalar;

/// Which variance family drives the simulated innovations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceKind {
    /// Smooth trend in rescaled time.
    Smooth,
    /// Single common break at mid-sample.
    Break,
}

impl std::fmt::Display for VarianceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VarianceKind::Smooth => write!(f, "smooth"),
            VarianceKind::Break => write!(f, "break"),
        }
    }
}

impl std::str::FromStr for VarianceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "smooth" => Ok(VarianceKind::Smooth),
            "break" => Ok(VarianceKind::Break),
            other => Err(Error::InvalidArgument(format!("unknown variance kind '{other}'"))),
        }
    }
}

/// The bivariate order-2 data-generating model used by default in both
/// experiments.
pub fn default_dgp<T: Scalar>() -> VarModel<T> {
    let c = |v: f64| T::from_f64_lossy(v);
    VarModel::new(
        2,
        vec![
            DMatrix::from_row_slice(2, 2, &[c(-0.4), c(0.1), c(0.0), c(-0.7)]),
            DMatrix::from_row_slice(2, 2, &[c(-0.6), c(0.0), c(0.0), c(-0.3)]),
        ],
    )
    .expect("default coefficients are well-formed")
}

/// Default variance path for a [`VarianceKind`]: loadings
/// `gamma1 = 20`, `gamma2 = gamma1 / 3`, correlation `rho = 0.2`, and a
/// mid-sample break date for the break family.
pub fn default_variance_path<T: Scalar>(kind: VarianceKind) -> VariancePath<T> {
    let gamma1 = T::from_f64_lossy(20.0);
    let gamma2 = T::from_f64_lossy(20.0 / 3.0);
    let rho = T::from_f64_lossy(0.2);
    match kind {
        VarianceKind::Smooth => VariancePath::SmoothTrend { gamma1, gamma2, rho },
        VarianceKind::Break => VariancePath::AbruptBreak {
            gamma1,
            gamma2,
            rho,
            break_fraction: T::from_f64_lossy(0.5),
        },
    }
}

/// Full description of one experiment.
#[derive(Clone, Debug)]
pub struct ExperimentSpec<T: Scalar> {
    pub dgp: VarModel<T>,
    pub path: VariancePath<T>,
    /// Human-readable variance label recorded in the metadata.
    pub variance_label: String,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    /// Orders `1..=p_scan` are scanned.
    pub p_scan: usize,
    pub burn_in: usize,
    pub kernel: KernelSpec,
    pub bandwidth: BandwidthChoice<T>,
    /// Criteria evaluated by the selection experiment.
    pub criteria: Vec<CriterionKind>,
    /// Bounds methods evaluated by the rejection experiment.
    pub bounds: Vec<BoundsMethod>,
}

impl<T: Scalar> ExperimentSpec<T> {
    /// Experiment with every default: the bivariate order-2 model, the
    /// chosen variance family, scan cap 5, burn-in 200, Gaussian kernel and
    /// cross-validated bandwidth.
    pub fn new(kind: VarianceKind, n: usize, replications: usize, seed: u64) -> Self {
        Self {
            dgp: default_dgp(),
            path: default_variance_path(kind),
            variance_label: kind.to_string(),
            n,
            replications,
            seed,
            p_scan: 5,
            burn_in: crate::varproc::DEFAULT_BURN_IN,
            kernel: KernelSpec::Gaussian,
            bandwidth: BandwidthChoice::Auto,
            criteria: vec![CriterionKind::Aic, CriterionKind::AicAls, CriterionKind::AicGls],
            bounds: BoundsMethod::ALL.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidArgument("need at least one replication".into()));
        }
        if self.p_scan == 0 {
            return Err(Error::InvalidArgument("p_scan must be at least 1".into()));
        }
        let st = is_stable(&self.dgp, T::from_f64_lossy(1e-8));
        if !st.stable {
            return Err(Error::Unstable {
                radius: st.spectral_radius.to_f64().unwrap_or(f64::NAN),
                tol: 1e-8,
            });
        }
        if self.path.d() != self.dgp.d() {
            return Err(Error::Dimension("path and model dimensions differ".into()));
        }
        Ok(())
    }
}

/// Everything recorded next to a table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableMetadata {
    pub experiment: String,
    pub variance: String,
    pub n: usize,
    pub replications: usize,
    pub failures: usize,
    pub seed: u64,
    pub p_scan: usize,
    pub burn_in: usize,
    pub kernel: String,
    pub bandwidth: String,
    pub wall_time_secs: f64,
}

/// A method-by-order table of percentages.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrequencyTable {
    /// Column header for the order/lag axis.
    pub col_label: String,
    pub cols: Vec<usize>,
    /// `(row label, percentages)` pairs in presentation order.
    pub rows: Vec<(String, Vec<f64>)>,
    pub metadata: TableMetadata,
}

impl FrequencyTable {
    pub fn get(&self, row: &str, col: usize) -> Option<f64> {
        let j = self.cols.iter().position(|&c| c == col)?;
        self.rows.iter().find(|(label, _)| label == row).map(|(_, vals)| vals[j])
    }

    /// CSV body: header row then one row per method. Percentages carry ten
    /// significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("method");
        for c in &self.cols {
            out.push_str(&format!(",{}={}", self.col_label, c));
        }
        out.push('\n');
        for (label, vals) in &self.rows {
            out.push_str(label);
            for v in vals {
                out.push(',');
                out.push_str(&format_sig10(*v));
            }
            out.push('\n');
        }
        out
    }

    /// Fixed-width text rendering.
    pub fn to_aligned_text(&self) -> String {
        let width = 14;
        let label_width = self
            .rows
            .iter()
            .map(|(l, _)| l.len())
            .chain(std::iter::once(self.col_label.len()))
            .max()
            .unwrap_or(8)
            + 2;
        let mut out = String::new();
        out.push_str(&format!("{:<label_width$}", self.col_label));
        for c in &self.cols {
            out.push_str(&format!("{c:>width$}"));
        }
        out.push('\n');
        for (label, vals) in &self.rows {
            out.push_str(&format!("{label:<label_width$}"));
            for v in vals {
                out.push_str(&format!("{:>width$}", format_sig10(*v)));
            }
            out.push('\n');
        }
        out
    }
}

/// Format with ten significant digits as plain decimal text (scientific
/// only for extreme magnitudes); trailing zeros are trimmed.
pub fn format_sig10(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let s = format!("{x:.9e}");
    let (mant, exp) = s.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("valid exponent");
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), 10);

    let render = |body: String| if neg { format!("-{body}") } else { body };
    if !(-4..10).contains(&exp) {
        let trimmed = digits.trim_end_matches('0');
        let trimmed = if trimmed.len() <= 1 {
            trimmed.to_string()
        } else {
            format!("{}.{}", &trimmed[..1], &trimmed[1..])
        };
        return render(format!("{trimmed}e{exp}"));
    }
    let body = if exp >= 9 {
        digits + "0".repeat(exp as usize - 9).as_str()
    } else if exp >= 0 {
        let split = (exp + 1) as usize;
        let frac = digits[split..].trim_end_matches('0');
        if frac.is_empty() {
            digits[..split].to_string()
        } else {
            format!("{}.{}", &digits[..split], frac)
        }
    } else {
        let frac = format!("{}{}", "0".repeat((-exp - 1) as usize), digits.as_str());
        format!("0.{}", frac.trim_end_matches('0'))
    };
    render(body)
}

fn percentage_rows(
    labels: &[String],
    counts: &[Vec<usize>],
    successes: usize,
) -> Vec<(String, Vec<f64>)> {
    labels
        .iter()
        .zip(counts)
        .map(|(label, row)| {
            let pct: Vec<f64> =
                row.iter().map(|&c| 100.0 * c as f64 / successes.max(1) as f64).collect();
            (label.clone(), pct)
        })
        .collect()
}

/// Frequency of selected lag length per criterion.
///
/// Each replication simulates a trajectory, scans orders `1..=p_scan` with
/// every requested criterion and records the argmins.
pub fn run_selection_experiment<T: Scalar>(spec: &ExperimentSpec<T>) -> Result<FrequencyTable> {
    spec.validate()?;
    let started = std::time::Instant::now();
    let kinds = spec.criteria.clone();
    if kinds.is_empty() {
        return Err(Error::InvalidArgument("no criterion requested".into()));
    }
    let needs_truth = kinds.contains(&CriterionKind::AicGls);
    let sigmas = if needs_truth { Some(spec.path.sample_sequence(spec.n)?) } else { None };
    let cfg = SelectionConfig {
        kernel: spec.kernel,
        bandwidth: spec.bandwidth.clone(),
        cap: spec.p_scan,
    };

    let outcomes: Vec<Result<Vec<usize>>> = (0..spec.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(spec.seed, rep);
            let ts = simulate_with_rng(
                &spec.dgp,
                &spec.path,
                spec.n,
                spec.p_scan,
                spec.burn_in,
                &mut rng,
            )?;
            let report = select_order(&ts, spec.p_scan, &kinds, &cfg, sigmas.as_deref())?;
            Ok(kinds
                .iter()
                .map(|&k| report.selected_for(k).expect("criterion was requested").p)
                .collect())
        })
        .collect();

    let mut counts = vec![vec![0usize; spec.p_scan]; kinds.len()];
    let mut failures = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(ps) => {
                for (row, p) in ps.into_iter().enumerate() {
                    counts[row][p - 1] += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    let successes = spec.replications - failures;
    let labels: Vec<String> = kinds.iter().map(|k| k.to_string().to_uppercase()).collect();

    Ok(FrequencyTable {
        col_label: "p".into(),
        cols: (1..=spec.p_scan).collect(),
        rows: percentage_rows(&labels, &counts, successes),
        metadata: metadata(spec, "selection", failures, started.elapsed().as_secs_f64()),
    })
}

/// Frequency of the (1,1) PAM entry and the first PCM coordinate falling
/// beyond their 95% bounds, per lag and bounds method.
pub fn run_bounds_experiment<T: Scalar>(spec: &ExperimentSpec<T>) -> Result<FrequencyTable> {
    spec.validate()?;
    let started = std::time::Instant::now();
    let methods = spec.bounds.clone();
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no bounds method requested".into()));
    }
    let needs_truth = methods.contains(&BoundsMethod::Gls);
    let sigmas = if needs_truth { Some(spec.path.sample_sequence(spec.n)?) } else { None };

    // rejection indicators: [pam rows.., pcm rows..] x lag
    let outcomes: Vec<Result<Vec<Vec<bool>>>> = (0..spec.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(spec.seed, rep);
            let ts = simulate_with_rng(
                &spec.dgp,
                &spec.path,
                spec.n,
                spec.p_scan,
                spec.burn_in,
                &mut rng,
            )?;
            // one bandwidth per replication, shared by every lag
            let top = crate::estimation::ols_estimate(&ts, spec.p_scan)?;
            let b = spec.bandwidth.resolve(&top.residuals, &spec.kernel)?;
            let cfg = PartialConfig { kernel: spec.kernel, bandwidth: BandwidthChoice::Fixed(b) };

            let pam = pam_sequence(&ts, spec.p_scan, &methods, &cfg, sigmas.as_deref())?;
            let mut rows: Vec<Vec<bool>> = Vec::with_capacity(2 * methods.len());
            for &m in &methods {
                rows.push(
                    pam.lags
                        .iter()
                        .map(|lag| {
                            num_traits::Float::abs(lag.estimates[&m][(0, 0)])
                                > lag.half_widths[&m][(0, 0)]
                        })
                        .collect(),
                );
            }
            let mut pcm_rows: Vec<Vec<bool>> = vec![Vec::with_capacity(spec.p_scan); methods.len()];
            for h in 1..=spec.p_scan {
                let v = pcm(&ts, h, &methods, &cfg, sigmas.as_deref())?;
                for (i, &m) in methods.iter().enumerate() {
                    pcm_rows[i].push(
                        num_traits::Float::abs(v.estimates[&m][0]) > v.half_widths[&m][0],
                    );
                }
            }
            rows.extend(pcm_rows);
            Ok(rows)
        })
        .collect();

    let n_rows = 2 * methods.len();
    let mut counts = vec![vec![0usize; spec.p_scan]; n_rows];
    let mut failures = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(rows) => {
                for (i, row) in rows.into_iter().enumerate() {
                    for (j, rejected) in row.into_iter().enumerate() {
                        if rejected {
                            counts[i][j] += 1;
                        }
                    }
                }
            }
            Err(_) => failures += 1,
        }
    }
    let successes = spec.replications - failures;
    let mut labels: Vec<String> =
        methods.iter().map(|m| format!("PAM_{}", m.suffix())).collect();
    labels.extend(methods.iter().map(|m| format!("PCM_{}", m.suffix())));

    Ok(FrequencyTable {
        col_label: "lag".into(),
        cols: (1..=spec.p_scan).collect(),
        rows: percentage_rows(&labels, &counts, successes),
        metadata: metadata(spec, "bounds", failures, started.elapsed().as_secs_f64()),
    })
}

fn metadata<T: Scalar>(
    spec: &ExperimentSpec<T>,
    experiment: &str,
    failures: usize,
    wall_time_secs: f64,
) -> TableMetadata {
    TableMetadata {
        experiment: experiment.into(),
        variance: spec.variance_label.clone(),
        n: spec.n,
        replications: spec.replications,
        failures,
        seed: spec.seed,
        p_scan: spec.p_scan,
        burn_in: spec.burn_in,
        kernel: spec.kernel.name().into(),
        bandwidth: match &spec.bandwidth {
            BandwidthChoice::Fixed(b) => format_sig10(b.to_f64().unwrap_or(f64::NAN)),
            BandwidthChoice::CrossValidate(_) => "cv".into(),
            BandwidthChoice::Auto => "cv-auto".into(),
        },
        wall_time_secs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec(kind: VarianceKind) -> ExperimentSpec<f64> {
        let mut spec = ExperimentSpec::new(kind, 60, 25, 123);
        // fixed bandwidth keeps the test quick
        spec.bandwidth = BandwidthChoice::Fixed(0.25);
        spec
    }

    #[test]
    fn selection_table_is_deterministic() {
        let spec = tiny_spec(VarianceKind::Smooth);
        let a = run_selection_experiment(&spec).unwrap();
        let b = run_selection_experiment(&spec).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn selection_rows_sum_to_hundred() {
        let table = run_selection_experiment(&tiny_spec(VarianceKind::Break)).unwrap();
        for (label, vals) in &table.rows {
            let total: f64 = vals.iter().sum();
            assert!((total - 100.0).abs() < 0.1, "row {label} sums to {total}");
        }
    }

    #[test]
    fn single_replication_gives_a_single_full_cell() {
        let mut spec = tiny_spec(VarianceKind::Smooth);
        spec.replications = 1;
        let table = run_selection_experiment(&spec).unwrap();
        for (label, vals) in &table.rows {
            let full = vals.iter().filter(|&&v| (v - 100.0).abs() < 1e-12).count();
            let empty = vals.iter().filter(|&&v| v == 0.0).count();
            assert_eq!(full, 1, "row {label}: {vals:?}");
            assert_eq!(empty, vals.len() - 1);
        }
    }

    #[test]
    fn bounds_entries_are_percentages() {
        let mut spec = tiny_spec(VarianceKind::Break);
        spec.replications = 10;
        let table = run_bounds_experiment(&spec).unwrap();
        assert_eq!(table.rows.len(), 8);
        for (_, vals) in &table.rows {
            for &v in vals {
                assert!((0.0..=100.0).contains(&v));
            }
        }
    }

    #[test]
    fn standard_bounds_over_reject_under_breaks_at_every_length() {
        // pooled lag-3..5 rejection of the standard bounds dominates the
        // adaptive bounds for each simulated length
        for (n, seed) in [(50usize, 201u64), (100, 202), (200, 203)] {
            let mut spec = ExperimentSpec::<f64>::new(VarianceKind::Break, n, 200, seed);
            spec.bounds = vec![BoundsMethod::Standard, BoundsMethod::Als];
            let table = run_bounds_experiment(&spec).unwrap();
            let pooled = |row: &str| -> f64 {
                (3..=5).map(|lag| table.get(row, lag).unwrap()).sum()
            };
            let s = pooled("PAM_S");
            let als = pooled("PAM_ALS");
            assert!(
                s > als,
                "n={n}: pooled standard rejection {s} not above adaptive {als}"
            );
        }
    }

    #[test]
    fn format_sig10_cases() {
        assert_eq!(format_sig10(0.0), "0");
        assert_eq!(format_sig10(78.1), "78.1");
        assert_eq!(format_sig10(-0.5), "-0.5");
        assert_eq!(format_sig10(100.0), "100");
        assert_eq!(format_sig10(1.0 / 3.0), "0.3333333333");
        assert_eq!(format_sig10(12345.6789), "12345.6789");
        assert_eq!(format_sig10(1e12), "1e12");
        assert_eq!(format_sig10(1.5e-7), "1.5e-7");
        assert_eq!(format_sig10(0.0001), "0.0001");
    }

    #[test]
    fn csv_and_text_share_values() {
        let table = run_selection_experiment(&tiny_spec(VarianceKind::Smooth)).unwrap();
        let csv = table.to_csv();
        let text = table.to_aligned_text();
        assert!(csv.starts_with("method,p=1,p=2,p=3,p=4,p=5"));
        for (label, _) in &table.rows {
            assert!(csv.contains(label.as_str()));
            assert!(text.contains(label.as_str()));
        }
    }
}
