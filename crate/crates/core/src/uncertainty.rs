//! Asymptotic covariance of the MEM1/MEM2 estimators and the set-level bootstrap.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::EstimateError;
use crate::indices::{EstimateResult, Method};
use crate::numeric::{fit_method, FitOptions};
use crate::par::map_indices;
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CovarianceSource {
    /// Closed form written with the common factor `λ_T λ_NT / (N (1 - e^{-λS}))` outside.
    ClosedFormMain,
    /// Closed form written entry by entry.
    ClosedFormAppendix,
    /// Inverse observed information at a numerical optimum.
    NumericFisher,
    Bootstrap,
}

/// Symmetric covariance matrix with labelled parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub source: CovarianceSource,
}

impl CovarianceMatrix {
    pub fn from_matrix(labels: Vec<String>, m: &DMatrix<f64>, source: CovarianceSource) -> Self {
        let n = m.nrows();
        let values = (0..n)
            .map(|i| (0..n).map(|j| 0.5 * (m[(i, j)] + m[(j, i)])).collect())
            .collect();
        Self { labels, values, source }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.values.len();
        DMatrix::from_fn(n, n, |i, j| self.values[i][j])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.values[i][i].max(0.0).sqrt()).collect()
    }
}

fn mem_labels(p: &str) -> Vec<String> {
    vec!["lambda_target".into(), "lambda_nontarget".into(), p.into()]
}

struct CovInputs {
    lt: f64,
    lnt: f64,
    lambda: f64,
    touched: f64,
    baited: f64,
    n: f64,
    s: f64,
}

fn cov_inputs(lt: f64, lnt: f64, p: f64, n: f64, s: f64) -> Result<CovInputs, EstimateError> {
    if !(lt > 0.0 && lnt > 0.0 && lt.is_finite() && lnt.is_finite()) {
        return Err(EstimateError::Domain("covariance needs lambda_target, lambda_nontarget > 0".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(EstimateError::Domain(format!("escape probability {p} outside [0, 1]")));
    }
    if !(n > 0.0 && s > 0.0) {
        return Err(EstimateError::Domain("covariance needs N > 0 and S > 0".into()));
    }
    let lambda = lt + lnt;
    let x = lambda * s;
    Ok(CovInputs {
        lt,
        lnt,
        lambda,
        touched: -(-x).exp_m1(),
        baited: (-x).exp(),
        n,
        s,
    })
}

fn sym3(v11: f64, v12: f64, v22: f64, v33: f64) -> Vec<Vec<f64>> {
    vec![vec![v11, v12, 0.0], vec![v12, v22, 0.0], vec![0.0, 0.0, v33]]
}

/// Entry-wise closed form shared by MEM1 and MEM2; `q` is the escape factor of the
/// competition term (1 for MEM1, `1 - p` for MEM2).
fn rate_block(c: &CovInputs, q: f64) -> (f64, f64, f64) {
    let competition = c.lt * c.lnt / (q * c.touched);
    let depletion = c.touched / (c.s * c.s * c.baited * c.lambda * c.lambda);
    (
        (competition + depletion * c.lt * c.lt) / c.n,
        (-competition + depletion * c.lt * c.lnt) / c.n,
        (competition + depletion * c.lnt * c.lnt) / c.n,
    )
}

/// Asymptotic covariance of the MEM1 estimators `(λ_T, λ_NT, p_NT)` for `n_hooks`
/// total hooks at soak `soak`.
pub fn asymptotic_cov_mem1(
    lambda_t: f64,
    lambda_nt: f64,
    p_nt: f64,
    n_hooks: f64,
    soak: f64,
) -> Result<CovarianceMatrix, EstimateError> {
    let c = cov_inputs(lambda_t, lambda_nt, p_nt, n_hooks, soak)?;
    let (v11, v12, v22) = rate_block(&c, 1.0);
    let v33 = c.lambda * p_nt * (1.0 - p_nt) / (c.lnt * c.touched) / c.n;
    Ok(CovarianceMatrix {
        labels: mem_labels("p_nontarget"),
        values: sym3(v11, v12, v22, v33),
        source: CovarianceSource::ClosedFormAppendix,
    })
}

/// Asymptotic covariance of the MEM2 estimators `(λ_T, λ_NT, p)`.
pub fn asymptotic_cov_mem2(
    lambda_t: f64,
    lambda_nt: f64,
    p: f64,
    n_hooks: f64,
    soak: f64,
) -> Result<CovarianceMatrix, EstimateError> {
    let c = cov_inputs(lambda_t, lambda_nt, p, n_hooks, soak)?;
    if p >= 1.0 {
        return Err(EstimateError::Domain("MEM2 covariance needs p < 1".into()));
    }
    let (v11, v12, v22) = rate_block(&c, 1.0 - p);
    let v33 = p * (1.0 - p) / c.touched / c.n;
    Ok(CovarianceMatrix {
        labels: mem_labels("p"),
        values: sym3(v11, v12, v22, v33),
        source: CovarianceSource::ClosedFormAppendix,
    })
}

/// MEM1 covariance in factored form. The (λ_NT, λ_NT) depletion term carries
/// `(1 - e^{-λS})²` like its siblings.
pub fn asymptotic_cov_mem1_main(
    lambda_t: f64,
    lambda_nt: f64,
    p_nt: f64,
    n_hooks: f64,
    soak: f64,
) -> Result<CovarianceMatrix, EstimateError> {
    factored(lambda_t, lambda_nt, p_nt, n_hooks, soak, false)
}

/// MEM2 covariance in factored form.
pub fn asymptotic_cov_mem2_main(
    lambda_t: f64,
    lambda_nt: f64,
    p: f64,
    n_hooks: f64,
    soak: f64,
) -> Result<CovarianceMatrix, EstimateError> {
    if p >= 1.0 {
        return Err(EstimateError::Domain("MEM2 covariance needs p < 1".into()));
    }
    factored(lambda_t, lambda_nt, p, n_hooks, soak, true)
}

fn factored(lt: f64, lnt: f64, p: f64, n: f64, s: f64, mem2: bool) -> Result<CovarianceMatrix, EstimateError> {
    let c = cov_inputs(lt, lnt, p, n, s)?;
    let front = c.lt * c.lnt / (c.n * c.touched);
    let k = c.touched * c.touched / (c.s * c.s * c.baited * c.lambda * c.lambda);
    let q = if mem2 { 1.0 / (1.0 - p) } else { 1.0 };
    let v33 = if mem2 {
        p * (1.0 - p) / (c.lt * c.lnt)
    } else {
        p * (1.0 - p) * c.lambda / (c.lt * c.lnt * c.lnt)
    };
    Ok(CovarianceMatrix {
        labels: mem_labels(if mem2 { "p" } else { "p_nontarget" }),
        values: sym3(
            front * (k * c.lt / c.lnt + q),
            front * (k - q),
            front * (k * c.lnt / c.lt + q),
            front * v33,
        ),
        source: CovarianceSource::ClosedFormMain,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            level: 0.95,
            seed: 0,
            fit: FitOptions::default(),
        }
    }
}

/// One bootstrap refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateEstimate {
    pub index: usize,
    pub lambda_target: f64,
    pub lambda_nontarget: Option<f64>,
    pub p_target: Option<f64>,
    pub p_nontarget: Option<f64>,
}

/// Percentile summary of one parameter over the usable replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub estimate: f64,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    /// `sd / mean`; `None` when the mean is zero.
    pub cv: Option<f64>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub method: Method,
    pub level: f64,
    pub seed: u64,
    pub replicates_requested: usize,
    /// Replicates whose refit failed on degenerate counts; excluded from the summaries.
    pub degenerate: usize,
    pub lambda_target: ParameterSummary,
    pub others: Vec<ParameterSummary>,
    pub replicates: Vec<ReplicateEstimate>,
}

impl BootstrapSummary {
    pub fn cv(&self) -> Option<f64> {
        self.lambda_target.cv
    }

    /// Covariance of `(λ_T, λ_NT)` across usable replicates, when both are present.
    pub fn covariance(&self) -> Option<CovarianceMatrix> {
        let pairs: Vec<(f64, f64)> = self
            .replicates
            .iter()
            .filter_map(|r| r.lambda_nontarget.map(|nt| (r.lambda_target, nt)))
            .collect();
        if pairs.len() < 2 {
            return None;
        }
        let n = pairs.len() as f64;
        let (ma, mb) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
        let (mut saa, mut sab, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in &pairs {
            saa += (x - ma) * (x - ma);
            sab += (x - ma) * (y - mb);
            sbb += (y - mb) * (y - mb);
        }
        let d = n - 1.0;
        Some(CovarianceMatrix {
            labels: vec!["lambda_target".into(), "lambda_nontarget".into()],
            values: vec![vec![saa / d, sab / d], vec![sab / d, sbb / d]],
            source: CovarianceSource::Bootstrap,
        })
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.iter().all(|v| *v == values[0]) {
        return (values[0], 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn summarize(name: &str, estimate: f64, values: &[f64], level: f64) -> ParameterSummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mean, sd) = mean_sd(values);
    let tail = (1.0 - level) / 2.0;
    ParameterSummary {
        name: name.to_string(),
        estimate,
        mean,
        median: quantile_sorted(&sorted, 0.5),
        sd,
        cv: (mean != 0.0).then(|| sd / mean),
        lower: quantile_sorted(&sorted, tail),
        upper: quantile_sorted(&sorted, 1.0 - tail),
    }
}

fn check_degenerate_share(degenerate: usize, total: usize) -> Result<(), EstimateError> {
    if 2 * degenerate > total {
        return Err(EstimateError::Numerical(format!(
            "{degenerate} of {total} bootstrap replicates were degenerate"
        )));
    }
    Ok(())
}

/// Nonparametric bootstrap over sets: each replicate draws L sets with replacement
/// and refits `method`. Replicate `r` uses the stream keyed by `(seed, r)`.
pub fn bootstrap(dataset: &Dataset, method: Method, config: &BootstrapConfig) -> Result<BootstrapSummary, EstimateError> {
    if dataset.len() < 2 {
        return Err(EstimateError::TooFewSets { needed: 2, got: dataset.len() });
    }
    if config.replicates < 100 {
        return Err(EstimateError::Domain(format!(
            "at least 100 bootstrap replicates required, got {}",
            config.replicates
        )));
    }
    bootstrap_unchecked(dataset, method, config)
}

pub(crate) fn bootstrap_unchecked(
    dataset: &Dataset,
    method: Method,
    config: &BootstrapConfig,
) -> Result<BootstrapSummary, EstimateError> {
    if !(0.0..1.0).contains(&config.level) {
        return Err(EstimateError::Domain(format!("level {} outside [0, 1)", config.level)));
    }
    let point = fit_method(dataset, method, &config.fit)?;
    let records = dataset.records();
    let l = records.len();
    let outcomes: Vec<Result<Option<EstimateResult>, EstimateError>> = map_indices(config.replicates, |r| {
        use rand::Rng;
        let mut rng = rng_for(&[config.seed, r as u64]);
        let sample: Vec<_> = (0..l).map(|_| records[rng.random_range(0..l)].clone()).collect();
        match fit_method(&Dataset::from_trusted(sample), method, &config.fit) {
            Ok(est) => Ok(Some(est)),
            Err(e) if e.is_degenerate() => Ok(None),
            Err(e) => Err(e),
        }
    });
    let mut replicates = Vec::with_capacity(config.replicates);
    let mut degenerate = 0;
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome? {
            Some(est) => replicates.push(ReplicateEstimate {
                index,
                lambda_target: est.lambda_target,
                lambda_nontarget: est.lambda_nontarget,
                p_target: est.p_target,
                p_nontarget: est.p_nontarget,
            }),
            None => degenerate += 1,
        }
    }
    check_degenerate_share(degenerate, config.replicates)?;
    let lt: Vec<f64> = replicates.iter().map(|r| r.lambda_target).collect();
    let mut others = Vec::new();
    let columns: [(&str, Option<f64>, fn(&ReplicateEstimate) -> Option<f64>); 3] = [
        ("lambda_nontarget", point.lambda_nontarget, |r| r.lambda_nontarget),
        ("p_target", point.p_target, |r| r.p_target),
        ("p_nontarget", point.p_nontarget, |r| r.p_nontarget),
    ];
    for (name, estimate, get) in columns {
        let values: Vec<f64> = replicates.iter().filter_map(get).collect();
        if let Some(estimate) = estimate {
            if !values.is_empty() {
                others.push(summarize(name, estimate, &values, config.level));
            }
        }
    }
    Ok(BootstrapSummary {
        method,
        level: config.level,
        seed: config.seed,
        replicates_requested: config.replicates,
        degenerate,
        lambda_target: summarize("lambda_target", point.lambda_target, &lt, config.level),
        others,
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SetRecord;

    #[test]
    fn zero_escape_gives_zero_p_variance() {
        let c = asymptotic_cov_mem1(5e-4, 5e-4, 0.0, 4400.0, 120.0).unwrap();
        assert_eq!(c.get(2, 2), 0.0);
        assert_eq!(c.get(0, 2), 0.0);
    }

    #[test]
    fn inverse_scaling_in_hooks() {
        let a = asymptotic_cov_mem2(5e-4, 1e-3, 0.2, 4400.0, 120.0).unwrap();
        let b = asymptotic_cov_mem2(5e-4, 1e-3, 0.2, 8800.0, 120.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.get(i, j) - 2.0 * b.get(i, j)).abs() <= 1e-15 * a.get(i, j).abs());
            }
        }
    }

    #[test]
    fn mem2_at_zero_escape_equals_mem1() {
        let a = asymptotic_cov_mem1(2e-4, 7e-4, 0.0, 1000.0, 120.0).unwrap();
        let b = asymptotic_cov_mem2(2e-4, 7e-4, 0.0, 1000.0, 120.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(a.get(i, j), b.get(i, j));
            }
        }
    }

    #[test]
    fn rejects_zero_rates() {
        assert!(asymptotic_cov_mem1(0.0, 1e-3, 0.1, 100.0, 120.0).is_err());
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.25), 2.0);
        assert_eq!(quantile_sorted(&v, 0.1), 1.4);
    }

    #[test]
    fn single_set_bootstrap_has_zero_width() {
        let ds = Dataset::new(vec![SetRecord::new("a", 100, 50, 25, 20, 5, 0, 1.0).unwrap()]).unwrap();
        let cfg = BootstrapConfig { replicates: 50, ..Default::default() };
        let s = bootstrap_unchecked(&ds, Method::Mem1, &cfg).unwrap();
        assert_eq!(s.lambda_target.lower, s.lambda_target.upper);
        assert_eq!(s.lambda_target.sd, 0.0);
        assert!(bootstrap(&ds, Method::Mem1, &cfg).is_err());
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let ds = Dataset::new(vec![
            SetRecord::new("a", 100, 50, 25, 20, 5, 0, 1.0).unwrap(),
            SetRecord::new("b", 100, 40, 30, 20, 10, 0, 1.0).unwrap(),
            SetRecord::new("c", 100, 55, 15, 25, 5, 0, 1.0).unwrap(),
        ])
        .unwrap();
        let cfg = BootstrapConfig { replicates: 200, seed: 11, ..Default::default() };
        let a = bootstrap(&ds, Method::Mem2, &cfg).unwrap();
        let b = bootstrap(&ds, Method::Mem2, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.lambda_target.lower <= a.lambda_target.median && a.lambda_target.median <= a.lambda_target.upper);
    }

    #[test]
    fn degenerate_replicates_are_counted() {
        let ds = Dataset::new(vec![
            SetRecord::new("a", 10, 10, 0, 0, 0, 0, 1.0).unwrap(),
            SetRecord::new("b", 10, 10, 0, 0, 0, 0, 1.0).unwrap(),
            SetRecord::new("c", 10, 9, 1, 0, 0, 0, 1.0).unwrap(),
        ])
        .unwrap();
        let cfg = BootstrapConfig { replicates: 200, ..Default::default() };
        let s = bootstrap(&ds, Method::Mem1, &cfg).unwrap();
        // (2/3)^3 of the resamples miss the only touched set.
        assert!(s.degenerate > 30 && s.degenerate < 90, "{}", s.degenerate);
        assert_eq!(s.replicates.len() + s.degenerate, 200);
    }

    #[test]
    fn majority_degenerate_is_an_error() {
        assert!(check_degenerate_share(100, 200).is_ok());
        assert!(matches!(check_degenerate_share(101, 200), Err(EstimateError::Numerical(_))));
    }
}
