//! Closed-form abundance indices and model expectations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PooledCounts};
use crate::error::{DataError, EstimateError};
use crate::likelihood::{
    sem_profile_loglik, sem_rss, MemLikelihood, MemParams, RegularParams, SemVariant,
};
use crate::numeric::FitDiagnostics;
use crate::uncertainty::{asymptotic_cov_mem1, asymptotic_cov_mem2, CovarianceMatrix};

/// Number of free parameters of the identifiable MEM (λ, α, β).
pub const MEM_PARAMETERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Cpue,
    Hovgard,
    Mem1,
    Mem2,
    MemRegular,
    Sem1,
    Sem2,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Cpue,
        Method::Hovgard,
        Method::Mem1,
        Method::Mem2,
        Method::MemRegular,
        Method::Sem1,
        Method::Sem2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cpue => "CPUE",
            Method::Hovgard => "HOVGARD",
            Method::Mem1 => "MEM1",
            Method::Mem2 => "MEM2",
            Method::MemRegular => "MEM_REGULAR",
            Method::Sem1 => "SEM1",
            Method::Sem2 => "SEM2",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    /// Case-insensitive; `SEM` is accepted for `SEM1` since both share λ̂_T.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.trim().to_ascii_uppercase().replace('-', "_");
        match up.as_str() {
            "SEM" => Ok(Method::Sem1),
            "REGULAR" => Ok(Method::MemRegular),
            _ => Method::ALL
                .into_iter()
                .find(|m| m.as_str() == up)
                .ok_or_else(|| format!("unknown method `{s}`")),
        }
    }
}

/// How an estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitPath {
    ClosedForm,
    Numeric,
}

/// A fitted index with everything the method produces.
///
/// Rates are per hook and minute. For `HOVGARD` the index is the total pressure λ.
/// For `MEM_REGULAR`, `lambda_target = αλ` and `lambda_nontarget = (1 - α)λ`, the
/// rates MEM1 attaches to the same fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub method: Method,
    pub path: FitPath,
    pub lambda_target: f64,
    pub lambda_nontarget: Option<f64>,
    pub lambda_total: Option<f64>,
    pub p_target: Option<f64>,
    pub p_nontarget: Option<f64>,
    pub lambda_empty: Option<f64>,
    pub sigma2: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub loglik_max: Option<f64>,
    pub aic: Option<f64>,
    pub covariance: Option<CovarianceMatrix>,
    pub n_sets: usize,
    pub n_hooks: u64,
    pub soak_time: f64,
    pub diagnostics: Option<FitDiagnostics>,
}

impl EstimateResult {
    fn bare(method: Method, path: FitPath, lambda_target: f64, n_sets: usize, n_hooks: u64, soak: f64) -> Self {
        Self {
            method,
            path,
            lambda_target,
            lambda_nontarget: None,
            lambda_total: None,
            p_target: None,
            p_nontarget: None,
            lambda_empty: None,
            sigma2: None,
            alpha: None,
            beta: None,
            loglik_max: None,
            aic: None,
            covariance: None,
            n_sets,
            n_hooks,
            soak_time: soak,
            diagnostics: None,
        }
    }

    pub(crate) fn new_numeric(method: Method, lambda_target: f64, n_sets: usize, n_hooks: u64, soak: f64) -> Self {
        Self::bare(method, FitPath::Numeric, lambda_target, n_sets, n_hooks, soak)
    }

    /// True when the fit raised a degeneracy warning.
    pub fn is_degenerate(&self) -> bool {
        self.diagnostics.as_ref().is_some_and(|d| d.degenerate)
    }

    /// Flat `key=value` lines; absent values are omitted.
    pub fn to_key_value(&self) -> String {
        let mut out = Vec::new();
        out.push(format!("method={}", self.method));
        out.push(format!(
            "path={}",
            match self.path {
                FitPath::ClosedForm => "closed_form",
                FitPath::Numeric => "numeric",
            }
        ));
        out.push(format!("lambda_target={:e}", self.lambda_target));
        let optional = [
            ("lambda_nontarget", self.lambda_nontarget),
            ("lambda_total", self.lambda_total),
            ("p_target", self.p_target),
            ("p_nontarget", self.p_nontarget),
            ("lambda_empty", self.lambda_empty),
            ("sigma2", self.sigma2),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("loglik_max", self.loglik_max),
            ("aic", self.aic),
        ];
        for (k, v) in optional {
            if let Some(v) = v {
                out.push(format!("{k}={v:e}"));
            }
        }
        out.push(format!("n_sets={}", self.n_sets));
        out.push(format!("n_hooks={}", self.n_hooks));
        out.push(format!("soak_minutes={}", self.soak_time));
        if let Some(c) = &self.covariance {
            for (i, a) in c.labels.iter().enumerate() {
                for (j, b) in c.labels.iter().enumerate().skip(i) {
                    out.push(format!("cov[{a},{b}]={:e}", c.values[i][j]));
                }
            }
        }
        if let Some(d) = &self.diagnostics {
            out.push(format!("converged={}", d.converged));
            out.push(format!("degenerate={}", d.degenerate));
            out.push(format!("iterations={}", d.iterations));
            out.push(format!("restart_spread={:e}", d.restart_spread));
        }
        out.join("\n")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimate serializes")
    }
}

/// Generalized CPUE: `Σ N_T / Σ (S N)` over sets, with unknown hooks removed from N.
pub fn cpue(dataset: &Dataset) -> Result<f64, EstimateError> {
    if dataset.is_empty() {
        return Err(DataError::Empty.into());
    }
    let (mut catch, mut effort) = (0.0, 0.0);
    for r in dataset.records() {
        catch += r.n_target as f64;
        effort += r.soak_time * r.effective_hooks() as f64;
    }
    if effort <= 0.0 {
        return Err(EstimateError::Domain("no effective hooks".into()));
    }
    Ok(catch / effort)
}

fn cpue_result(dataset: &Dataset) -> Result<EstimateResult, EstimateError> {
    let v = cpue(dataset)?;
    let mut r = EstimateResult::bare(
        Method::Cpue,
        FitPath::ClosedForm,
        v,
        dataset.len(),
        dataset.total_effective_hooks(),
        dataset.mean_soak().unwrap_or(0.0),
    );
    r.lambda_total = None;
    Ok(r)
}

/// Hovgård's total hook pressure `log(N / N_B) / S`.
pub fn hovgard_lambda(pooled: &PooledCounts) -> Result<f64, EstimateError> {
    let n = pooled.n_hooks_total;
    let nb = pooled.n_baited_total;
    if n == 0 {
        return Err(DataError::Empty.into());
    }
    if nb == 0 {
        return Err(EstimateError::Saturated);
    }
    Ok((n as f64 / nb as f64).ln() / pooled.soak_time)
}

/// λ̂ and the unbaited-hook count, rejecting the degenerate `N_B ∈ {0, N}`.
fn pressure(pooled: &PooledCounts) -> Result<(f64, f64), EstimateError> {
    let lambda = hovgard_lambda(pooled)?;
    let unbaited = pooled.n_unbaited();
    if unbaited == 0 {
        return Err(EstimateError::Untouched);
    }
    Ok((lambda, unbaited as f64))
}

fn pooled_result(method: Method, pooled: &PooledCounts, lambda_target: f64) -> EstimateResult {
    EstimateResult::bare(
        method,
        FitPath::ClosedForm,
        lambda_target,
        pooled.n_sets,
        pooled.n_hooks_total,
        pooled.soak_time,
    )
}

fn attach_loglik(result: &mut EstimateResult, pooled: &PooledCounts, regular: RegularParams) {
    let ll = MemLikelihood::from_pooled(pooled).eval_regular(&regular);
    if ll.is_finite() {
        result.loglik_max = Some(ll);
        result.aic = Some(aic(ll, MEM_PARAMETERS));
    }
}

pub fn aic(loglik: f64, k: usize) -> f64 {
    2.0 * k as f64 - 2.0 * loglik
}

pub fn hovgard(pooled: &PooledCounts) -> Result<EstimateResult, EstimateError> {
    let lambda = hovgard_lambda(pooled)?;
    let mut r = pooled_result(Method::Hovgard, pooled, lambda);
    r.lambda_total = Some(lambda);
    Ok(r)
}

/// MEM1 (`p_T = 0`) maximum likelihood estimates on pooled counts.
pub fn fit_mem1(pooled: &PooledCounts) -> Result<EstimateResult, EstimateError> {
    let (lambda, u) = pressure(pooled)?;
    let nt = pooled.n_target_total as f64;
    let nnt = pooled.n_nontarget_total as f64;
    let ne = pooled.n_empty_total as f64;
    let lt = nt / u * lambda;
    let lnt = (nnt + ne) / u * lambda;
    let p_nt = (ne + nnt > 0.0).then(|| ne / (ne + nnt));

    let mut r = pooled_result(Method::Mem1, pooled, lt);
    r.lambda_nontarget = Some(lnt);
    r.lambda_total = Some(lambda);
    r.p_target = Some(0.0);
    r.p_nontarget = p_nt;
    r.alpha = Some(nt / u);
    r.beta = Some(nnt / u);
    attach_loglik(&mut r, pooled, regular_from_counts(lambda, pooled));
    if let Some(p) = p_nt {
        r.covariance =
            asymptotic_cov_mem1(lt, lnt, p, pooled.n_hooks_total as f64, pooled.soak_time).ok();
    }
    Ok(r)
}

/// MEM2 (`p_T = p_NT = p`) maximum likelihood estimates on pooled counts.
pub fn fit_mem2(pooled: &PooledCounts) -> Result<EstimateResult, EstimateError> {
    let (lambda, u) = pressure(pooled)?;
    let nt = pooled.n_target_total as f64;
    let nnt = pooled.n_nontarget_total as f64;
    let ne = pooled.n_empty_total as f64;
    if nt + nnt == 0.0 {
        return Err(EstimateError::NoCatch);
    }
    let lt = nt / (nt + nnt) * lambda;
    let lnt = nnt / (nt + nnt) * lambda;
    let p = ne / u;

    let mut r = pooled_result(Method::Mem2, pooled, lt);
    r.lambda_nontarget = Some(lnt);
    r.lambda_total = Some(lambda);
    r.p_target = Some(p);
    r.p_nontarget = Some(p);
    r.alpha = Some(nt / u);
    r.beta = Some(nnt / u);
    attach_loglik(&mut r, pooled, regular_from_counts(lambda, pooled));
    r.covariance =
        asymptotic_cov_mem2(lt, lnt, p, pooled.n_hooks_total as f64, pooled.soak_time).ok();
    Ok(r)
}

fn regular_from_counts(lambda: f64, pooled: &PooledCounts) -> RegularParams {
    let u = pooled.n_unbaited() as f64;
    let alpha = pooled.n_target_total as f64 / u;
    let beta = pooled.n_nontarget_total as f64 / u;
    RegularParams {
        lambda,
        alpha,
        beta,
        gamma: pooled.n_empty_total as f64 / u,
    }
}

/// Regular-form `(λ, α, β)` maximum likelihood estimates on pooled counts.
pub fn fit_regular(pooled: &PooledCounts) -> Result<EstimateResult, EstimateError> {
    let (lambda, u) = pressure(pooled)?;
    let reg = regular_from_counts(lambda, pooled);
    let mut r = pooled_result(Method::MemRegular, pooled, reg.alpha * lambda);
    r.lambda_nontarget = Some((1.0 - reg.alpha) * lambda);
    r.lambda_total = Some(lambda);
    r.alpha = Some(reg.alpha);
    r.beta = Some(pooled.n_nontarget_total as f64 / u);
    attach_loglik(&mut r, pooled, reg);
    Ok(r)
}

/// Closed-form SEM estimates. All sets must share soak time and effective hook count.
/// σ² (and with it the log-likelihood and AIC) needs at least two sets and non-zero
/// residuals.
pub fn fit_sem_closed(dataset: &Dataset, variant: SemVariant) -> Result<EstimateResult, EstimateError> {
    let records = dataset.records();
    let first = records.first().ok_or(DataError::Empty)?;
    if records.iter().any(|r| r.soak_time != first.soak_time) {
        return Err(EstimateError::UnequalEffort { what: "soak times" });
    }
    if records.iter().any(|r| r.effective_hooks() != first.effective_hooks()) {
        return Err(EstimateError::UnequalEffort { what: "hook counts" });
    }
    let pooled = crate::data::pool(dataset, 0.0)?;
    let (lambda, u) = pressure(&pooled)?;
    let nt = pooled.n_target_total as f64;
    let nnt = pooled.n_nontarget_total as f64;
    let ne = pooled.n_empty_total as f64;
    let lt = nt / u * lambda;
    let (method, rates) = match variant {
        SemVariant::Sem1 => (Method::Sem1, vec![lt, (nnt + ne) / u * lambda]),
        SemVariant::Sem2 => (Method::Sem2, vec![lt, nnt / u * lambda, ne / u * lambda]),
    };
    let mut r = pooled_result(method, &pooled, lt);
    r.lambda_nontarget = Some(rates[1]);
    r.lambda_empty = rates.get(2).copied();
    r.lambda_total = Some(lambda);
    if dataset.len() >= 2 {
        let rss = sem_rss(&rates, dataset, variant);
        let m = (variant.groups() * dataset.len()) as f64;
        r.sigma2 = Some(rss / m);
        if let Some(ll) = sem_profile_loglik(rss, dataset.len(), variant) {
            r.loglik_max = Some(ll);
            r.aic = Some(aic(ll, sem_parameters(variant)));
        }
    }
    Ok(r)
}

/// Free parameters of a SEM variant, σ² included.
pub fn sem_parameters(variant: SemVariant) -> usize {
    variant.groups() + 1
}

/// Closed-form estimate of `method` on a dataset with (near-)constant soak time.
pub fn fit_closed_form(
    dataset: &Dataset,
    method: Method,
    soak_tolerance: f64,
) -> Result<EstimateResult, EstimateError> {
    match method {
        Method::Cpue => cpue_result(dataset),
        Method::Sem1 => fit_sem_closed(dataset, SemVariant::Sem1),
        Method::Sem2 => fit_sem_closed(dataset, SemVariant::Sem2),
        _ => {
            let pooled = crate::data::pool(dataset, soak_tolerance)?;
            let mut r = match method {
                Method::Hovgard => return hovgard(&pooled),
                Method::Mem1 => fit_mem1(&pooled)?,
                Method::Mem2 => fit_mem2(&pooled)?,
                Method::MemRegular => fit_regular(&pooled)?,
                _ => unreachable!(),
            };
            // Report the set-level likelihood, which differs from the pooled one by a constant.
            if let (Some(_), Some(reg)) = (r.loglik_max, regular_of(&r)) {
                let set_level = MemLikelihood::new(dataset).eval_regular(&reg);
                if set_level.is_finite() {
                    r.loglik_max = Some(set_level);
                    r.aic = Some(aic(set_level, MEM_PARAMETERS));
                }
            }
            Ok(r)
        }
    }
}

fn regular_of(r: &EstimateResult) -> Option<RegularParams> {
    let lambda = r.lambda_total?;
    let alpha = r.alpha?;
    let beta = r.beta?;
    Some(RegularParams {
        lambda,
        alpha,
        beta,
        gamma: (1.0 - alpha - beta).max(0.0),
    })
}

/// Expected counts `(N_B, N_T, N_NT, N_E)` for `n_hooks` hooks soaked `soak` minutes.
pub fn expected_counts(
    lambda_t: f64,
    lambda_nt: f64,
    p_t: f64,
    p_nt: f64,
    n_hooks: f64,
    soak: f64,
) -> Result<[f64; 4], EstimateError> {
    let reg = MemParams::Full {
        lambda_target: lambda_t,
        lambda_nontarget: lambda_nt,
        p_target: p_t,
        p_nontarget: p_nt,
    }
    .to_regular()?;
    Ok(reg.cells(soak).map(|c| c * n_hooks))
}

/// Expected CPUE `λ_T (1 - e^{-λS}) / (λS)`, equal to `λ_T` in the `λ → 0` limit.
pub fn expected_cpue(lambda_t: f64, lambda_total: f64, soak: f64) -> f64 {
    if lambda_total == 0.0 {
        return lambda_t;
    }
    let x = lambda_total * soak;
    lambda_t * (-(-x).exp_m1()) / x
}

/// Expected target catch over `n_sets` sets of `n_hooks` hooks, ignoring escapes.
pub fn expected_target_catch(lambda_t: f64, lambda_nt: f64, n_hooks: f64, n_sets: f64, soak: f64) -> f64 {
    let lambda = lambda_t + lambda_nt;
    if lambda == 0.0 {
        return 0.0;
    }
    n_sets * n_hooks * lambda_t / lambda * (-(-lambda * soak).exp_m1())
}
