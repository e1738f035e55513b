//! Numerical maximum likelihood for sets with differing soak times or hook counts.
//!
//! Parameters are optimized in unconstrained coordinates: logs for rates, logits for
//! probabilities and additive log-ratios `(log α/γ, log β/γ)` for the regular form.
//! Coordinates are boxed to keep the simplex away from overflow; a coordinate whose
//! optimum sits on the box is snapped to the exact boundary value (rate 0, p 0 or 1).

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{pool, Dataset};
use crate::error::{DataError, EstimateError};
use crate::fd;
use crate::indices::{
    aic, fit_closed_form, sem_parameters, EstimateResult, Method, MEM_PARAMETERS,
};
use crate::likelihood::{sem_observed, sem_profile_loglik, MemLikelihood, RegularParams, SemVariant};
use crate::optim::{minimize, Bounds, NelderMeadConfig};
use crate::rng::rng_for;
use crate::uncertainty::{CovarianceMatrix, CovarianceSource};

const LOG_RATE_BELOW: f64 = 30.0;
const LOG_RATE_ABOVE: f64 = 12.0;
const LOGIT_BOUND: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NumericModel {
    Mem1,
    Mem2,
    MemRegular,
    Sem1,
    Sem2,
}

impl NumericModel {
    pub fn method(self) -> Method {
        match self {
            NumericModel::Mem1 => Method::Mem1,
            NumericModel::Mem2 => Method::Mem2,
            NumericModel::MemRegular => Method::MemRegular,
            NumericModel::Sem1 => Method::Sem1,
            NumericModel::Sem2 => Method::Sem2,
        }
    }

    pub fn from_method(method: Method) -> Option<Self> {
        match method {
            Method::Mem1 => Some(NumericModel::Mem1),
            Method::Mem2 => Some(NumericModel::Mem2),
            Method::MemRegular => Some(NumericModel::MemRegular),
            Method::Sem1 => Some(NumericModel::Sem1),
            Method::Sem2 => Some(NumericModel::Sem2),
            Method::Cpue | Method::Hovgard => None,
        }
    }

    fn sem_variant(self) -> Option<SemVariant> {
        match self {
            NumericModel::Sem1 => Some(SemVariant::Sem1),
            NumericModel::Sem2 => Some(SemVariant::Sem2),
            _ => None,
        }
    }
}

/// Where the first optimizer start comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Closed-form estimate on the pooled counts at the mean soak time.
    #[default]
    ClosedForm,
    /// Catch-per-effort rates with uninformative splits.
    Cpue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Simplex iterations per restart.
    pub max_iterations: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub restarts: usize,
    pub init: InitStrategy,
    /// Standard deviation of the start jitter for restarts after the first.
    pub jitter_sd: f64,
    pub seed: u64,
    /// Log-likelihood spread across restarts above which the fit is flagged.
    pub restart_tolerance: f64,
    /// Hessian condition number above which the fit is flagged.
    pub max_condition: f64,
    /// Flag the fit when the standard error of log λ_T exceeds this.
    pub max_relative_se: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            ftol: 1e-10,
            xtol: 1e-8,
            restarts: 3,
            init: InitStrategy::ClosedForm,
            jitter_sd: 0.5,
            seed: 0,
            restart_tolerance: 1e-6,
            max_condition: 1e10,
            max_relative_se: 0.5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), EstimateError> {
        let bad = |what: &str| Err(EstimateError::Domain(what.to_string()));
        if !(self.ftol > 0.0 && self.xtol > 0.0) {
            return bad("optimizer tolerances must be positive");
        }
        if self.restarts == 0 {
            return bad("at least one optimizer start is required");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if !(self.jitter_sd >= 0.0) {
            return bad("jitter_sd must be non-negative");
        }
        Ok(())
    }

    fn nelder_mead(&self) -> NelderMeadConfig {
        NelderMeadConfig {
            max_iterations: self.max_iterations,
            ftol: self.ftol,
            xtol: self.xtol,
            ..NelderMeadConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneracyReason {
    /// Restarts ended at different log-likelihoods.
    RestartSpread,
    /// Curvature at the optimum is not positive definite or is ill-conditioned.
    SingularHessian,
    /// The likelihood peak is too flat in the index direction.
    WeakPeak,
    /// The target rate sits on its lower bound.
    IndexAtBoundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    /// `None` when the log-likelihood is unbounded (SEM with vanishing residuals).
    pub best_loglik: Option<f64>,
    pub restart_spread: f64,
    pub degenerate: bool,
    pub reasons: Vec<DegeneracyReason>,
    pub restarts: usize,
    /// Parameters fixed on their boundary.
    pub pinned: Vec<String>,
    pub hessian_condition: Option<f64>,
    /// Standard error of log λ_T.
    pub index_log_se: Option<f64>,
}

/// Unconstrained problem in transformed coordinates.
struct Problem {
    model: NumericModel,
    mem: Option<MemLikelihood>,
    sem: Option<SemData>,
    bounds: Bounds,
    log_rate_ref: f64,
    names: &'static [&'static str],
}

struct SemData {
    sets: Vec<(f64, f64, Vec<f64>)>,
    variant: SemVariant,
}

impl SemData {
    fn rss(&self, rates: &[f64]) -> f64 {
        let lambda: f64 = rates.iter().sum();
        self.sets
            .iter()
            .map(|(n, s, obs)| {
                let touched = if lambda > 0.0 { -(-lambda * s).exp_m1() / lambda } else { *s };
                obs.iter()
                    .zip(rates)
                    .map(|(c, r)| {
                        let d = c - r * n * touched;
                        d * d
                    })
                    .sum::<f64>()
            })
            .sum()
    }
}

fn logistic(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Softmax of `(a, b, 0)`.
fn alr_inverse(a: f64, b: f64) -> (f64, f64, f64) {
    let m = a.max(b).max(0.0);
    let (ea, eb, ec) = ((a - m).exp(), (b - m).exp(), (-m).exp());
    let s = ea + eb + ec;
    (ea / s, eb / s, ec / s)
}

impl Problem {
    fn new(dataset: &Dataset, model: NumericModel) -> Result<Self, EstimateError> {
        if dataset.is_empty() {
            return Err(DataError::Empty.into());
        }
        let soak = dataset.mean_soak().unwrap();
        let n = dataset.total_effective_hooks() as f64;
        if n == 0.0 {
            return Err(EstimateError::Domain("no effective hooks".into()));
        }
        let nb: f64 = dataset.records().iter().map(|r| r.n_baited as f64).sum();
        let lambda_ref = ((n + 1.0) / (nb + 0.5)).ln().max(1.0 / (n + 1.0)) / soak;
        let log_rate_ref = lambda_ref.ln();
        let rate_bounds = (log_rate_ref - LOG_RATE_BELOW, log_rate_ref + LOG_RATE_ABOVE);
        let logit_bounds = (-LOGIT_BOUND, LOGIT_BOUND);
        let (kinds, names): (Vec<(f64, f64)>, &'static [&'static str]) = match model {
            NumericModel::Mem1 => (
                vec![rate_bounds, rate_bounds, logit_bounds],
                &["lambda_target", "lambda_nontarget", "p_nontarget"],
            ),
            NumericModel::Mem2 => (
                vec![rate_bounds, rate_bounds, logit_bounds],
                &["lambda_target", "lambda_nontarget", "p"],
            ),
            NumericModel::MemRegular => (
                vec![rate_bounds, logit_bounds, logit_bounds],
                &["lambda", "alpha", "beta"],
            ),
            NumericModel::Sem1 => (vec![rate_bounds; 2], &["lambda_target", "lambda_nontarget"]),
            NumericModel::Sem2 => (
                vec![rate_bounds; 3],
                &["lambda_target", "lambda_nontarget", "lambda_empty"],
            ),
        };
        let bounds = Bounds {
            lower: kinds.iter().map(|k| k.0).collect(),
            upper: kinds.iter().map(|k| k.1).collect(),
        };
        let (mem, sem) = match model.sem_variant() {
            None => (Some(MemLikelihood::new(dataset)), None),
            Some(variant) => {
                if dataset.len() < 2 {
                    return Err(EstimateError::TooFewSets { needed: 2, got: dataset.len() });
                }
                let sets = dataset
                    .records()
                    .iter()
                    .map(|r| {
                        (
                            r.effective_hooks() as f64,
                            r.soak_time,
                            sem_observed(r.outcome_counts(), variant),
                        )
                    })
                    .collect();
                (None, Some(SemData { sets, variant }))
            }
        };
        Ok(Self {
            model,
            mem,
            sem,
            bounds,
            log_rate_ref,
            names,
        })
    }

    /// True when λ_T (αλ for the regular form) sits on its lower bound.
    fn index_pinned(&self, y: &[f64], pinned: &[bool]) -> bool {
        let at_floor = |i: usize| pinned[i] && y[i] <= self.bounds.lower[i];
        match self.model {
            NumericModel::MemRegular => at_floor(0) || at_floor(1),
            _ => at_floor(0),
        }
    }

    /// Natural parameters from transformed coordinates; pinned coordinates map to
    /// their exact boundary values.
    fn decode(&self, y: &[f64], pinned: &[bool]) -> Vec<f64> {
        let rate = |i: usize| {
            if pinned[i] && y[i] <= self.bounds.lower[i] {
                0.0
            } else {
                y[i].exp()
            }
        };
        let prob = |i: usize| {
            if pinned[i] {
                if y[i] <= self.bounds.lower[i] {
                    0.0
                } else {
                    1.0
                }
            } else {
                logistic(y[i])
            }
        };
        match self.model {
            NumericModel::Mem1 | NumericModel::Mem2 => vec![rate(0), rate(1), prob(2)],
            NumericModel::MemRegular => {
                let (mut a, mut b, mut g) = alr_inverse(y[1], y[2]);
                if pinned[1] && y[1] <= self.bounds.lower[1] {
                    a = 0.0;
                }
                if pinned[2] && y[2] <= self.bounds.lower[2] {
                    b = 0.0;
                }
                if (pinned[1] && y[1] >= self.bounds.upper[1]) || (pinned[2] && y[2] >= self.bounds.upper[2]) {
                    g = 0.0;
                }
                let s = a + b + g;
                vec![rate(0), a / s, b / s]
            }
            NumericModel::Sem1 => vec![rate(0), rate(1)],
            NumericModel::Sem2 => vec![rate(0), rate(1), rate(2)],
        }
    }

    fn regular(&self, theta: &[f64]) -> RegularParams {
        match self.model {
            NumericModel::Mem1 | NumericModel::Mem2 => {
                let (lt, lnt) = (theta[0], theta[1]);
                let (pt, pnt) = if self.model == NumericModel::Mem1 {
                    (0.0, theta[2])
                } else {
                    (theta[2], theta[2])
                };
                let lambda = lt + lnt;
                if lambda == 0.0 {
                    return RegularParams { lambda, alpha: 0.0, beta: 0.0, gamma: 1.0 };
                }
                RegularParams {
                    lambda,
                    alpha: lt * (1.0 - pt) / lambda,
                    beta: lnt * (1.0 - pnt) / lambda,
                    gamma: (lt * pt + lnt * pnt) / lambda,
                }
            }
            NumericModel::MemRegular => RegularParams {
                lambda: theta[0],
                alpha: theta[1],
                beta: theta[2],
                gamma: (1.0 - theta[1] - theta[2]).max(0.0),
            },
            _ => unreachable!("regular form of a SEM"),
        }
    }

    /// Objective to minimize: negative log-likelihood kernel (MEM) or RSS (SEM).
    fn objective_theta(&self, theta: &[f64]) -> f64 {
        match (&self.mem, &self.sem) {
            (Some(mem), _) => {
                let ll = mem.eval_regular(&self.regular(theta));
                if ll.is_finite() {
                    mem.constant() - ll
                } else {
                    f64::INFINITY
                }
            }
            (_, Some(sem)) => sem.rss(theta),
            _ => unreachable!(),
        }
    }

    fn objective(&self, y: &[f64], pinned: &[bool]) -> f64 {
        self.objective_theta(&self.decode(y, pinned))
    }

    /// Log-likelihood corresponding to an objective value.
    fn loglik(&self, f: f64) -> Option<f64> {
        match (&self.mem, &self.sem) {
            (Some(mem), _) => Some(mem.constant() - f).filter(|v| v.is_finite()),
            (_, Some(sem)) => sem_profile_loglik(f, sem.sets.len(), sem.variant),
            _ => unreachable!(),
        }
    }

    fn encode_start(&self, theta: &[f64]) -> Vec<f64> {
        let floor_rate = (self.log_rate_ref - 14.0).exp();
        let rate = |v: f64| v.max(floor_rate).ln();
        let prob = |p: f64| logit(p.clamp(1e-6, 1.0 - 1e-6));
        let mut y = match self.model {
            NumericModel::Mem1 | NumericModel::Mem2 => vec![rate(theta[0]), rate(theta[1]), prob(theta[2])],
            NumericModel::MemRegular => {
                let a = theta[1].max(1e-6);
                let b = theta[2].max(1e-6);
                let g = (1.0 - theta[1] - theta[2]).max(1e-6);
                vec![rate(theta[0]), (a / g).ln(), (b / g).ln()]
            }
            NumericModel::Sem1 | NumericModel::Sem2 => theta.iter().map(|&v| rate(v)).collect(),
        };
        self.bounds.project(&mut y);
        y
    }

    fn start_theta(&self, dataset: &Dataset, init: InitStrategy) -> Vec<f64> {
        if init == InitStrategy::ClosedForm {
            if let Some(t) = self.closed_form_start(dataset) {
                return t;
            }
        }
        self.cpue_start(dataset)
    }

    fn closed_form_start(&self, dataset: &Dataset) -> Option<Vec<f64>> {
        let pooled = pool(dataset, f64::INFINITY).ok()?;
        let r = match self.model {
            NumericModel::Mem1 => crate::indices::fit_mem1(&pooled),
            NumericModel::Mem2 => crate::indices::fit_mem2(&pooled),
            NumericModel::MemRegular => crate::indices::fit_regular(&pooled),
            NumericModel::Sem1 | NumericModel::Sem2 => crate::indices::fit_mem1(&pooled),
        }
        .ok()?;
        let lt = r.lambda_target;
        let lnt = r.lambda_nontarget?;
        Some(match self.model {
            NumericModel::Mem1 => vec![lt, lnt, r.p_nontarget.unwrap_or(0.0)],
            NumericModel::Mem2 => vec![lt, lnt, r.p_target.unwrap_or(0.0)],
            NumericModel::MemRegular => vec![r.lambda_total?, r.alpha?, r.beta?],
            NumericModel::Sem1 => vec![lt, lnt],
            NumericModel::Sem2 => {
                let u = pooled.n_unbaited() as f64;
                let lambda = r.lambda_total?;
                vec![
                    lt,
                    pooled.n_nontarget_total as f64 / u * lambda,
                    pooled.n_empty_total as f64 / u * lambda,
                ]
            }
        })
    }

    fn cpue_start(&self, dataset: &Dataset) -> Vec<f64> {
        let (mut t, mut nt, mut e, mut effort) = (0.0, 0.0, 0.0, 0.0);
        for r in dataset.records() {
            t += r.n_target as f64;
            nt += r.n_nontarget as f64;
            e += r.n_empty as f64;
            effort += r.soak_time * r.effective_hooks() as f64;
        }
        let (ct, cnt, ce) = (t / effort, nt / effort, e / effort);
        match self.model {
            NumericModel::Mem1 | NumericModel::Mem2 => vec![ct, cnt + ce, 0.5],
            NumericModel::MemRegular => vec![ct + cnt + ce, 1.0 / 3.0, 1.0 / 3.0],
            NumericModel::Sem1 => vec![ct, cnt + ce],
            NumericModel::Sem2 => vec![ct, cnt, ce],
        }
    }

    /// Marks coordinates whose optimum is on the box and moves them there.
    fn snap(&self, y: &mut [f64], f: &mut f64, pinned: &mut [bool]) {
        for i in 0..y.len() {
            for bound in [self.bounds.lower[i], self.bounds.upper[i]] {
                let mut trial = y.to_vec();
                trial[i] = bound;
                let mut trial_pins = pinned.to_vec();
                trial_pins[i] = true;
                let ft = self.objective(&trial, &trial_pins);
                if ft.is_finite() && ft <= *f + 1e-10 * (1.0 + f.abs()) {
                    y[i] = bound;
                    pinned[i] = true;
                    *f = ft.min(*f);
                    break;
                }
            }
        }
    }
}

/// Fits `model` by maximizing its likelihood over all sets, each with its own soak
/// time and hook count. Diagnostics are attached to the result.
pub fn fit_numeric(
    dataset: &Dataset,
    model: NumericModel,
    config: &OptimizerConfig,
) -> Result<EstimateResult, EstimateError> {
    config.validate()?;
    let problem = Problem::new(dataset, model)?;
    let dim = problem.bounds.lower.len();
    let no_pins = vec![false; dim];
    let start0 = problem.encode_start(&problem.start_theta(dataset, config.init));
    let nm = config.nelder_mead();
    let jitter = Normal::new(0.0, config.jitter_sd.max(f64::MIN_POSITIVE)).expect("finite sd");

    let mut runs = Vec::with_capacity(config.restarts);
    for k in 0..config.restarts {
        let mut start = start0.clone();
        if k > 0 {
            let mut rng = rng_for(&[config.seed, k as u64]);
            for v in start.iter_mut() {
                *v += jitter.sample(&mut rng);
            }
            problem.bounds.project(&mut start);
        }
        runs.push(minimize(|y| problem.objective(y, &no_pins), &start, &problem.bounds, &nm));
    }
    let best_idx = (0..runs.len())
        .min_by(|&a, &b| runs[a].f.total_cmp(&runs[b].f).then(a.cmp(&b)))
        .unwrap();
    if !runs[best_idx].f.is_finite() {
        return Err(EstimateError::Numerical(
            "no optimizer start gave a finite likelihood".into(),
        ));
    }
    let restart_spread = restart_spread(&problem, &runs.iter().map(|r| r.f).collect::<Vec<_>>());
    let iterations = runs.iter().map(|r| r.iterations).sum();
    let converged = runs[best_idx].converged;

    let mut y = runs[best_idx].x.clone();
    let mut f = runs[best_idx].f;
    let mut pinned = vec![false; dim];
    problem.snap(&mut y, &mut f, &mut pinned);
    let theta = problem.decode(&y, &pinned);

    let free: Vec<usize> = (0..dim).filter(|&i| !pinned[i]).collect();
    let curvature = curvature(&problem, &y, &pinned, &free, f);

    let mut reasons = Vec::new();
    if restart_spread > config.restart_tolerance {
        reasons.push(DegeneracyReason::RestartSpread);
    }
    let target_pinned = problem.index_pinned(&y, &pinned);
    let (hessian_condition, inverse) = match &curvature {
        Some(c) => (Some(c.condition), c.inverse.clone()),
        None => (None, None),
    };
    if !free.is_empty() && (inverse.is_none() || hessian_condition.is_none_or(|c| c > config.max_condition)) {
        reasons.push(DegeneracyReason::SingularHessian);
    }
    let index_log_se = if target_pinned {
        reasons.push(DegeneracyReason::IndexAtBoundary);
        None
    } else {
        inverse.as_ref().and_then(|inv| index_log_variance(&problem, &theta, &free, inv)).map(f64::sqrt)
    };
    if index_log_se.is_some_and(|se| se > config.max_relative_se) {
        reasons.push(DegeneracyReason::WeakPeak);
    }

    let loglik = problem.loglik(f);
    let diagnostics = FitDiagnostics {
        converged,
        iterations,
        best_loglik: loglik,
        restart_spread,
        degenerate: !reasons.is_empty(),
        reasons,
        restarts: config.restarts,
        pinned: (0..dim).filter(|&i| pinned[i]).map(|i| problem.names[i].to_string()).collect(),
        hessian_condition,
        index_log_se,
    };

    let mut result = build_result(&problem, dataset, &theta, f, loglik);
    if let Some(inv) = &inverse {
        result.covariance = Some(natural_covariance(&problem, &theta, &free, inv));
    }
    result.diagnostics = Some(diagnostics);
    Ok(result)
}

fn restart_spread(problem: &Problem, fs: &[f64]) -> f64 {
    let finite: Vec<f64> = fs.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < fs.len() {
        return f64::INFINITY;
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match &problem.sem {
        None => hi - lo,
        Some(sem) => {
            // Spread in profile log-likelihood units.
            let m = (sem.variant.groups() * sem.sets.len()) as f64;
            if lo > 0.0 {
                0.5 * m * (hi / lo).ln()
            } else if hi == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        }
    }
}

struct Curvature {
    condition: f64,
    inverse: Option<DMatrix<f64>>,
}

/// Hessian of the negative log-likelihood over the free transformed coordinates.
fn curvature(problem: &Problem, y: &[f64], pinned: &[bool], free: &[usize], f: f64) -> Option<Curvature> {
    if free.is_empty() {
        return None;
    }
    let sub: Vec<f64> = free.iter().map(|&i| y[i]).collect();
    let eval = |z: &[f64]| {
        let mut full = y.to_vec();
        for (k, &i) in free.iter().enumerate() {
            full[i] = z[k];
        }
        problem.objective(&full, pinned)
    };
    let mut h = fd::hessian(eval, &sub, &fd::magnitude_scales(&sub, 1.0));
    if let Some(sem) = &problem.sem {
        if f <= 0.0 {
            return None;
        }
        let m = (sem.variant.groups() * sem.sets.len()) as f64;
        h *= m / (2.0 * f);
    }
    if h.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let eig = h.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    let inverse = h.cholesky().map(|c| c.inverse());
    Some(Curvature { condition, inverse })
}

/// Jacobian of the natural parameters with respect to the free transformed coordinates.
fn jacobian(problem: &Problem, theta: &[f64], free: &[usize]) -> DMatrix<f64> {
    let dim = problem.bounds.lower.len();
    let mut full = DMatrix::zeros(dim, dim);
    match problem.model {
        NumericModel::Mem1 | NumericModel::Mem2 => {
            full[(0, 0)] = theta[0];
            full[(1, 1)] = theta[1];
            full[(2, 2)] = theta[2] * (1.0 - theta[2]);
        }
        NumericModel::MemRegular => {
            let (l, a, b) = (theta[0], theta[1], theta[2]);
            full[(0, 0)] = l;
            full[(1, 1)] = a * (1.0 - a);
            full[(1, 2)] = -a * b;
            full[(2, 1)] = -a * b;
            full[(2, 2)] = b * (1.0 - b);
        }
        NumericModel::Sem1 | NumericModel::Sem2 => {
            for i in 0..dim {
                full[(i, i)] = theta[i];
            }
        }
    }
    full.select_columns(free)
}

fn natural_covariance(problem: &Problem, theta: &[f64], free: &[usize], inv: &DMatrix<f64>) -> CovarianceMatrix {
    let j = jacobian(problem, theta, free);
    let cov = &j * inv * j.transpose();
    CovarianceMatrix::from_matrix(
        problem.names.iter().map(|s| s.to_string()).collect(),
        &cov,
        CovarianceSource::NumericFisher,
    )
}

/// Variance of log λ_T by the delta method.
fn index_log_variance(problem: &Problem, theta: &[f64], free: &[usize], inv: &DMatrix<f64>) -> Option<f64> {
    let dim = problem.bounds.lower.len();
    let mut g = DVector::zeros(dim);
    match problem.model {
        NumericModel::MemRegular => {
            // λ_T = αλ: d log / d(log λ, a, b) = (1, 1 - α, -β).
            g[0] = 1.0;
            g[1] = 1.0 - theta[1];
            g[2] = -theta[2];
        }
        _ => g[0] = 1.0,
    }
    let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
    let v = (gf.transpose() * inv * &gf)[(0, 0)];
    (v.is_finite() && v >= 0.0).then_some(v)
}

fn build_result(problem: &Problem, dataset: &Dataset, theta: &[f64], f: f64, loglik: Option<f64>) -> EstimateResult {
    let soak = dataset.mean_soak().unwrap_or(0.0);
    let n_hooks = dataset.total_effective_hooks();
    let method = problem.model.method();
    match problem.model {
        NumericModel::Mem1 | NumericModel::Mem2 => {
            let reg = problem.regular(theta);
            let mut r = EstimateResult::new_numeric(method, theta[0], dataset.len(), n_hooks, soak);
            r.lambda_nontarget = Some(theta[1]);
            r.lambda_total = Some(theta[0] + theta[1]);
            if problem.model == NumericModel::Mem1 {
                r.p_target = Some(0.0);
                r.p_nontarget = Some(theta[2]);
            } else {
                r.p_target = Some(theta[2]);
                r.p_nontarget = Some(theta[2]);
            }
            r.alpha = Some(reg.alpha);
            r.beta = Some(reg.beta);
            r.loglik_max = loglik;
            r.aic = loglik.map(|ll| aic(ll, MEM_PARAMETERS));
            r
        }
        NumericModel::MemRegular => {
            let (l, a, b) = (theta[0], theta[1], theta[2]);
            let mut r = EstimateResult::new_numeric(method, a * l, dataset.len(), n_hooks, soak);
            r.lambda_nontarget = Some((1.0 - a) * l);
            r.lambda_total = Some(l);
            r.alpha = Some(a);
            r.beta = Some(b);
            r.loglik_max = loglik;
            r.aic = loglik.map(|ll| aic(ll, MEM_PARAMETERS));
            r
        }
        NumericModel::Sem1 | NumericModel::Sem2 => {
            let variant = problem.model.sem_variant().unwrap();
            let mut r = EstimateResult::new_numeric(method, theta[0], dataset.len(), n_hooks, soak);
            r.lambda_nontarget = Some(theta[1]);
            r.lambda_empty = theta.get(2).copied();
            r.lambda_total = Some(theta.iter().sum());
            r.sigma2 = Some(f / (variant.groups() * dataset.len()) as f64);
            r.loglik_max = loglik;
            r.aic = loglik.map(|ll| aic(ll, sem_parameters(variant)));
            r
        }
    }
}

/// When to use the numerical fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericMode {
    /// Closed form when it applies, numerical otherwise.
    #[default]
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub numeric: NumericMode,
    pub soak_tolerance: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            numeric: NumericMode::Auto,
            soak_tolerance: crate::data::DEFAULT_SOAK_TOLERANCE,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Fits one method, choosing between the closed form and the numerical optimizer.
pub fn fit_method(dataset: &Dataset, method: Method, options: &FitOptions) -> Result<EstimateResult, EstimateError> {
    let numeric = NumericModel::from_method(method);
    match (options.numeric, numeric) {
        (NumericMode::Always, Some(model)) => fit_numeric(dataset, model, &options.optimizer),
        (NumericMode::Auto, Some(model)) => match fit_closed_form(dataset, method, options.soak_tolerance) {
            Err(EstimateError::Data(DataError::VariableSoak { .. })) | Err(EstimateError::UnequalEffort { .. }) => {
                fit_numeric(dataset, model, &options.optimizer)
            }
            other => other,
        },
        _ => fit_closed_form(dataset, method, options.soak_tolerance),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SetRecord;
    use crate::indices::{fit_mem1, fit_mem2, fit_regular};

    fn rel(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            a.abs()
        } else {
            ((a - b) / b).abs()
        }
    }

    fn constant_soak() -> Dataset {
        Dataset::new(vec![
            SetRecord::new("a", 100, 50, 25, 20, 5, 0, 1.0).unwrap(),
            SetRecord::new("b", 80, 35, 22, 15, 8, 0, 1.0).unwrap(),
            SetRecord::new("c", 120, 70, 20, 24, 6, 0, 1.0).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn matches_closed_form_with_differing_hook_counts() {
        let ds = constant_soak();
        let pooled = pool(&ds, 0.0).unwrap();
        let cfg = OptimizerConfig { init: InitStrategy::Cpue, ..Default::default() };
        for (model, closed) in [
            (NumericModel::Mem1, fit_mem1(&pooled).unwrap()),
            (NumericModel::Mem2, fit_mem2(&pooled).unwrap()),
            (NumericModel::MemRegular, fit_regular(&pooled).unwrap()),
        ] {
            let num = fit_numeric(&ds, model, &cfg).unwrap();
            assert!(rel(num.lambda_target, closed.lambda_target) < 1e-6, "{model:?}");
            assert!(rel(num.lambda_nontarget.unwrap(), closed.lambda_nontarget.unwrap()) < 1e-6);
            assert!(rel(num.alpha.unwrap(), closed.alpha.unwrap()) < 1e-6);
            assert!(rel(num.beta.unwrap(), closed.beta.unwrap()) < 1e-6);
            let d = num.diagnostics.unwrap();
            assert!(d.converged && !d.degenerate, "{d:?}");
        }
    }

    #[test]
    fn structural_zero_escape_snaps_to_zero() {
        let ds = Dataset::new(vec![
            SetRecord::new("a", 100, 50, 25, 25, 0, 0, 60.0).unwrap(),
            SetRecord::new("b", 100, 40, 30, 30, 0, 0, 90.0).unwrap(),
        ])
        .unwrap();
        let r = fit_numeric(&ds, NumericModel::Mem1, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.p_nontarget, Some(0.0));
        let d = r.diagnostics.unwrap();
        assert_eq!(d.pinned, vec!["p_nontarget".to_string()]);
        assert!(!d.degenerate, "{d:?}");
    }

    #[test]
    fn sem_numeric_matches_closed_form() {
        let ds = Dataset::new(vec![
            SetRecord::new("a", 100, 50, 30, 15, 5, 0, 1.0).unwrap(),
            SetRecord::new("b", 100, 50, 20, 25, 5, 0, 1.0).unwrap(),
            SetRecord::new("c", 100, 45, 27, 20, 8, 0, 1.0).unwrap(),
        ])
        .unwrap();
        for (variant, model) in [(SemVariant::Sem1, NumericModel::Sem1), (SemVariant::Sem2, NumericModel::Sem2)] {
            let closed = crate::indices::fit_sem_closed(&ds, variant).unwrap();
            let num = fit_numeric(&ds, model, &OptimizerConfig::default()).unwrap();
            assert!(rel(num.lambda_target, closed.lambda_target) < 1e-6);
            assert!(rel(num.sigma2.unwrap(), closed.sigma2.unwrap()) < 1e-6);
        }
    }

    #[test]
    fn zero_target_catch_pins_index() {
        let ds = Dataset::new(vec![
            SetRecord::new("a", 100, 50, 0, 45, 5, 0, 60.0).unwrap(),
            SetRecord::new("b", 100, 40, 0, 52, 8, 0, 90.0).unwrap(),
        ])
        .unwrap();
        let r = fit_numeric(&ds, NumericModel::Mem1, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.lambda_target, 0.0);
        let d = r.diagnostics.unwrap();
        assert!(d.degenerate && d.reasons.contains(&DegeneracyReason::IndexAtBoundary));
    }

    #[test]
    fn auto_mode_switches_on_variable_soak() {
        let ds = Dataset::new(vec![
            SetRecord::new("a", 100, 50, 25, 20, 5, 0, 60.0).unwrap(),
            SetRecord::new("b", 100, 30, 35, 30, 5, 0, 120.0).unwrap(),
        ])
        .unwrap();
        let r = fit_method(&ds, Method::Mem1, &FitOptions::default()).unwrap();
        assert_eq!(r.path, crate::indices::FitPath::Numeric);
        let never = FitOptions { numeric: NumericMode::Never, ..Default::default() };
        assert!(fit_method(&ds, Method::Mem1, &never).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = OptimizerConfig { restarts: 0, ..Default::default() };
        assert!(fit_numeric(&constant_soak(), NumericModel::Mem1, &bad).is_err());
    }
}
