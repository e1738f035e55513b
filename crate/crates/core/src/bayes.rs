//! Bayesian MEM by adaptive random-walk Metropolis.
//!
//! All parameters carry independent Beta priors on `[0, 1]`. MEM1 and MEM2 are sampled
//! on the logit scale of their three native parameters. The FULL model is sampled in
//! coordinates aligned with its likelihood ridge: the regular form `(λ, α, β)` plus
//! `q = p_T`, with the change-of-variables factor `λ / (1 - q - α)` carried into the
//! target so the chain still targets the posterior of `(λ_T, λ_NT, p_T, p_NT)`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{pool, Dataset};
use crate::error::{DataError, EstimateError};
use crate::indices::fit_mem1;
use crate::indices::fit_mem2;
use crate::likelihood::{MemLikelihood, RegularParams};
use crate::par::map_indices;
use crate::rng::rng_for;
use crate::uncertainty::quantile_sorted;

const TARGET_ACCEPTANCE: f64 = 0.234;
const ADAPT_START: usize = 200;
const ADAPT_EVERY: usize = 100;
const INIT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl BetaPrior {
    pub const FLAT: BetaPrior = BetaPrior { a: 1.0, b: 1.0 };

    pub fn new(a: f64, b: f64) -> Result<Self, EstimateError> {
        let p = Self { a, b };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), EstimateError> {
        if self.a.is_finite() && self.b.is_finite() && self.a > 0.0 && self.b > 0.0 {
            Ok(())
        } else {
            Err(EstimateError::Domain(format!(
                "Beta shapes must be positive, got ({}, {})",
                self.a, self.b
            )))
        }
    }

    /// Unnormalized log density; `-inf` outside `(0, 1)` when the shape demands it.
    pub fn log_density(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return f64::NEG_INFINITY;
        }
        let term = |shape: f64, v: f64| if shape == 1.0 { 0.0 } else { (shape - 1.0) * v.ln() };
        term(self.a, x) + term(self.b, 1.0 - x)
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn variance(&self) -> f64 {
        let s = self.a + self.b;
        self.a * self.b / (s * s * (s + 1.0))
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        Beta::new(self.a, self.b).expect("validated shapes").sample(rng)
    }
}

/// Independent Beta priors. `p` applies to every escape probability of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub lambda_target: BetaPrior,
    pub lambda_nontarget: BetaPrior,
    pub p: BetaPrior,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            lambda_target: BetaPrior::FLAT,
            lambda_nontarget: BetaPrior::FLAT,
            p: BetaPrior::FLAT,
        }
    }
}

impl PriorSpec {
    /// Beta(0.1, 0.1) on every parameter.
    pub fn diffuse() -> Self {
        let b = BetaPrior { a: 0.1, b: 0.1 };
        Self {
            lambda_target: b,
            lambda_nontarget: b,
            p: b,
        }
    }

    pub fn validate(&self) -> Result<(), EstimateError> {
        self.lambda_target.validate()?;
        self.lambda_nontarget.validate()?;
        self.p.validate()
    }

    fn log_density(&self, model: BayesModel, native: &[f64]) -> f64 {
        let mut lp = self.lambda_target.log_density(native[0]) + self.lambda_nontarget.log_density(native[1]);
        for &p in &native[2..] {
            lp += self.p.log_density(p);
        }
        debug_assert_eq!(native.len(), model.dimension());
        lp
    }

    fn for_index(&self, model: BayesModel, i: usize) -> BetaPrior {
        match (model, i) {
            (_, 0) => self.lambda_target,
            (_, 1) => self.lambda_nontarget,
            _ => self.p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BayesModel {
    Mem1,
    Mem2,
    /// `(λ_T, λ_NT, p_T, p_NT)` all free. Not identifiable.
    Full,
}

impl BayesModel {
    pub fn dimension(self) -> usize {
        match self {
            BayesModel::Full => 4,
            _ => 3,
        }
    }

    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            BayesModel::Mem1 => &["lambda_target", "lambda_nontarget", "p_nontarget"],
            BayesModel::Mem2 => &["lambda_target", "lambda_nontarget", "p"],
            BayesModel::Full => &["lambda_target", "lambda_nontarget", "p_target", "p_nontarget"],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BayesModel::Mem1 => "MEM1",
            BayesModel::Mem2 => "MEM2",
            BayesModel::Full => "FULL",
        }
    }

    /// Regular form of native parameter values.
    pub fn regular(self, native: &[f64]) -> RegularParams {
        let (lt, lnt) = (native[0], native[1]);
        let (pt, pnt) = match self {
            BayesModel::Mem1 => (0.0, native[2]),
            BayesModel::Mem2 => (native[2], native[2]),
            BayesModel::Full => (native[2], native[3]),
        };
        let lambda = lt + lnt;
        let alpha = lt * (1.0 - pt) / lambda;
        let beta = lnt * (1.0 - pnt) / lambda;
        RegularParams {
            lambda,
            alpha,
            beta,
            gamma: (lt * pt + lnt * pnt) / lambda,
        }
    }
}

impl fmt::Display for BayesModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BayesModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "MEM1" => Ok(BayesModel::Mem1),
            "MEM2" => Ok(BayesModel::Mem2),
            "FULL" => Ok(BayesModel::Full),
            other => Err(format!("unknown model {other:?}; expected MEM1, MEM2 or FULL")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub chains: usize,
    /// Iterations per chain, burn-in included.
    pub draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Switch off to sample the prior.
    pub use_likelihood: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            draws: 6000,
            burn_in: 2000,
            thin: 1,
            seed: 0,
            use_likelihood: true,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<(), EstimateError> {
        if self.chains == 0 {
            return Err(EstimateError::Domain("at least one chain required".into()));
        }
        if self.draws <= self.burn_in {
            return Err(EstimateError::Domain(format!(
                "draws ({}) must exceed burn-in ({})",
                self.draws, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(EstimateError::Domain("thin must be at least 1".into()));
        }
        Ok(())
    }

    pub fn kept_per_chain(&self) -> usize {
        (self.draws - self.burn_in) / self.thin
    }
}

/// Post-burn-in draws on the native scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub model: BayesModel,
    pub names: Vec<String>,
    /// `values[parameter][chain][draw]`.
    pub values: Vec<Vec<Vec<f64>>>,
    pub burn_in: usize,
    pub thin: usize,
    pub draws: usize,
    /// Post-burn-in acceptance rate per chain.
    pub acceptance: Vec<f64>,
    pub seed: u64,
    pub prior: PriorSpec,
    pub used_likelihood: bool,
}

impl PosteriorSample {
    pub fn n_chains(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn n_kept(&self) -> usize {
        self.values.first().and_then(|p| p.first()).map_or(0, Vec::len)
    }

    pub fn parameter(&self, name: &str) -> Option<&[Vec<f64>]> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i].as_slice())
    }

    /// All chains of one parameter concatenated.
    pub fn pooled(&self, name: &str) -> Option<Vec<f64>> {
        self.parameter(name).map(|c| c.concat())
    }

    /// Native parameter vector of one draw.
    pub fn draw(&self, chain: usize, index: usize) -> Vec<f64> {
        self.values.iter().map(|p| p[chain][index]).collect()
    }

    /// Writes one row per kept draw: chain, iteration, then each parameter.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["chain".to_string(), "iteration".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for c in 0..self.n_chains() {
            for i in 0..self.n_kept() {
                let mut row = vec![c.to_string(), (self.burn_in + (i + 1) * self.thin).to_string()];
                row.extend(self.values.iter().map(|p| format!("{:e}", p[c][i])));
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| DataError::Io(e.to_string()))
    }
}

/// Unconstrained coordinates of one model.
#[derive(Clone, Copy)]
struct Coordinates {
    model: BayesModel,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Coordinates {
    /// Native parameters and the log change-of-variables factor, or `None` off the domain.
    fn decode(&self, x: &[f64]) -> Option<(Vec<f64>, f64)> {
        match self.model {
            BayesModel::Mem1 | BayesModel::Mem2 => {
                let native: Vec<f64> = x.iter().map(|&v| sigmoid(v)).collect();
                if native.iter().any(|&v| v <= 0.0 || v >= 1.0) {
                    return None;
                }
                let log_jac = x.iter().map(|&v| -softplus(-v) - softplus(v)).sum();
                Some((native, log_jac))
            }
            BayesModel::Full => {
                let lambda = x[0].exp();
                let m = x[1].max(x[2]).max(0.0);
                let (ea, eb, eg) = ((x[1] - m).exp(), (x[2] - m).exp(), (-m).exp());
                let total = ea + eb + eg;
                let (alpha, beta, gamma) = (ea / total, eb / total, eg / total);
                let q_max = gamma / (1.0 - beta);
                let s = sigmoid(x[3]);
                let q = q_max * s;
                let lt = lambda * alpha / (1.0 - q);
                let lnt = lambda - lt;
                let pnt = 1.0 - beta * (1.0 - q) / (1.0 - q - alpha);
                let native = vec![lt, lnt, q, pnt];
                let interior = alpha > 0.0 && beta > 0.0 && gamma > 0.0 && q > 0.0 && q < q_max;
                if !interior || !(lt > 0.0 && lt < 1.0 && lnt > 0.0 && lnt < 1.0 && pnt > 0.0 && pnt < 1.0) {
                    return None;
                }
                let log_jac = 2.0 * lambda.ln()
                    + alpha.ln()
                    + beta.ln()
                    + gamma.ln()
                    + q_max.ln()
                    + (-softplus(-x[3]) - softplus(x[3]))
                    - (1.0 - q - alpha).ln();
                Some((native, log_jac))
            }
        }
    }

    fn encode(&self, native: &[f64]) -> Option<Vec<f64>> {
        match self.model {
            BayesModel::Mem1 | BayesModel::Mem2 => {
                let x: Vec<f64> = native.iter().map(|&p| logit(p)).collect();
                x.iter().all(|v| v.is_finite()).then_some(x)
            }
            BayesModel::Full => {
                let r = self.model.regular(native);
                let q_max = r.gamma / (1.0 - r.beta);
                let s = native[2] / q_max;
                let x = vec![r.lambda.ln(), (r.alpha / r.gamma).ln(), (r.beta / r.gamma).ln(), logit(s)];
                x.iter().all(|v| v.is_finite()).then_some(x)
            }
        }
    }
}

struct Target<'a> {
    coords: Coordinates,
    likelihood: Option<&'a MemLikelihood>,
    prior: &'a PriorSpec,
}

impl Target<'_> {
    fn log_density(&self, x: &[f64]) -> f64 {
        let Some((native, log_jac)) = self.coords.decode(x) else {
            return f64::NEG_INFINITY;
        };
        let mut lp = self.prior.log_density(self.coords.model, &native) + log_jac;
        if let Some(lik) = self.likelihood {
            let ll = match self.coords.model {
                BayesModel::Full => {
                    // The likelihood depends on x only through (λ, α, β).
                    let lambda = x[0].exp();
                    let m = x[1].max(x[2]).max(0.0);
                    let (ea, eb, eg) = ((x[1] - m).exp(), (x[2] - m).exp(), (-m).exp());
                    let t = ea + eb + eg;
                    lik.eval_regular(&RegularParams {
                        lambda,
                        alpha: ea / t,
                        beta: eb / t,
                        gamma: eg / t,
                    })
                }
                model => lik.eval_regular(&model.regular(&native)),
            };
            lp += ll;
        }
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }
}

fn starting_point(dataset: &Dataset, model: BayesModel) -> Option<Vec<f64>> {
    let pooled = pool(dataset, f64::INFINITY).ok()?;
    let fit = match model {
        BayesModel::Mem2 => fit_mem2(&pooled).ok()?,
        _ => fit_mem1(&pooled).ok()?,
    };
    let rate = |v: f64| v.clamp(1e-9, 0.5);
    let prob = |v: Option<f64>| v.unwrap_or(0.5).clamp(1e-3, 1.0 - 1e-3);
    let lt = rate(fit.lambda_target);
    let lnt = rate(fit.lambda_nontarget?);
    Some(match model {
        BayesModel::Mem1 => vec![lt, lnt, prob(fit.p_nontarget)],
        BayesModel::Mem2 => vec![lt, lnt, prob(fit.p_nontarget)],
        BayesModel::Full => {
            // Same (λ, α, β) as the MEM1 fit with a small share of target escape.
            let p_nt = prob(fit.p_nontarget);
            let r = BayesModel::Mem1.regular(&[lt, lnt, p_nt]);
            let q_max = r.gamma / (1.0 - r.beta);
            let q = 0.1 * q_max;
            let lt_full = r.lambda * r.alpha / (1.0 - q);
            let lnt_full = r.lambda - lt_full;
            vec![lt_full, lnt_full, q, 1.0 - r.lambda * r.beta / lnt_full]
        }
    })
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    acceptance: f64,
}

fn initialize<R: Rng>(
    target: &Target,
    start: Option<&[f64]>,
    prior: &PriorSpec,
    rng: &mut R,
) -> Option<(Vec<f64>, f64)> {
    let model = target.coords.model;
    let encoded = start.and_then(|s| target.coords.encode(s));
    for attempt in 0..INIT_ATTEMPTS {
        let candidate = match (&encoded, attempt < INIT_ATTEMPTS / 2) {
            (Some(x0), true) => {
                let sd = 0.1 * (1.0 + attempt as f64 / 10.0);
                x0.iter()
                    .map(|v| v + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
            _ => {
                let native: Vec<f64> = (0..model.dimension())
                    .map(|i| prior.for_index(model, i).sample(rng))
                    .collect();
                match target.coords.encode(&native) {
                    Some(x) => x,
                    None => continue,
                }
            }
        };
        let lp = target.log_density(&candidate);
        if lp.is_finite() {
            return Some((candidate, lp));
        }
    }
    None
}

fn empirical_covariance(states: &[Vec<f64>]) -> DMatrix<f64> {
    let d = states[0].len();
    let n = states.len() as f64;
    let mut mean = DVector::zeros(d);
    for s in states {
        mean += DVector::from_column_slice(s);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for s in states {
        let c = DVector::from_column_slice(s) - &mean;
        cov += &c * c.transpose();
    }
    cov / (n - 1.0)
}

fn run_chain(
    target: &Target,
    start: Option<&[f64]>,
    config: &McmcConfig,
    chain: usize,
) -> Result<ChainOutput, EstimateError> {
    let mut rng = rng_for(&[config.seed, chain as u64]);
    let d = target.coords.model.dimension();
    let (mut x, mut lp) = initialize(target, start, target.prior, &mut rng).ok_or_else(|| {
        EstimateError::Numerical(format!(
            "log-posterior not finite at any of {INIT_ATTEMPTS} starting points"
        ))
    })?;

    let mut chol = DMatrix::<f64>::identity(d, d) * 0.1;
    let mut log_scale = 0.0f64;
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(config.burn_in);
    let mut draws = Vec::with_capacity(config.kept_per_chain());
    let mut accepted = 0usize;
    let mut proposal = vec![0.0; d];

    for t in 0..config.draws {
        let burning = t < config.burn_in;
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = &chol * z * log_scale.exp();
        for i in 0..d {
            proposal[i] = x[i] + step[i];
        }
        let lp_new = target.log_density(&proposal);
        let log_ratio = lp_new - lp;
        let accept_prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
        let u: f64 = rng.random();
        if u < accept_prob {
            x.copy_from_slice(&proposal);
            lp = lp_new;
            if !burning {
                accepted += 1;
            }
        }

        if burning {
            log_scale += (accept_prob - TARGET_ACCEPTANCE) / ((t + 1) as f64).powf(0.6);
            history.push(x.clone());
            let done = t + 1;
            if done >= ADAPT_START && done % ADAPT_EVERY == 0 {
                let recent = &history[done / 2..];
                let cov = empirical_covariance(recent) * (2.38 * 2.38 / d as f64)
                    + DMatrix::<f64>::identity(d, d) * 1e-10;
                if let Some(c) = cov.cholesky() {
                    chol = c.l();
                }
            }
        } else if (t + 1 - config.burn_in) % config.thin == 0 {
            draws.push(x.clone());
        }
    }

    let (native_draws, ok): (Vec<Vec<f64>>, bool) = draws.iter().fold((Vec::new(), true), |(mut acc, ok), x| {
        match target.coords.decode(x) {
            Some((n, _)) => {
                acc.push(n);
                (acc, ok)
            }
            None => (acc, false),
        }
    });
    if !ok {
        return Err(EstimateError::Numerical("chain left the parameter domain".into()));
    }
    Ok(ChainOutput {
        draws: native_draws,
        acceptance: accepted as f64 / (config.draws - config.burn_in) as f64,
    })
}

/// Runs `config.chains` independent chains. Chain `c` uses the stream keyed by `(seed, c)`.
pub fn sample_posterior(
    dataset: &Dataset,
    model: BayesModel,
    prior: &PriorSpec,
    config: &McmcConfig,
) -> Result<PosteriorSample, EstimateError> {
    prior.validate()?;
    config.validate()?;
    if dataset.is_empty() {
        return Err(DataError::Empty.into());
    }
    let likelihood = MemLikelihood::new(dataset);
    let target = Target {
        coords: Coordinates { model },
        likelihood: config.use_likelihood.then_some(&likelihood),
        prior,
    };
    let start = if config.use_likelihood {
        starting_point(dataset, model)
    } else {
        None
    };
    let outputs = map_indices(config.chains, |c| run_chain(&target, start.as_deref(), config, c));
    let mut chains = Vec::with_capacity(config.chains);
    for o in outputs {
        chains.push(o?);
    }
    let d = model.dimension();
    let values = (0..d)
        .map(|i| chains.iter().map(|c| c.draws.iter().map(|v| v[i]).collect()).collect())
        .collect();
    Ok(PosteriorSample {
        model,
        names: model.parameter_names().iter().map(|s| s.to_string()).collect(),
        values,
        burn_in: config.burn_in,
        thin: config.thin,
        draws: config.draws,
        acceptance: chains.iter().map(|c| c.acceptance).collect(),
        seed: config.seed,
        prior: *prior,
        used_likelihood: config.use_likelihood,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPosterior {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    /// Split-chain potential scale reduction; `None` when undefined.
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub model: BayesModel,
    pub level: f64,
    pub parameters: Vec<ParameterPosterior>,
    pub warnings: Vec<String>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParameterPosterior> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = if x.len() > 1 {
        x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

/// Split-chain R̂. `None` with fewer than two chains, fewer than four draws, or no
/// within-chain variation.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.len() < 2 {
        return None;
    }
    let n = chains.iter().map(Vec::len).min()? / 2;
    if n < 2 {
        return None;
    }
    let halves: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..n], &c[c.len() - n..]]).collect();
    let stats: Vec<(f64, f64)> = halves.iter().map(|h| mean_var(h)).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    if w <= 0.0 {
        return None;
    }
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let b_over_n = mean_var(&means).1;
    let nf = n as f64;
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    Some((var_plus / w).sqrt())
}

/// Effective sample size over chains of equal length, truncating the autocorrelation
/// sum at the first non-positive pair (Geyer's initial monotone sequence).
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Option<f64> {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min()?;
    if m == 0 || n < 4 {
        return None;
    }
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_var(&c[..n])).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m as f64;
    if w <= 0.0 {
        return None;
    }
    let b_over_n = if m > 1 {
        mean_var(&stats.iter().map(|s| s.0).collect::<Vec<_>>()).1
    } else {
        0.0
    };
    let nf = n as f64;
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    let autocov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&stats)
            .map(|(c, (mu, _))| {
                (0..n - lag).map(|i| (c[i] - mu) * (c[i + lag] - mu)).sum::<f64>() / nf
            })
            .sum::<f64>()
            / m as f64
    };
    let rho = |lag: usize| 1.0 - (w - autocov(lag)) / var_plus;
    let mut tau = -1.0;
    let mut previous = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(previous);
        tau += 2.0 * pair;
        previous = pair;
        k += 1;
    }
    let total = (m * n) as f64;
    Some(total / tau.max(1.0 / total.log10().max(1.0)))
}

/// Equal-tailed credible intervals and convergence diagnostics.
pub fn summarize_posterior(sample: &PosteriorSample, level: f64) -> Result<PosteriorSummary, EstimateError> {
    if !(0.0..1.0).contains(&level) {
        return Err(EstimateError::Domain(format!("level {level} outside [0, 1)")));
    }
    if sample.n_kept() == 0 {
        return Err(EstimateError::Domain("posterior sample is empty after burn-in".into()));
    }
    let tail = (1.0 - level) / 2.0;
    let mut warnings = Vec::new();
    if sample.n_chains() < 2 {
        warnings.push("fewer than two chains: convergence statistic unavailable".to_string());
    }
    let mut parameters = Vec::with_capacity(sample.names.len());
    for (name, chains) in sample.names.iter().zip(&sample.values) {
        let mut all = chains.concat();
        let (mean, var) = mean_var(&all);
        all.sort_by(f64::total_cmp);
        let rhat = split_rhat(chains);
        match rhat {
            None if sample.n_chains() >= 2 => {
                warnings.push(format!("{name}: convergence statistic undefined (no within-chain variation)"))
            }
            Some(r) if r > 1.05 => warnings.push(format!("{name}: split R-hat {r:.3} above 1.05")),
            _ => {}
        }
        let median = quantile_sorted(&all, 0.5);
        let (lower, upper) = if level == 0.0 {
            (median, median)
        } else {
            (quantile_sorted(&all, tail), quantile_sorted(&all, 1.0 - tail))
        };
        parameters.push(ParameterPosterior {
            name: name.clone(),
            mean,
            median,
            sd: var.sqrt(),
            lower,
            upper,
            rhat,
            ess: effective_sample_size(chains),
        });
    }
    if sample.model == BayesModel::Full && sample.used_likelihood {
        warnings.push(
            "FULL model is not identifiable: p_T is informed by the prior only".to_string(),
        );
    }
    Ok(PosteriorSummary {
        model: sample.model,
        level,
        parameters,
        warnings,
    })
}

/// Draws `p_T` from its prior conditional on the regular form `(λ, α, β)` of the FULL
/// model, by inverse CDF on a grid. This is the distribution the FULL posterior of
/// `p_T` reduces to given `(λ, α, β)`.
pub fn conditional_prior_p_target<R: Rng>(r: &RegularParams, prior: &PriorSpec, rng: &mut R) -> f64 {
    const CELLS: usize = 1024;
    let q_max = r.gamma / (1.0 - r.beta);
    let width = q_max / CELLS as f64;
    let log_density = |q: f64| {
        let lt = r.lambda * r.alpha / (1.0 - q);
        let lnt = r.lambda - lt;
        let pnt = 1.0 - r.lambda * r.beta / lnt;
        if !(lt < 1.0 && lnt > 0.0 && lnt < 1.0) {
            return f64::NEG_INFINITY;
        }
        prior.log_density(BayesModel::Full, &[lt, lnt, q, pnt]) - (1.0 - q - r.alpha).ln()
    };
    let logs: Vec<f64> = (0..CELLS).map(|i| log_density((i as f64 + 0.5) * width)).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return f64::NAN;
    }
    let mut cdf = Vec::with_capacity(CELLS);
    let mut acc = 0.0;
    for l in &logs {
        acc += (l - top).exp();
        cdf.push(acc);
    }
    let u = rng.random::<f64>() * acc;
    let i = cdf.partition_point(|&c| c < u).min(CELLS - 1);
    let below = if i == 0 { 0.0 } else { cdf[i - 1] };
    let frac = (u - below) / (cdf[i] - below);
    (i as f64 + frac) * width
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Large-sample critical value of the two-sample KS statistic at significance `alpha`
/// for (effective) sample sizes `n` and `m`.
pub fn ks_critical_value(n: f64, m: f64, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() * ((n + m) / (n * m)).sqrt()
}

/// Posterior of `p_T` against its conditional prior at the sampled `(λ, α, β)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityCheck {
    pub ks_statistic: f64,
    pub critical_value: f64,
    pub effective_draws: f64,
    /// True when the data taught nothing about `p_T` beyond `(λ, α, β)`.
    pub indistinguishable: bool,
}

/// Compares the FULL-model posterior of `p_T` with draws from its conditional prior.
pub fn identifiability_check(sample: &PosteriorSample, seed: u64) -> Result<IdentifiabilityCheck, EstimateError> {
    if sample.model != BayesModel::Full {
        return Err(EstimateError::Unsupported("identifiability check needs the FULL model".into()));
    }
    let chains = sample.parameter("p_target").expect("FULL has p_target");
    let mut rng = rng_for(&[seed, u64::MAX]);
    let mut reference: Vec<Vec<f64>> = Vec::with_capacity(sample.n_chains());
    for c in 0..sample.n_chains() {
        let mut row = Vec::with_capacity(sample.n_kept());
        for i in 0..sample.n_kept() {
            let r = BayesModel::Full.regular(&sample.draw(c, i));
            row.push(conditional_prior_p_target(&r, &sample.prior, &mut rng));
        }
        reference.push(row);
    }
    let n_eff = effective_sample_size(chains).unwrap_or(1.0);
    let m_eff = effective_sample_size(&reference).unwrap_or(1.0);
    let d = ks_statistic(&chains.concat(), &reference.concat());
    let critical = ks_critical_value(n_eff, m_eff, 0.01);
    Ok(IdentifiabilityCheck {
        ks_statistic: d,
        critical_value: critical,
        effective_draws: n_eff.min(m_eff),
        indistinguishable: d < critical,
    })
}
