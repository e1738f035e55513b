//! Log-likelihoods of the multinomial exponential models and the Gaussian
//! simple exponential models.
//!
//! A hook with baited soak `S` ends in one of four cells:
//!
//! ```text
//! baited      e^{-λS}
//! target      (1 - e^{-λS}) α
//! non-target  (1 - e^{-λS}) β
//! empty       (1 - e^{-λS}) γ,        γ = 1 - α - β
//! ```
//!
//! with `λ = λ_T + λ_NT`, `α = λ_T (1 - p_T) / λ`, `β = λ_NT (1 - p_NT) / λ`. The
//! `(λ, α, β)` "regular" form is identifiable and is what every evaluation runs on.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use libm::lgamma;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PooledCounts};
use crate::error::EstimateError;
use crate::fd;

const SUM_TOL: f64 = 1e-12;

/// Identifiable form of the MEM: total rate and the target / non-target / empty split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularParams {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl RegularParams {
    pub fn new(lambda: f64, alpha: f64, beta: f64) -> Result<Self, EstimateError> {
        let r = Self {
            lambda,
            alpha,
            beta,
            gamma: (1.0 - alpha - beta).max(0.0),
        };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<(), EstimateError> {
        check_rate("lambda", self.lambda)?;
        check_prob("alpha", self.alpha)?;
        check_prob("beta", self.beta)?;
        if self.alpha + self.beta > 1.0 + SUM_TOL {
            return Err(EstimateError::Domain(format!(
                "alpha + beta = {} exceeds 1",
                self.alpha + self.beta
            )));
        }
        Ok(())
    }

    /// Log cell probabilities (baited, target, non-target, empty) at soak `s`.
    pub fn log_cells(&self, s: f64) -> [f64; 4] {
        let ls = self.lambda * s;
        let log_touched = (-(-ls).exp_m1()).ln();
        [
            -ls,
            log_touched + self.alpha.ln(),
            log_touched + self.beta.ln(),
            log_touched + self.gamma.ln(),
        ]
    }

    /// Cell probabilities (baited, target, non-target, empty) at soak `s`.
    pub fn cells(&self, s: f64) -> [f64; 4] {
        let ls = self.lambda * s;
        let touched = -(-ls).exp_m1();
        [
            (-ls).exp(),
            touched * self.alpha,
            touched * self.beta,
            touched * self.gamma,
        ]
    }
}

/// Which constraint ties the four MEM parameters together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Parameterization {
    /// All four parameters free; not identifiable.
    Full,
    /// `p_T = 0`.
    Mem1,
    /// `p_T = p_NT`.
    Mem2,
    /// `(λ, α, β)`.
    Regular,
}

/// MEM parameters in one of the supported parameterizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MemParams {
    Full {
        lambda_target: f64,
        lambda_nontarget: f64,
        p_target: f64,
        p_nontarget: f64,
    },
    Mem1 {
        lambda_target: f64,
        lambda_nontarget: f64,
        p_nontarget: f64,
    },
    Mem2 {
        lambda_target: f64,
        lambda_nontarget: f64,
        p: f64,
    },
    Regular(RegularParams),
}

impl MemParams {
    pub fn parameterization(&self) -> Parameterization {
        match self {
            MemParams::Full { .. } => Parameterization::Full,
            MemParams::Mem1 { .. } => Parameterization::Mem1,
            MemParams::Mem2 { .. } => Parameterization::Mem2,
            MemParams::Regular(_) => Parameterization::Regular,
        }
    }

    /// Free parameter values in the order given by [`MemParams::names`].
    pub fn values(&self) -> Vec<f64> {
        match *self {
            MemParams::Full {
                lambda_target,
                lambda_nontarget,
                p_target,
                p_nontarget,
            } => vec![lambda_target, lambda_nontarget, p_target, p_nontarget],
            MemParams::Mem1 {
                lambda_target,
                lambda_nontarget,
                p_nontarget,
            } => vec![lambda_target, lambda_nontarget, p_nontarget],
            MemParams::Mem2 {
                lambda_target,
                lambda_nontarget,
                p,
            } => vec![lambda_target, lambda_nontarget, p],
            MemParams::Regular(r) => vec![r.lambda, r.alpha, r.beta],
        }
    }

    pub fn names(kind: Parameterization) -> &'static [&'static str] {
        match kind {
            Parameterization::Full => &["lambda_target", "lambda_nontarget", "p_target", "p_nontarget"],
            Parameterization::Mem1 => &["lambda_target", "lambda_nontarget", "p_nontarget"],
            Parameterization::Mem2 => &["lambda_target", "lambda_nontarget", "p"],
            Parameterization::Regular => &["lambda", "alpha", "beta"],
        }
    }

    /// Inverse of [`MemParams::values`]. Does not validate.
    pub fn from_values(kind: Parameterization, v: &[f64]) -> Self {
        match kind {
            Parameterization::Full => MemParams::Full {
                lambda_target: v[0],
                lambda_nontarget: v[1],
                p_target: v[2],
                p_nontarget: v[3],
            },
            Parameterization::Mem1 => MemParams::Mem1 {
                lambda_target: v[0],
                lambda_nontarget: v[1],
                p_nontarget: v[2],
            },
            Parameterization::Mem2 => MemParams::Mem2 {
                lambda_target: v[0],
                lambda_nontarget: v[1],
                p: v[2],
            },
            Parameterization::Regular => MemParams::Regular(RegularParams {
                lambda: v[0],
                alpha: v[1],
                beta: v[2],
                gamma: (1.0 - v[1] - v[2]).max(0.0),
            }),
        }
    }

    /// Expands to `(λ_T, λ_NT, p_T, p_NT)`. Not available for the regular form.
    pub fn rates_and_escapes(&self) -> Option<(f64, f64, f64, f64)> {
        match *self {
            MemParams::Full {
                lambda_target,
                lambda_nontarget,
                p_target,
                p_nontarget,
            } => Some((lambda_target, lambda_nontarget, p_target, p_nontarget)),
            MemParams::Mem1 {
                lambda_target,
                lambda_nontarget,
                p_nontarget,
            } => Some((lambda_target, lambda_nontarget, 0.0, p_nontarget)),
            MemParams::Mem2 {
                lambda_target,
                lambda_nontarget,
                p,
            } => Some((lambda_target, lambda_nontarget, p, p)),
            MemParams::Regular(_) => None,
        }
    }

    pub fn validate(&self) -> Result<(), EstimateError> {
        match self.rates_and_escapes() {
            Some((lt, lnt, pt, pnt)) => {
                check_rate("lambda_target", lt)?;
                check_rate("lambda_nontarget", lnt)?;
                check_prob("p_target", pt)?;
                check_prob("p_nontarget", pnt)
            }
            None => match self {
                MemParams::Regular(r) => r.validate(),
                _ => unreachable!(),
            },
        }
    }

    /// Maps onto the regular form. With `λ = 0` the split is arbitrary and set to
    /// `(0, 0, 1)`; no cell other than "baited" has mass then.
    pub fn to_regular(&self) -> Result<RegularParams, EstimateError> {
        self.validate()?;
        if let MemParams::Regular(r) = self {
            return Ok(RegularParams {
                gamma: (1.0 - r.alpha - r.beta).max(0.0),
                ..*r
            });
        }
        let (lt, lnt, pt, pnt) = self.rates_and_escapes().expect("non-regular");
        let lambda = lt + lnt;
        if lambda == 0.0 {
            return Ok(RegularParams {
                lambda,
                alpha: 0.0,
                beta: 0.0,
                gamma: 1.0,
            });
        }
        Ok(RegularParams {
            lambda,
            alpha: lt * (1.0 - pt) / lambda,
            beta: lnt * (1.0 - pnt) / lambda,
            gamma: (lt * pt + lnt * pnt) / lambda,
        })
    }
}

fn check_rate(name: &str, v: f64) -> Result<(), EstimateError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(EstimateError::Domain(format!("{name} must be a finite rate >= 0, got {v}")))
    }
}

fn check_prob(name: &str, v: f64) -> Result<(), EstimateError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(EstimateError::Domain(format!("{name} must lie in [0, 1], got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SoakBlock {
    soak: f64,
    counts: [f64; 4],
}

/// MEM log-likelihood of a fixed dataset, with counts summed per distinct soak time.
///
/// Sets sharing a soak time contribute the same cell probabilities, so only the
/// summed counts and the multinomial constants are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct MemLikelihood {
    blocks: Vec<SoakBlock>,
    constant: f64,
    n_sets: usize,
}

fn log_factorial(n: f64) -> f64 {
    lgamma(n + 1.0)
}

fn multinomial_constant(counts: [u64; 4]) -> f64 {
    let n: u64 = counts.iter().sum();
    log_factorial(n as f64) - counts.iter().map(|&c| log_factorial(c as f64)).sum::<f64>()
}

impl MemLikelihood {
    pub fn new(dataset: &Dataset) -> Self {
        let mut blocks: BTreeMap<u64, [f64; 4]> = BTreeMap::new();
        let mut constant = 0.0;
        for r in dataset.records() {
            let counts = r.outcome_counts();
            constant += multinomial_constant(counts);
            let acc = blocks.entry(r.soak_time.to_bits()).or_insert([0.0; 4]);
            for (a, c) in acc.iter_mut().zip(counts) {
                *a += c as f64;
            }
        }
        Self {
            blocks: blocks
                .into_iter()
                .map(|(bits, counts)| SoakBlock {
                    soak: f64::from_bits(bits),
                    counts,
                })
                .collect(),
            constant,
            n_sets: dataset.len(),
        }
    }

    /// Likelihood of pooled counts treated as one multinomial draw.
    pub fn from_pooled(pooled: &PooledCounts) -> Self {
        let counts = pooled.outcome_counts();
        Self {
            blocks: vec![SoakBlock {
                soak: pooled.soak_time,
                counts: counts.map(|c| c as f64),
            }],
            constant: multinomial_constant(counts),
            n_sets: pooled.n_sets,
        }
    }

    /// Kernel over real-valued counts `(soak, [N_B, N_T, N_NT, N_E])` without the
    /// multinomial constant. Useful for expected log-likelihoods.
    pub fn from_weighted(blocks: impl IntoIterator<Item = (f64, [f64; 4])>) -> Self {
        let blocks: Vec<SoakBlock> = blocks
            .into_iter()
            .map(|(soak, counts)| SoakBlock { soak, counts })
            .collect();
        Self {
            n_sets: blocks.len(),
            blocks,
            constant: 0.0,
        }
    }

    pub fn n_sets(&self) -> usize {
        self.n_sets
    }

    /// Log of the multinomial coefficients.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Mean soak time weighted by the number of hooks in each block.
    pub fn mean_soak(&self) -> f64 {
        let (mut w, mut ws) = (0.0, 0.0);
        for b in &self.blocks {
            let n: f64 = b.counts.iter().sum();
            w += n;
            ws += n * b.soak;
        }
        if w > 0.0 {
            ws / w
        } else {
            self.blocks.iter().map(|b| b.soak).sum::<f64>() / self.blocks.len().max(1) as f64
        }
    }

    /// Summed counts over all blocks.
    pub fn total_counts(&self) -> [f64; 4] {
        let mut t = [0.0; 4];
        for b in &self.blocks {
            for (a, c) in t.iter_mut().zip(b.counts) {
                *a += c;
            }
        }
        t
    }

    pub fn has_single_soak(&self) -> bool {
        self.blocks.len() == 1
    }

    /// Log-likelihood at regular-form parameters. Returns `-inf` when a cell with a
    /// positive count has zero probability.
    pub fn eval_regular(&self, r: &RegularParams) -> f64 {
        let mut ll = self.constant;
        for b in &self.blocks {
            let lp = r.log_cells(b.soak);
            for k in 0..4 {
                if b.counts[k] > 0.0 {
                    if lp[k] == f64::NEG_INFINITY {
                        return f64::NEG_INFINITY;
                    }
                    ll += b.counts[k] * lp[k];
                }
            }
        }
        ll
    }

    pub fn eval(&self, params: &MemParams) -> Result<f64, EstimateError> {
        Ok(self.eval_regular(&params.to_regular()?))
    }
}

/// Log-likelihood of the MEM over all sets, each with its own hook count and soak.
pub fn mem_loglik(params: &MemParams, dataset: &Dataset) -> Result<f64, EstimateError> {
    MemLikelihood::new(dataset).eval(params)
}

/// Finite-difference gradient and Hessian of [`mem_loglik`] in the free parameters of
/// `params`' parameterization. Parameters must be strictly inside their domain.
pub fn mem_score_and_hessian(
    params: &MemParams,
    dataset: &Dataset,
) -> Result<(DVector<f64>, DMatrix<f64>), EstimateError> {
    score_and_hessian(params, &MemLikelihood::new(dataset))
}

pub(crate) fn score_and_hessian(
    params: &MemParams,
    lik: &MemLikelihood,
) -> Result<(DVector<f64>, DMatrix<f64>), EstimateError> {
    let kind = params.parameterization();
    let x = params.values();
    params.validate()?;
    let interior = match params {
        MemParams::Regular(r) => {
            r.lambda > 0.0 && r.alpha > 0.0 && r.beta > 0.0 && r.alpha + r.beta < 1.0
        }
        _ => {
            let (lt, lnt, pt, pnt) = params.rates_and_escapes().unwrap();
            let probs_ok = match kind {
                Parameterization::Mem1 => pnt > 0.0 && pnt < 1.0,
                _ => pt > 0.0 && pt < 1.0 && pnt > 0.0 && pnt < 1.0,
            };
            lt > 0.0 && lnt > 0.0 && probs_ok
        }
    };
    if !interior {
        return Err(EstimateError::Domain(
            "derivatives need parameters strictly inside the domain".into(),
        ));
    }
    // Keep every probe inside the domain: probability steps scale with the distance
    // to the nearer bound.
    let scale: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| match (kind, i) {
            (Parameterization::Regular, 0) => v,
            (Parameterization::Regular, _) => {
                let other = if i == 1 { x[2] } else { x[1] };
                v.min(1.0 - other - v)
            }
            (_, 0) | (_, 1) => v,
            _ => v.min(1.0 - v),
        })
        .collect();
    let f = |v: &[f64]| match MemParams::from_values(kind, v).to_regular() {
        Ok(r) => lik.eval_regular(&r),
        Err(_) => f64::NAN,
    };
    let g = fd::gradient(f, &x, &scale);
    let h = fd::hessian(f, &x, &scale);
    if g.iter().chain(h.iter()).any(|v| !v.is_finite()) {
        return Err(EstimateError::Numerical(
            "non-finite log-likelihood near the evaluation point".into(),
        ));
    }
    Ok((g, h))
}

/// Simple exponential model variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SemVariant {
    /// Empty hooks counted with the non-target catch.
    Sem1,
    /// Empty hooks as a third "species" with its own rate.
    Sem2,
}

impl SemVariant {
    /// Number of residual groups per set.
    pub fn groups(self) -> usize {
        match self {
            SemVariant::Sem1 => 2,
            SemVariant::Sem2 => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemParams {
    pub lambda_target: f64,
    pub lambda_nontarget: f64,
    /// Used by SEM2 only.
    pub lambda_empty: f64,
    pub sigma2: f64,
}

impl SemParams {
    pub fn lambda_total(&self, variant: SemVariant) -> f64 {
        match variant {
            SemVariant::Sem1 => self.lambda_target + self.lambda_nontarget,
            SemVariant::Sem2 => self.lambda_target + self.lambda_nontarget + self.lambda_empty,
        }
    }

    fn rates(&self, variant: SemVariant) -> Vec<f64> {
        match variant {
            SemVariant::Sem1 => vec![self.lambda_target, self.lambda_nontarget],
            SemVariant::Sem2 => vec![self.lambda_target, self.lambda_nontarget, self.lambda_empty],
        }
    }
}

/// Observed catch per residual group of one set.
pub(crate) fn sem_observed(counts: [u64; 4], variant: SemVariant) -> Vec<f64> {
    let [_, t, nt, e] = counts;
    match variant {
        SemVariant::Sem1 => vec![t as f64, (nt + e) as f64],
        SemVariant::Sem2 => vec![t as f64, nt as f64, e as f64],
    }
}

/// Residual sum of squares `Σ (C_rl - (λ_r/λ) N_l (1 - e^{-λ S_l}))²` over sets and groups.
pub fn sem_rss(rates: &[f64], dataset: &Dataset, variant: SemVariant) -> f64 {
    let lambda: f64 = rates.iter().sum();
    dataset
        .records()
        .iter()
        .map(|r| {
            let n = r.effective_hooks() as f64;
            let touched = if lambda > 0.0 {
                -(-lambda * r.soak_time).exp_m1() / lambda
            } else {
                r.soak_time
            };
            sem_observed(r.outcome_counts(), variant)
                .iter()
                .zip(rates)
                .map(|(c, lr)| {
                    let d = c - lr * n * touched;
                    d * d
                })
                .sum::<f64>()
        })
        .sum()
}

/// Gaussian log-density of the SEM residuals.
pub fn sem_loglik(
    params: &SemParams,
    dataset: &Dataset,
    variant: SemVariant,
) -> Result<f64, EstimateError> {
    if !(params.sigma2.is_finite() && params.sigma2 > 0.0) {
        return Err(EstimateError::Domain(format!(
            "sigma2 must be positive, got {}",
            params.sigma2
        )));
    }
    for (name, v) in ["lambda_target", "lambda_nontarget", "lambda_empty"]
        .iter()
        .zip(params.rates(SemVariant::Sem2))
    {
        check_rate(name, v)?;
    }
    let m = (variant.groups() * dataset.len()) as f64;
    let rss = sem_rss(&params.rates(variant), dataset, variant);
    Ok(-0.5 * m * (2.0 * PI * params.sigma2).ln() - rss / (2.0 * params.sigma2))
}

/// Gaussian log-likelihood with σ² at its profile maximum `RSS / (G L)`.
/// `None` when the residuals vanish.
pub fn sem_profile_loglik(rss: f64, n_sets: usize, variant: SemVariant) -> Option<f64> {
    let m = (variant.groups() * n_sets) as f64;
    let sigma2 = rss / m;
    (sigma2 > 0.0).then(|| -0.5 * m * ((2.0 * PI * sigma2).ln() + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SetRecord;

    fn canonical() -> Dataset {
        Dataset::new(vec![SetRecord::new("a", 100, 50, 25, 20, 5, 0, 1.0).unwrap()]).unwrap()
    }

    fn full(lt: f64, lnt: f64, pt: f64, pnt: f64) -> MemParams {
        MemParams::Full {
            lambda_target: lt,
            lambda_nontarget: lnt,
            p_target: pt,
            p_nontarget: pnt,
        }
    }

    #[test]
    fn single_baited_hook() {
        let ds = Dataset::new(vec![SetRecord::new("a", 1, 1, 0, 0, 0, 0, 3.0).unwrap()]).unwrap();
        let ll = mem_loglik(&full(0.2, 0.1, 0.3, 0.4), &ds).unwrap();
        assert!((ll + 0.3 * 3.0).abs() < 1e-14);
    }

    #[test]
    fn zero_cell_with_count_is_negative_infinity() {
        let p = MemParams::Mem1 {
            lambda_target: 0.2,
            lambda_nontarget: 0.1,
            p_nontarget: 0.0,
        };
        assert_eq!(mem_loglik(&p, &canonical()).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_out_of_domain() {
        assert!(mem_loglik(&full(-0.1, 0.1, 0.0, 0.0), &canonical()).is_err());
        assert!(mem_loglik(&full(0.1, 0.1, 1.2, 0.0), &canonical()).is_err());
        let r = MemParams::Regular(RegularParams {
            lambda: 1.0,
            alpha: 0.7,
            beta: 0.5,
            gamma: 0.0,
        });
        assert!(mem_loglik(&r, &canonical()).is_err());
    }

    #[test]
    fn matches_model_without_escape() {
        // Three-cell multinomial written out by hand.
        let ds = Dataset::new(vec![SetRecord::new("a", 30, 12, 10, 8, 0, 0, 2.0).unwrap()]).unwrap();
        let (lt, lnt, s): (f64, f64, f64) = (0.15, 0.2, 2.0);
        let l = lt + lnt;
        let pb = (-l * s).exp();
        let pt = lt / l * (1.0 - pb);
        let pnt = lnt / l * (1.0 - pb);
        let lf = |n: f64| lgamma(n + 1.0);
        let expected = lf(30.0) - lf(12.0) - lf(10.0) - lf(8.0)
            + 12.0 * pb.ln()
            + 10.0 * pt.ln()
            + 8.0 * pnt.ln();
        let got = mem_loglik(&full(lt, lnt, 0.0, 0.0), &ds).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn pooled_kernel_differs_by_constant_only() {
        let ds = Dataset::new(vec![
            SetRecord::new("a", 10, 4, 3, 2, 1, 0, 1.0).unwrap(),
            SetRecord::new("b", 12, 5, 2, 4, 1, 0, 1.0).unwrap(),
        ])
        .unwrap();
        let pooled = crate::data::pool(&ds, 0.05).unwrap();
        let a = MemLikelihood::new(&ds);
        let b = MemLikelihood::from_pooled(&pooled);
        let p = full(0.3, 0.4, 0.1, 0.2).to_regular().unwrap();
        let d = (a.eval_regular(&p) - a.constant()) - (b.eval_regular(&p) - b.constant());
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn regular_mapping_sums_to_one() {
        let r = full(0.3, 0.2, 0.15, 0.4).to_regular().unwrap();
        assert!((r.alpha + r.beta + r.gamma - 1.0).abs() < 1e-15);
        let c = r.cells(1.7);
        assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sem_zero_residuals() {
        // Two identical sets fitted at their exact expectation.
        let rec = |id: &str| SetRecord::new(id, 100, 50, 25, 20, 5, 0, 1.0).unwrap();
        let ds = Dataset::new(vec![rec("a"), rec("b")]).unwrap();
        let l = 2f64.ln();
        let p = SemParams {
            lambda_target: 0.5 * l,
            lambda_nontarget: 0.5 * l,
            lambda_empty: 0.0,
            sigma2: 2.5,
        };
        let ll = sem_loglik(&p, &ds, SemVariant::Sem1).unwrap();
        let expected = -(2.0 * 2.0 / 2.0) * (2.0 * PI * 2.5).ln();
        assert!((ll - expected).abs() < 1e-10);
        assert!(sem_profile_loglik(0.0, 2, SemVariant::Sem1).is_none());
    }

    #[test]
    fn sem_requires_positive_variance() {
        let p = SemParams {
            lambda_target: 0.1,
            lambda_nontarget: 0.1,
            lambda_empty: 0.0,
            sigma2: 0.0,
        };
        assert!(sem_loglik(&p, &canonical(), SemVariant::Sem1).is_err());
    }

    #[test]
    fn score_rejects_boundary() {
        let p = MemParams::Mem1 {
            lambda_target: 0.3,
            lambda_nontarget: 0.3,
            p_nontarget: 0.0,
        };
        assert!(mem_score_and_hessian(&p, &canonical()).is_err());
    }
}
