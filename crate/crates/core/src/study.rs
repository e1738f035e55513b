//! Monte Carlo study over a grid of target and non-target capture rates.
//!
//! Each grid cell simulates `replicates` datasets and fits every requested estimator
//! to the same datasets. Replicate `r` of cell `(i, j)` uses the stream keyed by
//! `(seed, i, j)` then `(r, set)`, so results do not depend on scheduling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DEFAULT_SOAK_TOLERANCE;
use crate::error::EstimateError;
use crate::indices::{expected_cpue, expected_target_catch, fit_closed_form, Method};
use crate::numeric::{fit_numeric, InitStrategy, NumericModel, OptimizerConfig};
use crate::par::map_indices;
use crate::rng::derive_seed;
use crate::sim::{simulate_dataset, Scenario};
use crate::uncertainty::{asymptotic_cov_mem1, asymptotic_cov_mem2, mean_sd, quantile_sorted};

/// Share of failed replicates above which a cell is flagged.
pub const FAILURE_FLAG_SHARE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EscapeScenario {
    /// No escape.
    Sc1,
    /// Equal escape, `p_T = p_NT = 0.2`.
    Sc2,
    /// Mostly non-target escape, `p_T = 0.02`, `p_NT = 0.2`.
    Sc3,
}

impl EscapeScenario {
    pub const ALL: [EscapeScenario; 3] = [EscapeScenario::Sc1, EscapeScenario::Sc2, EscapeScenario::Sc3];

    /// `(p_T, p_NT)`.
    pub fn escapes(self) -> (f64, f64) {
        match self {
            EscapeScenario::Sc1 => (0.0, 0.0),
            EscapeScenario::Sc2 => (0.2, 0.2),
            EscapeScenario::Sc3 => (0.02, 0.2),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EscapeScenario::Sc1 => "sc1",
            EscapeScenario::Sc2 => "sc2",
            EscapeScenario::Sc3 => "sc3",
        }
    }
}

impl fmt::Display for EscapeScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EscapeScenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sc1" => Ok(EscapeScenario::Sc1),
            "sc2" => Ok(EscapeScenario::Sc2),
            "sc3" => Ok(EscapeScenario::Sc3),
            other => Err(format!("unknown scenario {other:?}; expected sc1, sc2 or sc3")),
        }
    }
}

/// An estimator in a study: a method fitted in closed form, or numerically.
/// Serialized as its label, e.g. `"MEM1"` or `"SEM1_NUMERIC"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StudyEstimator {
    pub method: Method,
    pub numeric: bool,
}

impl From<StudyEstimator> for String {
    fn from(e: StudyEstimator) -> Self {
        e.label()
    }
}

impl TryFrom<String> for StudyEstimator {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl StudyEstimator {
    pub fn closed(method: Method) -> Self {
        Self { method, numeric: false }
    }

    pub fn numeric(method: Method) -> Self {
        Self { method, numeric: true }
    }

    pub fn label(&self) -> String {
        if self.numeric {
            format!("{}_NUMERIC", self.method)
        } else {
            self.method.to_string()
        }
    }
}

impl fmt::Display for StudyEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for StudyEstimator {
    type Err = String;

    /// `MEM1`, `sem1`, or with a `_numeric` / `:numeric` suffix.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        let (base, numeric) = match lower.strip_suffix("_numeric").or_else(|| lower.strip_suffix(":numeric")) {
            Some(b) => (b.to_string(), true),
            None => (lower, false),
        };
        let method: Method = base.parse()?;
        if numeric && NumericModel::from_method(method).is_none() {
            return Err(format!("{method} has no numerical fit"));
        }
        Ok(Self { method, numeric })
    }
}

/// Fields missing from a serialized grid take their default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyGrid {
    pub lambda_target: Vec<f64>,
    pub lambda_nontarget: Vec<f64>,
    pub scenario: EscapeScenario,
    pub n_hooks: u64,
    pub n_sets: usize,
    /// Soak time in minutes shared by every set.
    pub soak: f64,
    pub replicates: usize,
    pub estimators: Vec<StudyEstimator>,
    pub seed: u64,
    /// Keep every replicate estimate in the report.
    pub keep_replicates: bool,
    /// Used by numerical estimators. Starts from CPUE rates by default so the optimizer
    /// has to find the optimum.
    pub optimizer: OptimizerConfig,
}

fn study_optimizer() -> OptimizerConfig {
    OptimizerConfig {
        init: InitStrategy::Cpue,
        ..OptimizerConfig::default()
    }
}

impl Default for StudyGrid {
    fn default() -> Self {
        Self {
            lambda_target: vec![1e-5, 5e-5, 1e-4, 5e-4],
            lambda_nontarget: vec![5e-4, 1e-3, 5e-3, 1e-2],
            scenario: EscapeScenario::Sc1,
            n_hooks: 220,
            n_sets: 20,
            soak: 120.0,
            replicates: 5000,
            estimators: vec![
                StudyEstimator::closed(Method::Cpue),
                StudyEstimator::closed(Method::Mem1),
                StudyEstimator::closed(Method::Mem2),
                StudyEstimator::closed(Method::Sem1),
            ],
            seed: 2011,
            keep_replicates: false,
            optimizer: study_optimizer(),
        }
    }
}

impl StudyGrid {
    pub fn validate(&self) -> Result<(), EstimateError> {
        let bad = |m: String| Err(EstimateError::Domain(m));
        if self.lambda_target.is_empty() || self.lambda_nontarget.is_empty() {
            return bad("rate lists must be non-empty".into());
        }
        if self.lambda_target.iter().chain(&self.lambda_nontarget).any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("rates must be positive".into());
        }
        if self.estimators.is_empty() {
            return bad("no estimators requested".into());
        }
        for e in &self.estimators {
            if e.numeric && NumericModel::from_method(e.method).is_none() {
                return bad(format!("{} has no numerical fit", e.method));
            }
        }
        if self.n_hooks == 0 || self.n_sets == 0 || self.replicates == 0 {
            return bad("n_hooks, n_sets and replicates must be positive".into());
        }
        if !(self.soak.is_finite() && self.soak > 0.0) {
            return bad(format!("soak must be positive, got {}", self.soak));
        }
        if self.estimators.iter().any(|e| e.numeric) {
            self.optimizer.validate()?;
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<(usize, usize)> {
        (0..self.lambda_target.len())
            .flat_map(|i| (0..self.lambda_nontarget.len()).map(move |j| (i, j)))
            .collect()
    }

    /// Simulation scenario of cell `(i, j)`.
    pub fn scenario_for(&self, i: usize, j: usize) -> Scenario {
        let (p_target, p_nontarget) = self.scenario.escapes();
        Scenario {
            lambda_target: self.lambda_target[i],
            lambda_nontarget: self.lambda_nontarget[j],
            p_target,
            p_nontarget,
            n_hooks: self.n_hooks,
            n_sets: self.n_sets,
            soak: self.soak,
            replicates: self.replicates,
            seed: derive_seed(&[self.seed, i as u64, j as u64]),
            label: format!("{}-{}-{}", self.scenario, i, j),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub estimator: String,
    pub lambda_target: f64,
    pub lambda_nontarget: f64,
    /// Replicates whose fit failed; excluded from the aggregates.
    pub failures: usize,
    /// Numerical fits carrying a degeneracy flag; included in the aggregates.
    pub flagged: usize,
    pub used: usize,
    pub mean: f64,
    pub sd: f64,
    /// `|λ_T - mean(λ̂_T)| / λ_T`, in percent.
    pub relative_bias_pct: f64,
    /// `(mean(λ̂_T) - λ_T) / λ_T`, in percent.
    pub signed_bias_pct: f64,
    /// `sd / mean`, in percent; `None` when the mean is zero.
    pub cv_pct: Option<f64>,
    pub expected_catch: f64,
    /// Asymptotic CV of the MEM estimators, in percent, where defined.
    pub asymptotic_cv_pct: Option<f64>,
    /// More than 20% of replicates failed.
    pub failure_flag: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub grid: StudyGrid,
    pub notes: Vec<String>,
    pub cells: Vec<CellReport>,
}

/// Summary statistic laid out as a λ_T × λ_NT table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    RelativeBias,
    SignedBias,
    Cv,
    Failures,
}

impl StudyReport {
    pub fn cell(&self, estimator: &str, lambda_target: f64, lambda_nontarget: f64) -> Option<&CellReport> {
        self.cells.iter().find(|c| {
            c.estimator == estimator && c.lambda_target == lambda_target && c.lambda_nontarget == lambda_nontarget
        })
    }

    pub fn estimator_labels(&self) -> Vec<String> {
        self.grid.estimators.iter().map(StudyEstimator::label).collect()
    }

    /// Rows follow `lambda_target`, columns `lambda_nontarget`.
    pub fn table(&self, estimator: &str, metric: Metric) -> Vec<Vec<Option<f64>>> {
        self.grid
            .lambda_target
            .iter()
            .map(|&lt| {
                self.grid
                    .lambda_nontarget
                    .iter()
                    .map(|&lnt| {
                        self.cell(estimator, lt, lnt).and_then(|c| match metric {
                            Metric::RelativeBias => Some(c.relative_bias_pct),
                            Metric::SignedBias => Some(c.signed_bias_pct),
                            Metric::Cv => c.cv_pct,
                            Metric::Failures => Some(c.failures as f64),
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// Delimited table with one row per λ_T and one column per λ_NT.
    pub fn table_csv(&self, estimator: &str, metric: Metric) -> String {
        let mut out = String::from("lambda_target");
        for lnt in &self.grid.lambda_nontarget {
            out.push_str(&format!(",lambda_nt={lnt:e}"));
        }
        out.push('\n');
        for (lt, row) in self.grid.lambda_target.iter().zip(self.table(estimator, metric)) {
            out.push_str(&format!("{lt:e}"));
            for v in row {
                match v {
                    Some(v) => out.push_str(&format!(",{v:.1}")),
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Long-format table with every statistic of every cell.
    pub fn cells_csv(&self) -> String {
        let mut out = String::from(
            "estimator,lambda_target,lambda_nontarget,used,failures,flagged,mean,sd,relative_bias_pct,signed_bias_pct,cv_pct,expected_catch,asymptotic_cv_pct,failure_flag\n",
        );
        let opt = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.4}"));
        for c in &self.cells {
            out.push_str(&format!(
                "{},{:e},{:e},{},{},{},{:e},{:e},{:.4},{:.4},{},{:.4},{},{}\n",
                c.estimator,
                c.lambda_target,
                c.lambda_nontarget,
                c.used,
                c.failures,
                c.flagged,
                c.mean,
                c.sd,
                c.relative_bias_pct,
                c.signed_bias_pct,
                opt(c.cv_pct),
                c.expected_catch,
                opt(c.asymptotic_cv_pct),
                c.failure_flag
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One estimator fit on one replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Estimate { value: f64, flagged: bool },
    Failed,
}

fn fit_estimator(ds: &crate::data::Dataset, e: &StudyEstimator, optimizer: &OptimizerConfig) -> Outcome {
    let result = if e.numeric {
        let model = NumericModel::from_method(e.method).expect("validated");
        fit_numeric(ds, model, optimizer)
    } else {
        fit_closed_form(ds, e.method, DEFAULT_SOAK_TOLERANCE)
    };
    match result {
        Ok(r) => Outcome::Estimate {
            value: r.lambda_target,
            flagged: r.is_degenerate(),
        },
        Err(_) => Outcome::Failed,
    }
}

fn asymptotic_cv(grid: &StudyGrid, e: &StudyEstimator, lt: f64, lnt: f64) -> Option<f64> {
    let n = (grid.n_hooks * grid.n_sets as u64) as f64;
    let (pt, pnt) = grid.scenario.escapes();
    let cov = match e.method {
        Method::Mem1 | Method::Sem1 | Method::Sem2 if pt == 0.0 => asymptotic_cov_mem1(lt, lnt, pnt, n, grid.soak).ok()?,
        Method::Mem2 if pt == pnt => asymptotic_cov_mem2(lt, lnt, pnt, n, grid.soak).ok()?,
        _ => return None,
    };
    Some(100.0 * cov.get(0, 0).sqrt() / lt)
}

fn summarize_cell(grid: &StudyGrid, e: &StudyEstimator, lt: f64, lnt: f64, outcomes: &[Outcome]) -> CellReport {
    let values: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| match o {
            Outcome::Estimate { value, .. } => Some(*value),
            Outcome::Failed => None,
        })
        .collect();
    let failures = outcomes.len() - values.len();
    let flagged = outcomes
        .iter()
        .filter(|o| matches!(o, Outcome::Estimate { flagged: true, .. }))
        .count();
    let (mean, sd) = if values.is_empty() { (f64::NAN, f64::NAN) } else { mean_sd(&values) };
    CellReport {
        estimator: e.label(),
        lambda_target: lt,
        lambda_nontarget: lnt,
        failures,
        flagged,
        used: values.len(),
        mean,
        sd,
        relative_bias_pct: 100.0 * (lt - mean).abs() / lt,
        signed_bias_pct: 100.0 * (mean - lt) / lt,
        cv_pct: (mean != 0.0 && !values.is_empty()).then(|| 100.0 * sd / mean),
        expected_catch: expected_target_catch(lt, lnt, grid.n_hooks as f64, grid.n_sets as f64, grid.soak),
        asymptotic_cv_pct: asymptotic_cv(grid, e, lt, lnt),
        failure_flag: failures as f64 > FAILURE_FLAG_SHARE * outcomes.len() as f64,
        values: grid.keep_replicates.then_some(values),
    }
}

fn report_notes(grid: &StudyGrid) -> Vec<String> {
    let (pt, pnt) = grid.scenario.escapes();
    let mut notes = vec![
        format!(
            "scenario {}: p_T = {pt}, p_NT = {pnt}; N = {}, L = {}, S = {} min, {} replicates, seed {}",
            grid.scenario, grid.n_hooks, grid.n_sets, grid.soak, grid.replicates, grid.seed
        ),
        "relative bias = |lambda_T - mean(estimates)| / lambda_T; failed fits are excluded and counted".to_string(),
    ];
    if let Ok(c) = asymptotic_cov_mem1(1e-5, 5e-4, 0.0, 4400.0, 120.0) {
        notes.push(format!(
            "soak time 120 min: the asymptotic MEM1 CV at lambda_T = 1e-5, lambda_NT = 5e-4, N*L = 4400 is {:.1}%, matching the published 43.2%",
            100.0 * c.get(0, 0).sqrt() / 1e-5
        ));
    }
    notes
}

/// Runs every cell of the grid.
pub fn run_study(grid: &StudyGrid) -> Result<StudyReport, EstimateError> {
    grid.validate()?;
    let cells = grid.cells();
    let k = grid.estimators.len();
    let jobs = cells.len() * grid.replicates;
    let outcomes: Vec<Vec<Outcome>> = map_indices(jobs, |job| {
        let (i, j) = cells[job / grid.replicates];
        let r = job % grid.replicates;
        let ds = simulate_dataset(&grid.scenario_for(i, j), r).dataset;
        grid.estimators.iter().map(|e| fit_estimator(&ds, e, &grid.optimizer)).collect()
    });
    let mut reports = Vec::with_capacity(cells.len() * k);
    for (c, &(i, j)) in cells.iter().enumerate() {
        let block = &outcomes[c * grid.replicates..(c + 1) * grid.replicates];
        for (e_idx, e) in grid.estimators.iter().enumerate() {
            let col: Vec<Outcome> = block.iter().map(|row| row[e_idx]).collect();
            reports.push(summarize_cell(grid, e, grid.lambda_target[i], grid.lambda_nontarget[j], &col));
        }
    }
    Ok(StudyReport {
        grid: grid.clone(),
        notes: report_notes(grid),
        cells: reports,
    })
}

/// Closed-form against numerical estimates of λ_T in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementCell {
    pub estimator: String,
    pub lambda_target: f64,
    pub lambda_nontarget: f64,
    /// Replicates where both fits produced a positive closed-form index.
    pub compared: usize,
    /// Replicates skipped because a fit failed or the closed-form index was zero.
    pub skipped: usize,
    /// Numerical fits flagged degenerate, among the compared replicates.
    pub flagged: usize,
    pub mean_difference: f64,
    pub median_difference: f64,
    pub p95_difference: f64,
    pub max_difference: f64,
    /// Share of compared replicates with relative difference below 5%.
    pub share_below_5pct: f64,
}

/// Relative differences `|numeric - closed| / closed` of λ̂_T on shared datasets.
/// Only estimators with a numerical fit are compared; the grid must have constant
/// soak time and hook count, which simulated grids always do.
pub fn analytic_vs_numeric(grid: &StudyGrid) -> Result<Vec<AgreementCell>, EstimateError> {
    grid.validate()?;
    let methods: Vec<Method> = grid
        .estimators
        .iter()
        .map(|e| e.method)
        .filter(|m| NumericModel::from_method(*m).is_some())
        .fold(Vec::new(), |mut acc, m| {
            if !acc.contains(&m) {
                acc.push(m);
            }
            acc
        });
    if methods.is_empty() {
        return Err(EstimateError::Domain("no estimator with a numerical fit requested".into()));
    }
    let cells = grid.cells();
    let jobs = cells.len() * grid.replicates;
    let pairs: Vec<Vec<Option<(f64, bool)>>> = map_indices(jobs, |job| {
        let (i, j) = cells[job / grid.replicates];
        let ds = simulate_dataset(&grid.scenario_for(i, j), job % grid.replicates).dataset;
        methods
            .iter()
            .map(|&m| {
                let closed = fit_closed_form(&ds, m, DEFAULT_SOAK_TOLERANCE).ok()?;
                if closed.lambda_target <= 0.0 {
                    return None;
                }
                let numeric = fit_numeric(&ds, NumericModel::from_method(m)?, &grid.optimizer).ok()?;
                let d = (numeric.lambda_target - closed.lambda_target).abs() / closed.lambda_target;
                Some((d, numeric.is_degenerate()))
            })
            .collect()
    });
    let mut out = Vec::new();
    for (c, &(i, j)) in cells.iter().enumerate() {
        let block = &pairs[c * grid.replicates..(c + 1) * grid.replicates];
        for (m_idx, m) in methods.iter().enumerate() {
            let got: Vec<(f64, bool)> = block.iter().filter_map(|row| row[m_idx]).collect();
            let mut d: Vec<f64> = got.iter().map(|x| x.0).collect();
            d.sort_by(f64::total_cmp);
            let n = d.len();
            let stat = |f: &dyn Fn(&[f64]) -> f64| if n == 0 { f64::NAN } else { f(&d) };
            out.push(AgreementCell {
                estimator: m.to_string(),
                lambda_target: grid.lambda_target[i],
                lambda_nontarget: grid.lambda_nontarget[j],
                compared: n,
                skipped: grid.replicates - n,
                flagged: got.iter().filter(|x| x.1).count(),
                mean_difference: stat(&|v| v.iter().sum::<f64>() / v.len() as f64),
                median_difference: stat(&|v| quantile_sorted(v, 0.5)),
                p95_difference: stat(&|v| quantile_sorted(v, 0.95)),
                max_difference: stat(&|v| v[v.len() - 1]),
                share_below_5pct: if n == 0 { f64::NAN } else { d.iter().filter(|&&x| x < 0.05).count() as f64 / n as f64 },
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpueBiasPoint {
    pub lambda_nontarget: f64,
    /// Simulated relative bias of CPUE as an estimate of λ_T, in percent.
    pub simulated_pct: f64,
    /// `1 - (1 - e^{-λS}) / (λS)`, in percent.
    pub expected_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpueBiasRow {
    pub lambda_target: f64,
    pub points: Vec<CpueBiasPoint>,
    pub increasing: bool,
}

/// CPUE bias as a function of λ_NT for every λ_T row of a no-escape grid.
pub fn cpue_bias_curve(grid: &StudyGrid) -> Result<Vec<CpueBiasRow>, EstimateError> {
    if grid.scenario != EscapeScenario::Sc1 {
        return Err(EstimateError::Domain("the CPUE bias curve is defined on the no-escape scenario".into()));
    }
    let cpue_grid = StudyGrid {
        estimators: vec![StudyEstimator::closed(Method::Cpue)],
        keep_replicates: false,
        ..grid.clone()
    };
    let report = run_study(&cpue_grid)?;
    Ok(grid
        .lambda_target
        .iter()
        .map(|&lt| {
            let points: Vec<CpueBiasPoint> = grid
                .lambda_nontarget
                .iter()
                .map(|&lnt| {
                    let c = report.cell("CPUE", lt, lnt).expect("cell present");
                    CpueBiasPoint {
                        lambda_nontarget: lnt,
                        simulated_pct: c.relative_bias_pct,
                        expected_pct: 100.0 * (1.0 - expected_cpue(lt, lt + lnt, grid.soak) / lt),
                    }
                })
                .collect();
            let increasing = points.windows(2).all(|w| w[1].simulated_pct > w[0].simulated_pct);
            CpueBiasRow {
                lambda_target: lt,
                points,
                increasing,
            }
        })
        .collect())
}
