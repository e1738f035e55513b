//! Acceptance criteria with pinned tolerances. Each test writes one PASS/FAIL line to
//! stderr (bypassing the test harness capture) before asserting.

use std::io::Write as _;
use std::sync::OnceLock;

use longline::bayes::{effective_sample_size, sample_posterior, BayesModel, McmcConfig, PriorSpec};
use longline::data::{pool, Dataset, SetRecord};
use longline::indices::{fit_mem1, fit_mem2, Method};
use longline::likelihood::mem_loglik;
use longline::numeric::{fit_numeric, NumericModel, OptimizerConfig};
use longline::sim::{simulate_dataset, Scenario};
use longline::study::{analytic_vs_numeric, run_study, EscapeScenario, StudyEstimator, StudyGrid, StudyReport};
use longline::uncertainty::{asymptotic_cov_mem1, asymptotic_cov_mem2, bootstrap, BootstrapConfig};
use longline::EstimateResult;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Beta, Continuous};

#[path = "../../core/tests/common/mod.rs"]
mod common;
use common::{compositions, fd_fisher_inverse, full, max_relative_difference, one_set, ridge_point};

const LAMBDA_T: [f64; 4] = [1e-5, 5e-5, 1e-4, 5e-4];
const LAMBDA_NT: [f64; 4] = [5e-4, 1e-3, 5e-3, 1e-2];
/// Published CV (%) of λ̂_T for the no-escape grid, rows λ_T, columns λ_NT.
const PUBLISHED_CV: [[f64; 4]; 4] = [
    [43.2, 44.8, 50.9, 56.7],
    [19.5, 20.1, 22.2, 25.3],
    [13.8, 14.4, 15.9, 17.9],
    [6.2, 6.4, 7.4, 8.1],
];
/// Escape-scenario studies use more replicates than the no-escape grid so that the
/// Monte Carlo error of the bias is well below the tolerances.
const ESCAPE_REPLICATES: usize = 20_000;

fn report(id: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance criterion {id:>2}: {verdict} | {detail}");
}

fn study(scenario: EscapeScenario, replicates: usize) -> StudyReport {
    let grid = StudyGrid {
        scenario,
        replicates,
        estimators: [Method::Cpue, Method::Mem1, Method::Mem2, Method::Sem1]
            .into_iter()
            .map(StudyEstimator::closed)
            .collect(),
        ..Default::default()
    };
    run_study(&grid).unwrap()
}

fn no_escape_study() -> &'static StudyReport {
    static REPORT: OnceLock<StudyReport> = OnceLock::new();
    REPORT.get_or_init(|| study(EscapeScenario::Sc1, 5000))
}

fn cell_value(r: &StudyReport, est: &str, i: usize, j: usize, f: fn(&longline::study::CellReport) -> f64) -> f64 {
    f(r.cell(est, LAMBDA_T[i], LAMBDA_NT[j]).expect("cell present"))
}

#[test]
fn criterion_01_cv_table() {
    let r = no_escape_study();
    let mut worst: (f64, String) = (0.0, String::new());
    let mut pass = true;
    for est in ["MEM1", "MEM2", "SEM1"] {
        for i in 0..4 {
            for j in 0..4 {
                let cv = r.cell(est, LAMBDA_T[i], LAMBDA_NT[j]).unwrap().cv_pct.unwrap();
                let tol = if i == 0 { 4.0 } else { 2.0 };
                let d = (cv - PUBLISHED_CV[i][j]).abs();
                pass &= d <= tol;
                if d / tol > worst.0 {
                    worst = (d / tol, format!("{est} ({:e}, {:e}) {cv:.1} vs {}", LAMBDA_T[i], LAMBDA_NT[j], PUBLISHED_CV[i][j]));
                }
            }
        }
    }
    report(1, pass, &format!("48 cells within tolerance; worst {} ({:.0}% of allowance)", worst.1, 100.0 * worst.0));
    assert!(pass);
}

#[test]
fn criterion_02_no_escape_bias() {
    let r = no_escape_study();
    let mut max_bias: f64 = 0.0;
    for est in ["MEM1", "MEM2", "SEM1"] {
        for i in 0..4 {
            for j in 0..4 {
                max_bias = max_bias.max(cell_value(r, est, i, j, |c| c.relative_bias_pct));
            }
        }
    }
    let rows: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| cell_value(r, "CPUE", i, j, |c| c.relative_bias_pct)).collect()).collect();
    let increasing = rows.iter().all(|row| row.windows(2).all(|w| w[1] > w[0]));
    let corner = rows[3][3];
    // Reference value 41.8% evaluates 1 - (1 - e^{-x}) / x at x = λ_NT S; the exact
    // expectation uses x = (λ_T + λ_NT) S.
    let reference = 41.8;
    let lambda_s: f64 = (5e-4 + 1e-2) * 120.0;
    let exact = 100.0 * (1.0 - (1.0 - (-lambda_s).exp()) / lambda_s);
    let pass = max_bias < 2.0 && increasing && corner > 40.0 && (corner - reference).abs() <= 3.0;
    report(
        2,
        pass,
        &format!(
            "max MEM/SEM bias {max_bias:.2}%; CPUE rows increasing: {increasing}; CPUE at (5e-4, 1e-2) {corner:.1}% vs reference {reference}% (exact expectation {exact:.1}%)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_equal_escape_bias() {
    let r = study(EscapeScenario::Sc2, ESCAPE_REPLICATES);
    let (mut lo, mut hi, mut mem2_max) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for i in 0..4 {
        for j in 0..4 {
            for est in ["MEM1", "SEM1"] {
                let b = cell_value(&r, est, i, j, |c| c.relative_bias_pct);
                lo = lo.min(b);
                hi = hi.max(b);
            }
            mem2_max = mem2_max.max(cell_value(&r, "MEM2", i, j, |c| c.relative_bias_pct));
        }
    }
    let pass = lo >= 18.0 && hi <= 22.0 && mem2_max < 2.0;
    report(3, pass, &format!("MEM1/SEM1 bias in [{lo:.2}, {hi:.2}]%; MEM2 max bias {mem2_max:.2}%"));
    assert!(pass);
}

#[test]
fn criterion_04_unequal_escape_bias() {
    let r = study(EscapeScenario::Sc3, ESCAPE_REPLICATES);
    let (mut lo, mut hi, mut spread) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    let mut non_monotone = Vec::new();
    for i in 0..4 {
        let mem1: Vec<f64> = (0..4).map(|j| cell_value(&r, "MEM1", i, j, |c| c.relative_bias_pct)).collect();
        lo = lo.min(mem1.iter().cloned().fold(f64::INFINITY, f64::min));
        hi = hi.max(mem1.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        spread = spread.max(mem1.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - mem1.iter().cloned().fold(f64::INFINITY, f64::min));
        let mem2: Vec<f64> = (0..4).map(|j| cell_value(&r, "MEM2", i, j, |c| c.relative_bias_pct)).collect();
        if !mem2.windows(2).all(|w| w[1] > w[0]) {
            non_monotone.push(format!("{:e}: {:.2?}", LAMBDA_T[i], mem2));
        }
    }
    let mem1_ok = lo >= 1.0 && hi <= 3.0 && spread < 2.0;
    let pass = mem1_ok && non_monotone.is_empty();
    report(
        4,
        pass,
        &format!(
            "MEM1 bias in [{lo:.2}, {hi:.2}]%, max row spread {spread:.2}; MEM2 rows not increasing: {}",
            if non_monotone.is_empty() { "none".to_string() } else { non_monotone.join("; ") }
        ),
    );
    assert!(pass);
}

/// Constant soak, two different hook counts per set.
fn mixed_hooks_dataset(seed: u64, p_target: f64) -> Dataset {
    let mut records = Vec::new();
    for (k, n_hooks) in [150u64, 260].into_iter().enumerate() {
        let sc = Scenario {
            lambda_target: 1e-3,
            lambda_nontarget: 2e-3,
            p_target,
            p_nontarget: 0.2,
            n_hooks,
            n_sets: 6,
            seed: seed * 2 + k as u64,
            ..Default::default()
        };
        for mut r in simulate_dataset(&sc, 0).dataset.into_records() {
            r.set_id = format!("{n_hooks}-{}", r.set_id);
            records.push(r);
        }
    }
    Dataset::new(records).unwrap()
}

fn parameters(r: &EstimateResult, mem2: bool) -> [f64; 3] {
    let p = if mem2 { r.p_target } else { r.p_nontarget };
    [r.lambda_target, r.lambda_nontarget.unwrap(), p.unwrap()]
}

#[test]
fn criterion_05_closed_form_against_numeric() {
    // Part 1: agreement on individual constant-soak fits.
    let mut worst: f64 = 0.0;
    for seed in 0..25 {
        for (mem2, model) in [(false, NumericModel::Mem1), (true, NumericModel::Mem2)] {
            let ds = mixed_hooks_dataset(seed, if mem2 { 0.2 } else { 0.0 });
            let pooled = pool(&ds, 0.0).unwrap();
            let closed = if mem2 { fit_mem2(&pooled) } else { fit_mem1(&pooled) }.unwrap();
            let numeric = fit_numeric(&ds, model, &OptimizerConfig::default()).unwrap();
            for (a, b) in parameters(&closed, mem2).iter().zip(parameters(&numeric, mem2)) {
                worst = worst.max((a - b).abs() / a.abs());
            }
        }
    }
    let part1 = worst < 1e-6;

    // Part 2: the no-escape grid, numeric fit started from CPUE rates.
    let grid = StudyGrid {
        replicates: 5000,
        estimators: vec![StudyEstimator::closed(Method::Mem1)],
        ..Default::default()
    };
    let cells = analytic_vs_numeric(&grid).unwrap();
    let mut min_share: f64 = 1.0;
    let mut part2 = true;
    let mut extreme = String::new();
    for c in &cells {
        if c.lambda_target == 1e-5 && c.lambda_nontarget == 1e-2 {
            let majority = 2 * c.flagged > c.compared;
            let in_band = (0.10..=0.40).contains(&c.mean_difference);
            part2 &= majority && in_band;
            extreme = format!(
                "extreme cell mean difference {:.2e} (expected 0.10-0.40), flagged {}/{}",
                c.mean_difference, c.flagged, c.compared
            );
        } else {
            min_share = min_share.min(c.share_below_5pct);
            part2 &= c.share_below_5pct >= 0.95;
        }
    }
    let pass = part1 && part2;
    report(
        5,
        pass,
        &format!("max per-fit relative difference {worst:.1e}; min share below 5% {min_share:.3}; {extreme}"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_likelihood_normalization() {
    let points = [
        full(5e-3, 1e-2, 0.2, 0.3),
        full(2e-3, 3e-3, 1e-9, 1.0 - 1e-9),
        full(0.2, 0.3, 0.1, 0.4),
    ];
    let mut worst: f64 = 0.0;
    for params in points {
        for n in 1..=6u64 {
            let total: f64 = compositions(n)
                .iter()
                .map(|&c| mem_loglik(&params, &one_set(c, 120.0)).unwrap().exp())
                .sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    let pass = worst < 1e-10;
    report(6, pass, &format!("max |sum - 1| over 3 points, N <= 6: {worst:.1e}"));
    assert!(pass);
}

fn empirical_covariance(rows: &[[f64; 3]]) -> DMatrix<f64> {
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..3).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
    DMatrix::from_fn(3, 3, |i, j| rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1.0))
}

/// Diagonal entries relative; off-diagonals relative when the asymptotic correlation is
/// at least 0.3 in magnitude, otherwise on the correlation scale.
fn covariance_discrepancy(empirical: &DMatrix<f64>, asymptotic: &DMatrix<f64>) -> (f64, f64) {
    let (mut rel, mut corr): (f64, f64) = (0.0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            let (e, a) = (empirical[(i, j)], asymptotic[(i, j)]);
            let scale = (asymptotic[(i, i)] * asymptotic[(j, j)]).sqrt();
            if i == j || (a / scale).abs() >= 0.3 {
                rel = rel.max(((e - a) / a).abs());
            } else {
                let es = (empirical[(i, i)] * empirical[(j, j)]).sqrt();
                corr = corr.max((e / es - a / scale).abs());
            }
        }
    }
    (rel, corr)
}

#[test]
fn criterion_07_covariance() {
    let (n, s) = (4400.0, 120.0);
    let points = [[5e-4, 5e-4, 0.2], [1e-3, 1e-2, 0.5], [1e-4, 5e-3, 0.05]];
    let mut fisher: f64 = 0.0;
    for th in points {
        fisher = fisher.max(max_relative_difference(
            &asymptotic_cov_mem1(th[0], th[1], th[2], n, s).unwrap().to_matrix(),
            &fd_fisher_inverse(th, false, n, s),
        ));
        fisher = fisher.max(max_relative_difference(
            &asymptotic_cov_mem2(th[0], th[1], th[2], n, s).unwrap().to_matrix(),
            &fd_fisher_inverse(th, true, n, s),
        ));
    }

    let (mut rel, mut corr): (f64, f64) = (0.0, 0.0);
    for mem2 in [false, true] {
        let sc = Scenario {
            lambda_target: 5e-4,
            lambda_nontarget: 1e-3,
            p_target: if mem2 { 0.2 } else { 0.0 },
            p_nontarget: 0.2,
            seed: 77,
            ..Default::default()
        };
        let rows: Vec<[f64; 3]> = (0..5000)
            .map(|r| {
                let pooled = pool(&simulate_dataset(&sc, r).dataset, 0.0).unwrap();
                let fit = if mem2 { fit_mem2(&pooled) } else { fit_mem1(&pooled) }.unwrap();
                parameters(&fit, mem2)
            })
            .collect();
        let asym = if mem2 {
            asymptotic_cov_mem2(5e-4, 1e-3, 0.2, n, s)
        } else {
            asymptotic_cov_mem1(5e-4, 1e-3, 0.2, n, s)
        }
        .unwrap()
        .to_matrix();
        let (r, c) = covariance_discrepancy(&empirical_covariance(&rows), &asym);
        rel = rel.max(r);
        corr = corr.max(c);
    }
    let pass = fisher < 1e-3 && rel < 0.10 && corr < 0.1;
    report(
        7,
        pass,
        &format!("closed form vs FD Fisher {fisher:.1e}; vs empirical (5000 reps) {:.1}% relative, {corr:.3} correlation", 100.0 * rel),
    );
    assert!(pass);
}

/// Forward map from ridge coordinates `(λ, α, β, q)` to native parameters.
fn native_of(x: [f64; 4]) -> [f64; 4] {
    ridge_point(x[0], x[1], x[2], x[3])
}

/// `|det ∂native/∂(λ, α, β, q)|` by central differences.
fn jacobian_det(x: [f64; 4]) -> f64 {
    let mut j = DMatrix::zeros(4, 4);
    for c in 0..4 {
        let h = 1e-6 * x[c];
        let (mut up, mut down) = (x, x);
        up[c] += h;
        down[c] -= h;
        let (a, b) = (native_of(up), native_of(down));
        for r in 0..4 {
            j[(r, c)] = (a[r] - b[r]) / (2.0 * h);
        }
    }
    j.determinant().abs()
}

/// Draws `p_T` from its conditional prior given the regular-form point by rejection
/// from a uniform proposal on `(0, q_max)`.
fn conditional_prior_draw(lambda: f64, alpha: f64, beta: f64, priors: &[Beta; 4], rng: &mut ChaCha8Rng) -> f64 {
    let q_max = (1.0 - alpha - beta) / (1.0 - beta);
    let density = |q: f64| {
        let native = native_of([lambda, alpha, beta, q]);
        if native.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return 0.0;
        }
        native.iter().zip(priors).map(|(v, b)| b.pdf(*v)).product::<f64>() * jacobian_det([lambda, alpha, beta, q])
    };
    let envelope = 1.1 * (1..2000).map(|k| density(q_max * k as f64 / 2000.0)).fold(0.0, f64::max);
    loop {
        let q = q_max * rng.random::<f64>();
        if rng.random::<f64>() * envelope < density(q) {
            return q;
        }
    }
}

fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn criterion_08_identifiability() {
    let ds = Dataset::new(vec![
        SetRecord::new("a", 220, 120, 30, 55, 15, 0, 120.0).unwrap(),
        SetRecord::new("b", 220, 101, 41, 60, 18, 0, 120.0).unwrap(),
    ])
    .unwrap();
    let (lambda, alpha, beta) = (5e-3, 0.3, 0.45);
    let q_max = (1.0 - alpha - beta) / (1.0 - beta);
    let path: Vec<f64> = (0..10)
        .map(|k| {
            let [lt, lnt, pt, pnt] = ridge_point(lambda, alpha, beta, q_max * (0.03 + 0.94 * k as f64 / 9.0));
            mem_loglik(&full(lt, lnt, pt, pnt), &ds).unwrap()
        })
        .collect();
    let drift = path.iter().map(|v| (v - path[0]).abs()).fold(0.0, f64::max);

    let sc = Scenario {
        lambda_target: 1e-3,
        lambda_nontarget: 2e-3,
        p_target: 0.1,
        p_nontarget: 0.2,
        n_hooks: 100,
        n_sets: 5,
        seed: 31,
        ..Default::default()
    };
    let data = simulate_dataset(&sc, 0).dataset;
    let prior = PriorSpec::default();
    let cfg = McmcConfig { chains: 4, draws: 10_000, burn_in: 2000, seed: 5, ..Default::default() };
    let sample = sample_posterior(&data, BayesModel::Full, &prior, &cfg).unwrap();
    let pt_chains = sample.parameter("p_target").unwrap();
    let ess = effective_sample_size(pt_chains).unwrap();
    let total = sample.n_chains() * sample.n_kept();
    let step = ((total as f64 / ess).ceil() as usize).max(1);
    let betas = [prior.lambda_target, prior.lambda_nontarget, prior.p, prior.p].map(|b| Beta::new(b.a, b.b).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut posterior, mut oracle) = (Vec::new(), Vec::new());
    for c in 0..sample.n_chains() {
        for i in (0..sample.n_kept()).step_by(step) {
            let [lt, lnt, pt, pnt]: [f64; 4] = sample.draw(c, i).try_into().unwrap();
            let l = lt + lnt;
            posterior.push(pt);
            oracle.push(conditional_prior_draw(l, lt * (1.0 - pt) / l, lnt * (1.0 - pnt) / l, &betas, &mut rng));
        }
    }
    let (n, m) = (posterior.len() as f64, oracle.len() as f64);
    let d = ks_two_sample(&posterior, &oracle);
    let critical = 1.6276 * ((n + m) / (n * m)).sqrt();
    let pass = drift < 1e-12 && d < critical;
    report(
        8,
        pass,
        &format!("log-lik drift along ridge {drift:.1e}; KS p_T posterior vs conditional prior {d:.3} < {critical:.3} (n = {n})"),
    );
    assert!(pass);
}

#[test]
fn criterion_09_bootstrap() {
    let sc = Scenario { lambda_target: 5e-4, lambda_nontarget: 5e-4, seed: 4242, ..Default::default() };
    let ds = simulate_dataset(&sc, 0).dataset;
    let cfg = BootstrapConfig { replicates: 2000, seed: 9, ..Default::default() };
    let a = bootstrap(&ds, Method::Mem1, &cfg).unwrap();
    let b = bootstrap(&ds, Method::Mem1, &cfg).unwrap();
    let deterministic = a == b;
    let cv = 100.0 * a.cv().unwrap();

    let outer = 1000;
    let covered = (0..outer)
        .filter(|&r| {
            let ds = simulate_dataset(&sc, r + 1).dataset;
            let s = bootstrap(&ds, Method::Mem1, &BootstrapConfig { replicates: 1000, seed: r as u64, ..Default::default() })
                .unwrap();
            s.lambda_target.lower <= 5e-4 && 5e-4 <= s.lambda_target.upper
        })
        .count();
    let coverage = covered as f64 / outer as f64;
    let pass = deterministic && (cv - 6.2).abs() <= 1.5 && (0.90..=0.98).contains(&coverage);
    report(
        9,
        pass,
        &format!("deterministic: {deterministic}; bootstrap CV {cv:.2}%; 95% interval coverage {:.1}% over {outer} datasets", 100.0 * coverage),
    );
    assert!(pass);
}

fn cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = longline_cli::run_with(std::iter::once("longline").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn read_json(path: &std::path::Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// `(year, method) -> result` for every group of an estimate report.
fn results_by_year(report: &serde_json::Value) -> std::collections::BTreeMap<(i64, String), serde_json::Value> {
    let mut out = std::collections::BTreeMap::new();
    for g in report["groups"].as_array().unwrap() {
        for r in g["results"].as_array().unwrap() {
            out.insert((g["year"].as_i64().unwrap(), r["method"].as_str().unwrap().to_string()), r.clone());
        }
    }
    out
}

#[test]
fn criterion_10_synthetic_survey_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let bundled = concat!(env!("CARGO_MANIFEST_DIR"), "/data/synthetic_survey.csv");

    let (code, _) = cli(&["synthetic", "--out", &p("regenerated.csv")]);
    let regenerates = code == 0 && std::fs::read(bundled).unwrap() == std::fs::read(p("regenerated.csv")).unwrap();

    let boot = ["--bootstrap", "1000", "--seed", "11"];
    let (code13, stdout13) = cli(&[&["estimate", bundled, "--area", "13", "--out", &p("area13.json")][..], &boot].concat());
    let (code_pool, _) = cli(&[&["estimate", bundled, "--pool", "areas", "--out", &p("pooled.json")][..], &boot].concat());
    let single = results_by_year(&read_json(dir.path().join("area13.json").as_path()));
    let pooled = results_by_year(&read_json(dir.path().join("pooled.json").as_path()));

    let years = [2003, 2004, 2007];
    let methods = ["CPUE", "MEM1", "MEM2", "SEM1"];
    let table_complete = code13 == 0
        && stdout13.contains("Index series, area 13")
        && years
            .iter()
            .all(|&y| methods.iter().all(|m| single.get(&(y, m.to_string())).is_some_and(|r| !r["estimate"].is_null())));

    let cv = |r: &serde_json::Value| r["bootstrap"]["lambda_target"]["cv"].as_f64();
    let mut ratios = Vec::new();
    for y in years {
        for m in methods {
            let key = (y, m.to_string());
            ratios.push(match (single.get(&key).and_then(cv), pooled.get(&key).and_then(cv)) {
                (Some(a), Some(b)) => b / a,
                _ => f64::NAN,
            });
        }
    }
    let pooled_lower = code_pool == 0 && ratios.iter().all(|r| *r < 1.0);
    let worst_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let (code_sem, _) = cli(&[
        "estimate", bundled, "--area", "13", "--method", "sem1", "--numeric", "always", "--out", &p("sem.json"),
    ]);
    let sem = results_by_year(&read_json(dir.path().join("sem.json").as_path()));
    let status = |y: i64| sem[&(y, "SEM1".to_string())]["status"].as_str().unwrap().to_string();
    let sparse_flagged = code_sem == 0 && status(2007) == "flagged";
    let manifests = ["area13.json", "pooled.json", "sem.json"]
        .iter()
        .all(|f| dir.path().join(format!("{f}.manifest.json")).exists());

    let pass = regenerates && table_complete && pooled_lower && sparse_flagged && manifests;
    report(
        10,
        pass,
        &format!(
            "bundled data regenerates: {regenerates}; 4-index x 3-year table: {table_complete}; \
             pooled/area-13 bootstrap CV ratio max {worst_ratio:.2} over 12 year-method pairs; \
             numeric SEM on 2007 area 13: {} (2003: {}, 2004: {}); manifests: {manifests}",
            status(2007),
            status(2003),
            status(2004)
        ),
    );
    assert!(pass);
}
