//! WebAssembly bindings for the browser demo in `www/`. Every function returns a
//! JSON document.

use longline::data::PooledCounts;
use longline::indices::{expected_counts, fit_closed_form, fit_mem1, fit_mem2, Method};
use longline::sim::{simulate_dataset, Scenario};
use longline::uncertainty::mean_sd;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Hooks used to turn expected cell probabilities into counts.
const LARGE_N: f64 = 1e9;
const MAX_REPLICATES: usize = 5000;
const DEMO_METHODS: [Method; 4] = [Method::Cpue, Method::Mem1, Method::Mem2, Method::Sem1];

fn to_js(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("demo output serializes")
}

#[derive(Serialize)]
struct CurvePoint {
    lambda_nontarget: f64,
    cpue: f64,
    mem1: f64,
    mem2: f64,
}

/// Large-sample limit of CPUE, MEM1 and MEM2 divided by the true λ_T, for
/// `n_points` values of λ_NT spread log-uniformly over [1e-4, 1e-1].
#[wasm_bindgen]
pub fn expected_index_curves(lambda_target: f64, p_target: f64, p_nontarget: f64, soak: f64, n_points: usize) -> Result<String, JsValue> {
    let n_points = n_points.clamp(2, 400);
    let mut points = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let lnt = 10f64.powf(-4.0 + 3.0 * k as f64 / (n_points - 1) as f64);
        let cells = expected_counts(lambda_target, lnt, p_target, p_nontarget, LARGE_N, soak).map_err(to_js)?;
        let [b, t, nt, e] = cells.map(|c| c.round() as u64);
        let pooled = PooledCounts::from_outcomes(b, t, nt, e, soak, 1).map_err(to_js)?;
        points.push(CurvePoint {
            lambda_nontarget: lnt,
            cpue: cells[1] / (LARGE_N * soak) / lambda_target,
            mem1: fit_mem1(&pooled).map_err(to_js)?.lambda_target / lambda_target,
            mem2: fit_mem2(&pooled).map_err(to_js)?.lambda_target / lambda_target,
        });
    }
    Ok(json(&points))
}

fn scenario(lt: f64, lnt: f64, pt: f64, pnt: f64, hooks: u32, sets: u32, soak: f64, seed: u64) -> Result<Scenario, JsValue> {
    let sc = Scenario {
        lambda_target: lt,
        lambda_nontarget: lnt,
        p_target: pt,
        p_nontarget: pnt,
        n_hooks: hooks as u64,
        n_sets: sets as usize,
        soak,
        replicates: 1,
        seed,
        label: String::new(),
    };
    sc.validate().map_err(to_js)?;
    Ok(sc)
}

#[derive(Serialize)]
struct Fit {
    method: String,
    lambda_target: Option<f64>,
    se: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SimulatedFit {
    /// Pooled `[baited, target, non-target, empty]`.
    counts: [u64; 4],
    escaped_target: u64,
    escaped_nontarget: u64,
    fits: Vec<Fit>,
}

/// Simulates one survey and fits every demo method to it.
#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn simulate_fit(
    lambda_target: f64,
    lambda_nontarget: f64,
    p_target: f64,
    p_nontarget: f64,
    hooks: u32,
    sets: u32,
    soak: f64,
    seed: u64,
) -> Result<String, JsValue> {
    let sc = scenario(lambda_target, lambda_nontarget, p_target, p_nontarget, hooks, sets, soak, seed)?;
    let sim = simulate_dataset(&sc, 0);
    let mut counts = [0u64; 4];
    for r in sim.dataset.records() {
        for (c, v) in counts.iter_mut().zip(r.outcome_counts()) {
            *c += v;
        }
    }
    let fits = DEMO_METHODS
        .iter()
        .map(|&m| match fit_closed_form(&sim.dataset, m, 0.0) {
            Ok(est) => Fit {
                method: m.to_string(),
                lambda_target: Some(est.lambda_target),
                se: est.covariance.as_ref().map(|c| c.std_errors()[0]),
                error: None,
            },
            Err(e) => Fit { method: m.to_string(), lambda_target: None, se: None, error: Some(e.to_string()) },
        })
        .collect();
    Ok(json(&SimulatedFit {
        counts,
        escaped_target: sim.truth.iter().map(|t| t.n_escaped_target).sum(),
        escaped_nontarget: sim.truth.iter().map(|t| t.n_escaped_nontarget).sum(),
        fits,
    }))
}

#[derive(Serialize)]
struct Distribution {
    method: String,
    /// Relative estimates `λ̂_T / λ_T` of the usable replicates.
    values: Vec<f64>,
    failures: usize,
    mean: f64,
    sd: f64,
}

/// Relative estimates of λ_T over `replicates` simulated surveys.
#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn sampling_distribution(
    lambda_target: f64,
    lambda_nontarget: f64,
    p_target: f64,
    p_nontarget: f64,
    hooks: u32,
    sets: u32,
    soak: f64,
    replicates: u32,
    seed: u64,
) -> Result<String, JsValue> {
    let sc = scenario(lambda_target, lambda_nontarget, p_target, p_nontarget, hooks, sets, soak, seed)?;
    let replicates = (replicates as usize).clamp(1, MAX_REPLICATES);
    let mut values = vec![Vec::with_capacity(replicates); DEMO_METHODS.len()];
    let mut failures = [0usize; DEMO_METHODS.len()];
    for r in 0..replicates {
        let ds = simulate_dataset(&sc, r).dataset;
        for (k, &m) in DEMO_METHODS.iter().enumerate() {
            match fit_closed_form(&ds, m, 0.0) {
                Ok(est) => values[k].push(est.lambda_target / lambda_target),
                Err(_) => failures[k] += 1,
            }
        }
    }
    let out: Vec<Distribution> = DEMO_METHODS
        .iter()
        .zip(values)
        .zip(failures)
        .map(|((m, values), failures)| {
            let (mean, sd) = if values.is_empty() { (f64::NAN, f64::NAN) } else { mean_sd(&values) };
            Distribution { method: m.to_string(), values, failures, mean, sd }
        })
        .collect();
    Ok(json(&out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_match_closed_form_limits() {
        let doc: serde_json::Value =
            serde_json::from_str(&expected_index_curves(5e-4, 0.0, 0.0, 120.0, 10).unwrap()).unwrap();
        let points = doc.as_array().unwrap();
        assert_eq!(points.len(), 10);
        for p in points {
            // Without escape MEM1 and MEM2 are consistent; CPUE falls short.
            assert!((p["mem1"].as_f64().unwrap() - 1.0).abs() < 1e-5);
            assert!((p["mem2"].as_f64().unwrap() - 1.0).abs() < 1e-5);
            assert!(p["cpue"].as_f64().unwrap() < 1.0);
        }
    }

    #[test]
    fn simulation_is_seeded() {
        let a = simulate_fit(5e-4, 1e-3, 0.2, 0.2, 220, 20, 120.0, 3).unwrap();
        let b = simulate_fit(5e-4, 1e-3, 0.2, 0.2, 220, 20, 120.0, 3).unwrap();
        assert_eq!(a, b);
        let doc: serde_json::Value = serde_json::from_str(&a).unwrap();
        let total: u64 = doc["counts"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum();
        assert_eq!(total, 220 * 20);
        assert_eq!(doc["fits"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn sampling_distribution_reports_every_method() {
        let doc: serde_json::Value =
            serde_json::from_str(&sampling_distribution(5e-4, 5e-4, 0.0, 0.0, 220, 20, 120.0, 200, 1).unwrap()).unwrap();
        for d in doc.as_array().unwrap() {
            assert_eq!(d["values"].as_array().unwrap().len() + d["failures"].as_u64().unwrap() as usize, 200);
        }
        let mem1 = &doc[1];
        assert!((mem1["mean"].as_f64().unwrap() - 1.0).abs() < 0.03);
    }
}
