//! Oracles shared by the integration test targets.
#![allow(dead_code)]

use longline::data::{Dataset, SetRecord};
use longline::likelihood::MemParams;
use nalgebra::DMatrix;

pub fn one_set(counts: [u64; 4], soak: f64) -> Dataset {
    let n = counts.iter().sum();
    let [b, t, nt, e] = counts;
    Dataset::new(vec![SetRecord::new("x", n, b, t, nt, e, 0, soak).unwrap()]).unwrap()
}

pub fn full(lt: f64, lnt: f64, pt: f64, pnt: f64) -> MemParams {
    MemParams::Full { lambda_target: lt, lambda_nontarget: lnt, p_target: pt, p_nontarget: pnt }
}

/// Every `(N_B, N_T, N_NT, N_E)` with total `n`.
pub fn compositions(n: u64) -> Vec<[u64; 4]> {
    let mut out = Vec::new();
    for b in 0..=n {
        for t in 0..=n - b {
            for nt in 0..=n - b - t {
                out.push([b, t, nt, n - b - t - nt]);
            }
        }
    }
    out
}

/// Native parameters `(λ_T, λ_NT, p_T, p_NT)` of the point with regular form
/// `(λ, α, β)` and target escape probability `q`.
pub fn ridge_point(lambda: f64, alpha: f64, beta: f64, q: f64) -> [f64; 4] {
    let lt = lambda * alpha / (1.0 - q);
    let pnt = 1.0 - beta * (1.0 - q) / (1.0 - q - alpha);
    [lt, lambda - lt, q, pnt]
}

/// Cell probabilities `(B, T, NT, E)` written out directly.
pub fn cells(lt: f64, lnt: f64, pt: f64, pnt: f64, s: f64) -> [f64; 4] {
    let lambda = lt + lnt;
    let b = (-lambda * s).exp();
    let t = (1.0 - b) * lt * (1.0 - pt) / lambda;
    let nt = (1.0 - b) * lnt * (1.0 - pnt) / lambda;
    [b, t, nt, 1.0 - b - t - nt]
}

fn richardson<F: Fn(f64) -> [f64; 4]>(f: F, x: f64, h: f64) -> [f64; 4] {
    let d = |h: f64| {
        let (a, b) = (f(x + h), f(x - h));
        [0, 1, 2, 3].map(|k| (a[k] - b[k]) / (2.0 * h))
    };
    let (coarse, fine) = (d(h), d(h / 2.0));
    [0, 1, 2, 3].map(|k| (4.0 * fine[k] - coarse[k]) / 3.0)
}

/// Inverse expected Fisher information of `(λ_T, λ_NT, p)` for `n` hooks, with
/// derivatives of the cell probabilities taken by extrapolated central differences.
/// `p` is `p_NT` for MEM1 and the shared escape probability for MEM2.
pub fn fd_fisher_inverse(theta: [f64; 3], mem2: bool, n: f64, s: f64) -> DMatrix<f64> {
    let probs = |t: &[f64; 3]| {
        if mem2 {
            cells(t[0], t[1], t[2], t[2], s)
        } else {
            cells(t[0], t[1], 0.0, t[2], s)
        }
    };
    let p0 = probs(&theta);
    let grads: Vec<[f64; 4]> = (0..3)
        .map(|i| {
            let h = 1e-3 * theta[i].min(1.0 - theta[i]);
            richardson(
                |v| {
                    let mut t = theta;
                    t[i] = v;
                    probs(&t)
                },
                theta[i],
                h,
            )
        })
        .collect();
    let info = DMatrix::from_fn(3, 3, |i, j| n * (0..4).map(|k| grads[i][k] * grads[j][k] / p0[k]).sum::<f64>());
    info.try_inverse().expect("invertible information")
}

/// Largest entry-wise relative difference, skipping entries where both are zero.
pub fn max_relative_difference(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let floor = 1e-12 * b.abs().max();
    a.iter()
        .zip(b.iter())
        .filter(|(x, y)| !(x.abs() <= floor && y.abs() <= floor))
        .map(|(x, y)| ((x - y) / y).abs())
        .fold(0.0, f64::max)
}
