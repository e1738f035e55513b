use std::collections::HashMap;

use longline::indices::expected_counts;
use longline::sim::{simulate_dataset, Scenario};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn scenario(lt: f64, lnt: f64, pt: f64, pnt: f64, n_hooks: u64, n_sets: usize, seed: u64) -> Scenario {
    Scenario {
        lambda_target: lt,
        lambda_nontarget: lnt,
        p_target: pt,
        p_nontarget: pnt,
        n_hooks,
        n_sets,
        soak: 120.0,
        replicates: 1,
        seed,
        label: String::new(),
    }
}

#[test]
fn mean_counts_match_cell_probabilities() {
    let sc = scenario(2e-3, 5e-3, 0.1, 0.3, 50, 100_000, 7);
    let sim = simulate_dataset(&sc, 0);
    let expected = expected_counts(2e-3, 5e-3, 0.1, 0.3, 50.0, 120.0).unwrap();
    let n_sets = sc.n_sets as f64;
    for k in 0..4 {
        let mean = sim.dataset.records().iter().map(|r| r.outcome_counts()[k] as f64).sum::<f64>() / n_sets;
        let p = expected[k] / 50.0;
        let se = (50.0 * p * (1.0 - p) / n_sets).sqrt();
        assert!((mean - expected[k]).abs() < 3.0 * se, "cell {k}: {mean} vs {}", expected[k]);
    }
}

#[test]
fn composition_frequencies_pass_chi_square() {
    // Four hooks per set: every composition is a category of a multinomial of order 4.
    let sc = scenario(3e-3, 4e-3, 0.2, 0.4, 4, 100_000, 11);
    let sim = simulate_dataset(&sc, 0);
    let probs = expected_counts(3e-3, 4e-3, 0.2, 0.4, 1.0, 120.0).unwrap();
    let mut observed: HashMap<[u64; 4], f64> = HashMap::new();
    for r in sim.dataset.records() {
        *observed.entry(r.outcome_counts()).or_default() += 1.0;
    }
    let lf = |n: u64| (1..=n).product::<u64>() as f64;
    let mut cells = Vec::new();
    for b in 0..=4u64 {
        for t in 0..=4 - b {
            for nt in 0..=4 - b - t {
                let c = [b, t, nt, 4 - b - t - nt];
                let multinomial = lf(4) / c.iter().map(|&x| lf(x)).product::<f64>();
                let p = multinomial * (0..4).map(|k| probs[k].powi(c[k] as i32)).product::<f64>();
                cells.push((p * sc.n_sets as f64, observed.get(&c).copied().unwrap_or(0.0)));
            }
        }
    }
    // Merge sparse categories so every expected count is at least 5.
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let mut pending = (0.0, 0.0);
    for (e, o) in cells {
        pending = (pending.0 + e, pending.1 + o);
        if pending.0 >= 5.0 {
            merged.push(pending);
            pending = (0.0, 0.0);
        }
    }
    if pending.0 > 0.0 {
        let last = merged.last_mut().unwrap();
        *last = (last.0 + pending.0, last.1 + pending.1);
    }
    let stat: f64 = merged.iter().map(|(e, o)| (o - e).powi(2) / e).sum();
    let df = (merged.len() - 1) as f64;
    let critical = ChiSquared::new(df).unwrap().inverse_cdf(1.0 - 1e-3);
    assert!(stat < critical, "chi2 {stat} on {df} df, critical {critical}");
}

#[test]
fn hooked_target_share_is_binomial_given_touched_hooks() {
    let (lt, lnt) = (2e-3, 6e-3);
    let sc = scenario(lt, lnt, 0.3, 0.5, 30, 50_000, 13);
    let sim = simulate_dataset(&sc, 0);
    let share = lt / (lt + lnt);
    // Group sets by the number of touched hooks and test each group's frequency.
    let mut by_touched: HashMap<u64, (f64, f64)> = HashMap::new();
    for (r, t) in sim.dataset.records().iter().zip(&sim.truth) {
        let touched = r.n_hooks - r.n_baited;
        let hooked_target = r.n_target + t.n_escaped_target;
        assert!(hooked_target <= touched);
        let e = by_touched.entry(touched).or_default();
        e.0 += 1.0;
        e.1 += hooked_target as f64;
    }
    let mut tested = 0;
    for (touched, (sets, hooked)) in by_touched {
        if sets < 500.0 || touched == 0 {
            continue;
        }
        let trials = sets * touched as f64;
        let se = (share * (1.0 - share) / trials).sqrt();
        let freq = hooked / trials;
        assert!((freq - share).abs() < 4.0 * se, "touched {touched}: {freq} vs {share}");
        tested += 1;
    }
    assert!(tested >= 5);
}

#[test]
fn very_high_pressure_leaves_no_bait() {
    let sc = scenario(0.05, 0.05, 0.0, 0.0, 220, 10_000, 17);
    let sim = simulate_dataset(&sc, 0);
    let bare = sim.dataset.records().iter().filter(|r| r.n_baited == 0).count();
    // P(N_B > 0) = 1 - (1 - e^{-12})^220 ≈ 1.4e-3.
    assert!(bare as f64 / 10_000.0 > 0.99, "{bare}");
}

#[test]
fn visible_records_are_always_valid() {
    let sc = scenario(1e-3, 1e-2, 0.02, 0.2, 220, 2000, 19);
    for rep in 0..5 {
        let sim = simulate_dataset(&sc, rep);
        for (r, t) in sim.dataset.records().iter().zip(&sim.truth) {
            r.validate(None).unwrap();
            assert_eq!(r.n_empty, t.n_escaped_target + t.n_escaped_nontarget);
        }
    }
}
