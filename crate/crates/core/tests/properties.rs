use longline::data::{parse_records, pool, write_records, Dataset, ParseOptions, PooledCounts, SetRecord};
use longline::indices::{expected_counts, fit_mem1, fit_mem2, hovgard_lambda};
use longline::likelihood::{mem_loglik, MemParams};
use longline::numeric::{fit_numeric, NumericModel, OptimizerConfig};
use longline::sim::{simulate_dataset, Scenario};
use longline::EstimateResult;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn record_strategy() -> impl Strategy<Value = (u64, u64, u64, u64, u64, f64, Option<i32>, Option<String>)> {
    (
        0u64..200,
        0u64..200,
        0u64..200,
        0u64..50,
        0u64..10,
        1.0f64..1000.0,
        proptest::option::of(1990i32..2030),
        proptest::option::of("[a-z0-9]{1,4}"),
    )
}

fn dataset_strategy(max_sets: usize) -> impl Strategy<Value = Dataset> {
    proptest::collection::vec(record_strategy(), 1..max_sets).prop_map(|rows| {
        let records = rows
            .into_iter()
            .enumerate()
            .map(|(i, (b, t, nt, e, u, s, year, area))| {
                SetRecord::new(format!("set{i}"), b + t + nt + e + u, b, t, nt, e, u, s)
                    .unwrap()
                    .with_group(year, area)
            })
            .collect();
        Dataset::new(records).unwrap()
    })
}

/// Pooled counts with bait left on some hooks and at least one hook touched.
fn pooled_strategy() -> impl Strategy<Value = PooledCounts> {
    (1u64..5000, 0u64..3000, 0u64..3000, 0u64..1000, 1.0f64..600.0)
        .prop_filter("some hooks touched", |(_, t, nt, e, _)| t + nt + e > 0)
        .prop_map(|(b, t, nt, e, s)| PooledCounts::from_outcomes(b, t, nt, e, s, 1).unwrap())
}

fn numeric_fields(r: &EstimateResult) -> Vec<Option<f64>> {
    let mut v = vec![
        Some(r.lambda_target),
        r.lambda_nontarget,
        r.lambda_total,
        r.p_target,
        r.p_nontarget,
        r.alpha,
        r.beta,
        r.loglik_max,
        r.aic,
    ];
    if let Some(c) = &r.covariance {
        v.extend(c.values.iter().flatten().map(|&x| Some(x)));
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pooling_ignores_order(ds in dataset_strategy(12), seed in any::<u64>()) {
        let mut records = ds.records().to_vec();
        let k = (seed as usize) % records.len();
        records.rotate_left(k);
        records.reverse();
        let shuffled = Dataset::new(records).unwrap();
        let (a, b) = (pool(&ds, f64::INFINITY).unwrap(), pool(&shuffled, f64::INFINITY).unwrap());
        prop_assert_eq!(a.outcome_counts(), b.outcome_counts());
        prop_assert_eq!(a.n_hooks_total, b.n_hooks_total);
        prop_assert!(rel(a.soak_time, b.soak_time) < 1e-12);
    }

    #[test]
    fn pooling_adds_over_partitions(ds in dataset_strategy(12), cut in 0usize..12) {
        let records = ds.records();
        prop_assume!(records.len() >= 2);
        let cut = 1 + cut % (records.len() - 1);
        let left = Dataset::new(records[..cut].to_vec()).unwrap();
        let right = Dataset::new(records[cut..].to_vec()).unwrap();
        let (all, l, r) = (
            pool(&ds, f64::INFINITY).unwrap(),
            pool(&left, f64::INFINITY).unwrap(),
            pool(&right, f64::INFINITY).unwrap(),
        );
        for k in 0..4 {
            prop_assert_eq!(all.outcome_counts()[k], l.outcome_counts()[k] + r.outcome_counts()[k]);
        }
        prop_assert_eq!(all.n_hooks_total, l.n_hooks_total + r.n_hooks_total);
        prop_assert_eq!(all.n_sets, l.n_sets + r.n_sets);
        let weighted = (l.soak_time * l.n_sets as f64 + r.soak_time * r.n_sets as f64) / all.n_sets as f64;
        prop_assert!(rel(all.soak_time, weighted) < 1e-12);
    }

    #[test]
    fn csv_round_trip_is_identity(ds in dataset_strategy(10)) {
        let mut buf = Vec::new();
        write_records(&ds, &mut buf).unwrap();
        let back = parse_records(buf.as_slice(), &ParseOptions::default()).unwrap();
        prop_assert_eq!(back.records(), ds.records());
    }

    #[test]
    fn rates_add_up_to_total_pressure(p in pooled_strategy()) {
        let total = hovgard_lambda(&p).unwrap();
        let m1 = fit_mem1(&p).unwrap();
        prop_assert!(rel(m1.lambda_target + m1.lambda_nontarget.unwrap(), total) < 1e-12);
        if p.n_target_total + p.n_nontarget_total > 0 {
            let m2 = fit_mem2(&p).unwrap();
            prop_assert!(rel(m2.lambda_target + m2.lambda_nontarget.unwrap(), total) < 1e-12);
        }
    }

    #[test]
    fn mem1_index_ignores_the_nontarget_empty_split(p in pooled_strategy(), shift in 0u64..1000) {
        let moved = shift.min(p.n_nontarget_total);
        let q = PooledCounts::from_outcomes(
            p.n_baited_total,
            p.n_target_total,
            p.n_nontarget_total - moved,
            p.n_empty_total + moved,
            p.soak_time,
            1,
        )
        .unwrap();
        let (a, b) = (fit_mem1(&p).unwrap(), fit_mem1(&q).unwrap());
        prop_assert!(rel(a.lambda_target, b.lambda_target) < 1e-12);
        prop_assert!(rel(a.lambda_nontarget.unwrap(), b.lambda_nontarget.unwrap()) < 1e-12);
    }

    #[test]
    fn mem2_catch_split_ignores_empty_hooks(p in pooled_strategy(), extra in 0u64..1000) {
        prop_assume!(p.n_target_total + p.n_nontarget_total > 0);
        let q = PooledCounts::from_outcomes(
            p.n_baited_total,
            p.n_target_total,
            p.n_nontarget_total,
            p.n_empty_total + extra,
            p.soak_time,
            1,
        )
        .unwrap();
        let (a, b) = (fit_mem2(&p).unwrap(), fit_mem2(&q).unwrap());
        let share = |r: &EstimateResult| r.lambda_target / r.lambda_total.unwrap();
        prop_assert!(rel(share(&a), share(&b)) < 1e-12);
        let ratio = |r: &EstimateResult| r.lambda_nontarget.unwrap() / r.lambda_total.unwrap();
        prop_assert!(rel(ratio(&a), ratio(&b)) < 1e-12);
    }

    #[test]
    fn rates_scale_inversely_with_soak(p in pooled_strategy(), c in 0.01f64..100.0) {
        let q = p.with_soak(p.soak_time * c);
        let (a, b) = (fit_mem1(&p).unwrap(), fit_mem1(&q).unwrap());
        prop_assert!(rel(a.lambda_target, b.lambda_target * c) < 1e-12);
        prop_assert!(rel(a.lambda_nontarget.unwrap(), b.lambda_nontarget.unwrap() * c) < 1e-12);
        prop_assert_eq!(a.p_nontarget, b.p_nontarget);
        prop_assert_eq!(a.alpha, b.alpha);
        prop_assert_eq!(a.beta, b.beta);
        if p.n_target_total + p.n_nontarget_total > 0 {
            let (a, b) = (fit_mem2(&p).unwrap(), fit_mem2(&q).unwrap());
            prop_assert!(rel(a.lambda_target, b.lambda_target * c) < 1e-12);
            prop_assert_eq!(a.p_target, b.p_target);
        }
    }

    #[test]
    fn mem1_and_mem2_agree_without_empty_hooks(
        b in 1u64..5000, t in 0u64..3000, nt in 0u64..3000, s in 1.0f64..600.0
    ) {
        prop_assume!(t + nt > 0);
        let p = PooledCounts::from_outcomes(b, t, nt, 0, s, 1).unwrap();
        let (m1, m2) = (fit_mem1(&p).unwrap(), fit_mem2(&p).unwrap());
        let (f1, f2) = (numeric_fields(&m1), numeric_fields(&m2));
        prop_assert_eq!(f1.len(), f2.len());
        for (x, y) in f1.iter().zip(&f2) {
            match (x, y) {
                (Some(x), Some(y)) => prop_assert!(rel(*x, *y) < 1e-12, "{} vs {}", x, y),
                _ => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn refit_on_expected_counts_recovers_parameters(
        lt in 1e-4f64..5e-3, lnt in 1e-4f64..5e-3, p in 0.05f64..0.6, mem2 in any::<bool>()
    ) {
        let n = 1e9;
        let pt = if mem2 { p } else { 0.0 };
        let e = expected_counts(lt, lnt, pt, p, n, 120.0).unwrap();
        let t = e[1].round() as u64;
        let nt = e[2].round() as u64;
        let em = e[3].round() as u64;
        let b = n as u64 - t - nt - em;
        let pooled = PooledCounts::from_outcomes(b, t, nt, em, 120.0, 1).unwrap();
        let fit = if mem2 { fit_mem2(&pooled).unwrap() } else { fit_mem1(&pooled).unwrap() };
        prop_assert!(rel(fit.lambda_target, lt) < 1e-5);
        prop_assert!(rel(fit.lambda_nontarget.unwrap(), lnt) < 1e-5);
        let p_hat = if mem2 { fit.p_target.unwrap() } else { fit.p_nontarget.unwrap() };
        prop_assert!((p_hat - p).abs() < 1e-5);
    }

    #[test]
    fn expected_counts_sum_to_hooks(
        lt in 0.0f64..1e-2, lnt in 0.0f64..1e-2, pt in 0.0f64..=1.0, pnt in 0.0f64..=1.0, n in 1.0f64..1e6
    ) {
        let e = expected_counts(lt, lnt, pt, pnt, n, 120.0).unwrap();
        prop_assert!(e.iter().all(|&c| c >= 0.0));
        prop_assert!(rel(e.iter().sum::<f64>(), n) < 1e-12);
    }
}

fn variable_soak_dataset(seed: u64, lt: f64, lnt: f64, pnt: f64) -> Dataset {
    let sc = Scenario {
        lambda_target: lt,
        lambda_nontarget: lnt,
        p_target: 0.0,
        p_nontarget: pnt,
        n_hooks: 150,
        n_sets: 8,
        seed,
        ..Default::default()
    };
    let records = simulate_dataset(&sc, 0)
        .dataset
        .into_records()
        .into_iter()
        .enumerate()
        .map(|(i, mut r)| {
            r.soak_time = 60.0 + 20.0 * i as f64;
            r
        })
        .collect();
    Dataset::new(records).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn numeric_fit_never_loses_to_its_start(
        seed in any::<u64>(), lt in 2e-4f64..3e-3, lnt in 2e-4f64..3e-3, pnt in 0.05f64..0.5
    ) {
        let ds = variable_soak_dataset(seed, lt, lnt, pnt);
        let pooled = pool(&ds, f64::INFINITY).unwrap();
        prop_assume!(pooled.n_target_total > 0 && pooled.n_empty_total > 0 && pooled.n_nontarget_total > 0);
        let start = fit_mem1(&pooled).unwrap();
        let start_ll = mem_loglik(
            &MemParams::Mem1 {
                lambda_target: start.lambda_target,
                lambda_nontarget: start.lambda_nontarget.unwrap(),
                p_nontarget: start.p_nontarget.unwrap(),
            },
            &ds,
        )
        .unwrap();
        let fit = fit_numeric(&ds, NumericModel::Mem1, &OptimizerConfig::default()).unwrap();
        prop_assert!(fit.loglik_max.unwrap() >= start_ll - 1e-9, "{:?} < {}", fit.loglik_max, start_ll);
    }

    #[test]
    fn numeric_fit_ignores_order_and_soak_units(
        seed in any::<u64>(), lt in 2e-4f64..3e-3, lnt in 2e-4f64..3e-3, pnt in 0.05f64..0.5, c in 0.1f64..10.0
    ) {
        let ds = variable_soak_dataset(seed, lt, lnt, pnt);
        let pooled = pool(&ds, f64::INFINITY).unwrap();
        prop_assume!(pooled.n_target_total > 0 && pooled.n_empty_total > 0 && pooled.n_nontarget_total > 0);
        let cfg = OptimizerConfig::default();
        let base = fit_numeric(&ds, NumericModel::Mem1, &cfg).unwrap();

        let mut reversed = ds.records().to_vec();
        reversed.reverse();
        let rev = fit_numeric(&Dataset::new(reversed).unwrap(), NumericModel::Mem1, &cfg).unwrap();
        prop_assert!(rel(base.lambda_target, rev.lambda_target) < 1e-5);
        prop_assert!(rel(base.lambda_nontarget.unwrap(), rev.lambda_nontarget.unwrap()) < 1e-5);

        let rescaled: Vec<SetRecord> = ds
            .records()
            .iter()
            .cloned()
            .map(|mut r| {
                r.soak_time *= c;
                r
            })
            .collect();
        let scaled = fit_numeric(&Dataset::new(rescaled).unwrap(), NumericModel::Mem1, &cfg).unwrap();
        prop_assert!(rel(base.lambda_target, scaled.lambda_target * c) < 1e-5);
        prop_assert!(rel(base.lambda_nontarget.unwrap(), scaled.lambda_nontarget.unwrap() * c) < 1e-5);
        prop_assert!((base.p_nontarget.unwrap() - scaled.p_nontarget.unwrap()).abs() < 1e-5);
    }
}
