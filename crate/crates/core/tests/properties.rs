//! Invariants over random inputs: cost model, market data, metrics,
//! projection, reward and the backtest wealth identity.

use costfolio::backtest::{run_backtest, BacktestConfig, ScriptedStrategy};
use costfolio::baselines::project_simplex;
use costfolio::cost_model::{check_cost_bounds, decomposed_cost, drift_portfolio, solve_rebalance, CostSpec};
use costfolio::market_data::PricePanel;
use costfolio::metrics::{max_drawdown_exhaustive, max_drawdown_of};
use costfolio::reward::{compute_reward, RewardConfig};
use costfolio::verify::independent_omega;
use proptest::prelude::*;

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_map(|mut w| {
        w[0] += 1e-9;
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        w
    })
}

fn pair(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (simplex(n), simplex(n))
}

proptest! {
    #[test]
    fn drift_stays_on_the_simplex(a in simplex(4), x in prop::collection::vec(0.5f64..2.0, 3)) {
        let x: Vec<f64> = std::iter::once(1.0).chain(x).collect();
        let d = drift_portfolio(&a, &x);
        prop_assert!(d.iter().all(|&v| v >= 0.0));
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn solver_matches_the_independent_bisection((a_hat, a_new) in pair(5), psi in 0.0f64..0.1) {
        let spec = CostSpec::symmetric(psi).unwrap();
        let r = solve_rebalance(&a_hat, &a_new, &spec).unwrap();
        prop_assert!((r.omega - independent_omega(&a_hat, &a_new, &spec)).abs() <= 1e-12);
        prop_assert!((r.omega - (1.0 - r.cost)).abs() <= 1e-15);
        prop_assert!((decomposed_cost(&a_hat, &a_new, &spec, r.omega) - r.cost).abs() <= 1e-12);
        prop_assert!(r.sales.iter().zip(&r.purchases).all(|(s, p)| s * p == 0.0));
        prop_assert!(check_cost_bounds(&a_hat, &a_new, &spec, &r).unwrap().passed());
    }

    #[test]
    fn asymmetric_rates_satisfy_the_decomposition((a_hat, a_new) in pair(4), p in 0.0f64..0.05, s in 0.0f64..0.05) {
        let spec = CostSpec::new(p, s).unwrap();
        let r = solve_rebalance(&a_hat, &a_new, &spec).unwrap();
        prop_assert!((r.omega - independent_omega(&a_hat, &a_new, &spec)).abs() <= 1e-12);
        prop_assert!((decomposed_cost(&a_hat, &a_new, &spec, r.omega) - r.cost).abs() <= 1e-12);
    }

    #[test]
    fn zero_rate_never_charges((a_hat, a_new) in pair(4)) {
        let r = solve_rebalance(&a_hat, &a_new, &CostSpec::free()).unwrap();
        prop_assert_eq!(r.omega, 1.0);
        prop_assert_eq!(r.cost, 0.0);
    }

    #[test]
    fn cost_vanishes_only_without_trading(a in simplex(4), psi in 0.0001f64..0.1) {
        let spec = CostSpec::symmetric(psi).unwrap();
        prop_assert_eq!(solve_rebalance(&a, &a, &spec).unwrap().cost, 0.0);
        let mut b = a.clone();
        let shift = 0.5 * b[1];
        b[1] -= shift;
        b[2] += shift;
        if shift > 1e-9 {
            prop_assert!(solve_rebalance(&a, &b, &spec).unwrap().cost > 0.0);
        }
    }

    #[test]
    fn projection_lands_on_the_simplex_and_is_nearest(v in prop::collection::vec(-3.0f64..3.0, 1..8), other in simplex(8)) {
        let p = project_simplex(&v);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let d2 = |a: &[f64]| a.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        let q = &other[..v.len()];
        let qs: f64 = q.iter().sum();
        let q: Vec<f64> = q.iter().map(|x| x / qs).collect();
        prop_assert!(d2(&p) <= d2(&q) + 1e-12);
    }

    #[test]
    fn linear_drawdown_equals_the_quadratic_oracle(steps in prop::collection::vec(0.8f64..1.25, 1..200)) {
        let mut path = vec![1.0];
        for s in steps {
            let last = *path.last().unwrap();
            path.push(last * s);
        }
        prop_assert_eq!(max_drawdown_of(&path), max_drawdown_exhaustive(&path));
    }

    #[test]
    fn penalties_only_lower_the_reward(
        r in prop::collection::vec(-0.1f64..0.1, 2..10),
        lambda in 0.0f64..1.0,
        gamma in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let n = r.len();
        let actions: Vec<Vec<f64>> = (0..n).map(|t| {
            let w = ((seed >> (t % 60)) & 0xff) as f64 / 255.0;
            vec![w, 1.0 - w]
        }).collect();
        let drifted: Vec<Vec<f64>> = (0..n).map(|t| vec![1.0 - actions[t][0], actions[t][0]]).collect();
        let base = compute_reward(&r, &actions, &drifted, &RewardConfig::cost_sensitive(0.0, 0.0)).unwrap();
        prop_assert_eq!(base, r.iter().sum::<f64>() / n as f64);
        let with_l = compute_reward(&r, &actions, &drifted, &RewardConfig::cost_sensitive(lambda, 0.0)).unwrap();
        let with_both = compute_reward(&r, &actions, &drifted, &RewardConfig::cost_sensitive(lambda, gamma)).unwrap();
        prop_assert!(with_l <= base);
        prop_assert!(with_both <= with_l);
    }

    #[test]
    fn relatives_reconstruct_closes_and_windows_end_at_one(
        closes in prop::collection::vec(prop::collection::vec(0.5f64..50.0, 12), 1..4),
        t in 5usize..12,
    ) {
        let panel = PricePanel::from_closes(&closes).unwrap();
        for (i, col) in closes.iter().enumerate() {
            for s in 1..12 {
                let x = panel.price_relative(s).unwrap();
                prop_assert!(((col[s - 1] * x[i + 1]) - col[s]).abs() <= 1e-12 * col[s]);
            }
        }
        let w = panel.window_at(t, 5).unwrap();
        for i in 0..closes.len() {
            prop_assert!((w.get(i, 4, 3) - 1.0).abs() < 1e-15);
            prop_assert!(w.values.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn fill_is_idempotent(gaps in prop::collection::vec(any::<bool>(), 10)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let mut body = String::from("timestamp,open,high,low,close\n");
        for (t, skip) in gaps.iter().enumerate() {
            if *skip && t != 4 {
                continue;
            }
            let p = 1.0 + t as f64;
            body += &format!("{},{p},{p},{p},{p}\n", t * 60);
        }
        std::fs::write(&path, body).unwrap();
        let raw = PricePanel::ingest(&[&path], costfolio::market_data::GridSpec { period_seconds: 60, start: Some(0), end: Some(540) }).unwrap();
        let once = raw.fill_missing().unwrap();
        let twice = once.fill_missing().unwrap();
        prop_assert!(once.is_complete());
        prop_assert_eq!(once.fingerprint(), twice.fingerprint());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// With ψ = 0 the ledger wealth is the plain product of gross returns.
    #[test]
    fn zero_cost_wealth_is_the_product_of_gross_returns(
        seed in any::<u64>(),
        actions in prop::collection::vec(simplex(4), 40),
    ) {
        let panel = costfolio::synthetic::drift_market(50, 3, 0.0, 0.02, seed).unwrap();
        let cfg = BacktestConfig::new(CostSpec::free(), 5).with_range(10, 50);
        let mut s = ScriptedStrategy::new("scripted", actions.clone());
        let ledger = run_backtest(&panel, &mut s, &cfg).unwrap();
        let mut want = 1.0;
        for (t, a) in (10..50).zip(&actions) {
            let x = panel.price_relative(t).unwrap();
            want *= a.iter().zip(x.iter()).map(|(w, r)| w * r).sum::<f64>();
        }
        prop_assert!((ledger.final_wealth() - want).abs() <= 1e-12 * want);
        prop_assert_eq!(ledger.len(), 40);
        prop_assert!(ledger.rows.iter().all(|r| r.cost == 0.0 && r.omega == 1.0));
    }
}
