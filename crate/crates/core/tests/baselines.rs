use costfolio::backtest::{run_backtest, BacktestConfig, BacktestLedger, Strategy};
use costfolio::baselines::{self, pamr_update, Best, Crp, Eg, StrategyKind, StrategyParams, Ubah, Up};
use costfolio::cost_model::CostSpec;
use costfolio::market_data::PricePanel;
use costfolio::synthetic::{bundled_panel, drift_market};

fn run<S: Strategy>(panel: &PricePanel, s: &mut S, cfg: &BacktestConfig) -> BacktestLedger {
    run_backtest(panel, s, cfg).unwrap()
}

/// `∫₀¹ Π_t (1 − b + b·x_t) db` by expanding the polynomial in `b`: the
/// exact wealth of Cover's universal portfolio on cash plus one asset.
fn exact_up_wealth(xs: &[f64]) -> f64 {
    let mut coef = vec![1.0];
    for &x in xs {
        let mut next = vec![0.0; coef.len() + 1];
        for (j, c) in coef.iter().enumerate() {
            next[j] += c;
            next[j + 1] += c * (x - 1.0);
        }
        coef = next;
    }
    coef.iter().enumerate().map(|(j, c)| c / (j + 1) as f64).sum()
}

#[test]
fn eg_with_zero_rate_is_crp() {
    let panel = bundled_panel().unwrap();
    let cfg = BacktestConfig::new(CostSpec::symmetric(0.0025).unwrap(), 1).with_range(0, 600);
    let eg = run(&panel, &mut Eg::new(0.0), &cfg);
    let crp = run(&panel, &mut Crp::uniform(), &cfg);
    assert_eq!(eg.wealth_path(), crp.wealth_path());
}

#[test]
fn single_risky_asset_benchmarks_coincide() {
    let panel = drift_market(200, 1, 0.001, 0.02, 4).unwrap();
    let cfg = BacktestConfig::new(CostSpec::symmetric(0.0025).unwrap(), 1);
    let rel = panel.relatives().unwrap();
    let u = run(&panel, &mut Ubah::new(), &cfg).wealth_path();
    let b = run(&panel, &mut Best::in_hindsight(&rel[1..]).unwrap(), &cfg).wealth_path();
    let c = run(&panel, &mut Crp::uniform(), &cfg).wealth_path();
    assert_eq!(u, b);
    assert_eq!(u, c);
}

#[test]
fn pamr_hand_example() {
    assert_eq!(pamr_update(&[0.5, 0.5], &[1.2, 0.8], 0.5), vec![0.0, 1.0]);
}

#[test]
fn universal_portfolio_matches_the_exact_mixture() {
    let panel = drift_market(300, 1, 0.0005, 0.01, 2).unwrap();
    let cfg = BacktestConfig::new(CostSpec::free(), 1);
    let got = run(&panel, &mut Up::new(100_000, 7), &cfg).final_wealth();
    let xs: Vec<f64> = (1..panel.n_periods()).map(|t| panel.price_relative(t).unwrap()[1]).collect();
    let want = exact_up_wealth(&xs);
    assert!((got / want - 1.0).abs() < 2e-3, "monte carlo {got}, exact {want}");
}

#[test]
fn universal_portfolio_is_near_the_best_crp_on_a_quiet_market() {
    // Low dispersion: every CRP ends near 1, so the mixture is within 1%.
    let cfg = BacktestConfig::new(CostSpec::free(), 1);
    for seed in 0..4 {
        let panel = drift_market(500, 1, 0.0, 0.0005, seed).unwrap();
        let up = run(&panel, &mut Up::new(100_000, 0), &cfg).final_wealth();
        let best = (0..=100)
            .map(|i| {
                let b = i as f64 / 100.0;
                run(&panel, &mut Crp::with_weights(vec![1.0 - b, b]).unwrap(), &cfg).final_wealth()
            })
            .fold(0.0, f64::max);
        assert!(up >= 0.99 * best && up <= best * (1.0 + 1e-12), "seed {seed}: up {up}, best crp {best}");
    }
}

#[test]
fn every_baseline_runs_on_the_bundled_panel() {
    let panel = bundled_panel().unwrap();
    let cfg = BacktestConfig::new(CostSpec::symmetric(0.0025).unwrap(), 30).with_range(1800, 2000);
    let rel = panel.relatives().unwrap();
    let (first, end) = cfg.decision_range(&panel).unwrap();
    for kind in StrategyKind::ALL {
        let mut s = baselines::build(kind, &StrategyParams::default(), panel.n_assets(), &rel[first..end]).unwrap();
        let ledger = run_backtest(&panel, &mut s, &cfg).unwrap();
        assert_eq!(ledger.strategy, kind.as_str());
        assert_eq!(ledger.len(), end - first);
        assert!(ledger.final_wealth() > 0.0);
    }
}

#[test]
fn unknown_names_and_parameters_are_config_errors() {
    assert!(matches!("nope".parse::<StrategyKind>(), Err(costfolio::Error::Config(_))));
    let p = StrategyParams::parse(&["bogus=1"]).unwrap();
    assert!(matches!(baselines::build(StrategyKind::Eg, &p, 3, &[]).err(), Some(costfolio::Error::Config(_))));
    assert!(StrategyParams::parse(&["eta"]).is_err());
}
