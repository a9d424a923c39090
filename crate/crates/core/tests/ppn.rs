use costfolio::backtest::{run_backtest, BacktestConfig};
use costfolio::baselines::Crp;
use costfolio::cost_model::CostSpec;
use costfolio::market_data::PriceWindow;
use costfolio::ppn::{act, receptive_field, Checkpoint, PolicyParameters, PpnConfig, PpnStrategy};
use costfolio::synthetic::{bundled_panel, drift_market};
use proptest::prelude::*;

fn window(m: usize, k: usize, seed: u64) -> PriceWindow {
    drift_market(k + 1, m, 0.001, 0.02, seed).unwrap().window_at(k, k).unwrap()
}

fn on_simplex(a: &[f64]) -> bool {
    a.iter().all(|&v| v >= 0.0) && (a.iter().sum::<f64>() - 1.0).abs() < 1e-12
}

#[test]
fn zero_decision_layer_gives_the_uniform_portfolio() {
    let cfg = PpnConfig::new(3, 30);
    let mut p = PolicyParameters::init(&cfg, 4).unwrap();
    p.zero_decision();
    let a = act(&cfg, &p, &window(3, 30, 1), &[0.2, 0.3, 0.1]).unwrap();
    assert_eq!(a, vec![0.25; 4]);
}

#[test]
fn eleven_assets_window_thirty() {
    let cfg = PpnConfig::new(11, 30);
    let p = PolicyParameters::init(&cfg, 0).unwrap();
    let a = act(&cfg, &p, &window(11, 30, 2), &[1.0 / 12.0; 11]).unwrap();
    assert_eq!(a.len(), 12);
    assert!(on_simplex(&a));
}

#[test]
fn evaluation_mode_is_deterministic() {
    let cfg = PpnConfig::new(3, 16);
    let p = PolicyParameters::init(&cfg, 5).unwrap();
    let w = window(3, 16, 3);
    assert_eq!(act(&cfg, &p, &w, &[0.1, 0.2, 0.3]).unwrap(), act(&cfg, &p, &w, &[0.1, 0.2, 0.3]).unwrap());
}

#[test]
fn wrong_window_shape_names_the_stage() {
    let cfg = PpnConfig::new(3, 16);
    let p = PolicyParameters::init(&cfg, 0).unwrap();
    let err = act(&cfg, &p, &window(2, 16, 0), &[0.5, 0.5]).unwrap_err().to_string();
    assert!(err.contains("input"), "{err}");
}

#[test]
fn receptive_field_examples() {
    assert_eq!(receptive_field(&PpnConfig::new(3, 30)), 29);
    let mut one = PpnConfig::new(3, 30);
    one.blocks.truncate(1);
    assert_eq!(receptive_field(&one), 5);
    one.blocks.clear();
    assert_eq!(receptive_field(&one), 1);
}

#[test]
fn untrained_policy_with_zero_decision_behaves_as_uniform_crp() {
    let panel = bundled_panel().unwrap();
    let cfg = PpnConfig::new(3, 30);
    let mut p = PolicyParameters::init(&cfg, 0).unwrap();
    p.zero_decision();
    let bt = BacktestConfig::new(CostSpec::symmetric(0.0025).unwrap(), 30).with_range(1600, 2000);
    let mut ppn = PpnStrategy::new(cfg, p).unwrap();
    let mut crp = Crp::with_weights(vec![0.25; 4]).unwrap();
    let a = run_backtest(&panel, &mut ppn, &bt).unwrap();
    let b = run_backtest(&panel, &mut crp, &bt).unwrap();
    assert_eq!(a.wealth_path(), b.wealth_path());
}

#[test]
fn replaying_a_checkpoint_gives_the_same_ledger() {
    let panel = bundled_panel().unwrap();
    let cfg = PpnConfig::new(3, 30);
    let p = PolicyParameters::init(&cfg, 11).unwrap();
    let bt = BacktestConfig::new(CostSpec::symmetric(0.0025).unwrap(), 30).with_range(1900, 2000);
    let first = run_backtest(&panel, &mut PpnStrategy::new(cfg.clone(), p.clone()).unwrap(), &bt).unwrap();
    let again = run_backtest(&panel, &mut PpnStrategy::new(cfg, p).unwrap(), &bt).unwrap();
    assert_eq!(first, again);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = PpnConfig::new(3, 16);
    let mut p = PolicyParameters::init(&cfg, 8).unwrap();
    // Awkward values: subnormal, extremes, negative zero, long mantissas.
    let w = &mut p.slots[0].data;
    w[0] = 5e-324;
    w[1] = -0.0;
    w[2] = 1.7976931348623157e308;
    w[3] = 0.1 + 0.2;
    w[4] = -1.0 / 3.0;
    let ck = Checkpoint::new(cfg.clone(), p.clone(), None);
    let back = Checkpoint::from_json(&ck.to_json()).unwrap();
    for (a, b) in p.slots.iter().zip(&back.params.slots) {
        assert_eq!(a.name, b.name);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.data), bits(&b.data), "slot {}", a.name);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    let p = PolicyParameters::init(&cfg, 8).unwrap();
    Checkpoint::new(cfg.clone(), p.clone(), None).save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let w = window(3, 16, 4);
    let prev = [0.3, 0.3, 0.2];
    assert_eq!(act(&cfg, &p, &w, &prev).unwrap(), act(&loaded.config, &loaded.params, &w, &prev).unwrap());
}

#[test]
fn checkpoint_rejects_foreign_or_damaged_files() {
    let cfg = PpnConfig::new(2, 16);
    let ck = Checkpoint::new(cfg.clone(), PolicyParameters::init(&cfg, 0).unwrap(), None);
    let json = ck.to_json();
    assert!(Checkpoint::from_json(&json.replace("costfolio-ppn", "other")).is_err());
    let mut wrong = ck.clone();
    wrong.params.slots.pop();
    assert!(Checkpoint::from_json(&wrong.to_json()).is_err());
    assert!(Checkpoint::from_json("{").is_err());
}

#[test]
fn reversing_assets_does_not_simply_reverse_the_output() {
    // The correlational kernel is position dependent, so the network is
    // not permutation equivariant; this guards against accidental tying.
    let cfg = PpnConfig::new(3, 16);
    let p = PolicyParameters::init(&cfg, 21).unwrap();
    let w = window(3, 16, 6);
    let per_asset = w.len * 4;
    let rev = PriceWindow { assets: w.assets, len: w.len, values: w.values.chunks(per_asset).rev().flatten().copied().collect() };
    let prev = [0.1, 0.2, 0.3];
    let a = act(&cfg, &p, &w, &prev).unwrap();
    let b = act(&cfg, &p, &rev, &[0.3, 0.2, 0.1]).unwrap();
    let mirrored = [a[0], a[3], a[2], a[1]];
    let gap = mirrored.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap > 1e-6, "outputs matched under reversal: {a:?} {b:?}");
}

#[test]
fn parameter_count_depends_only_on_the_config() {
    let cfg = PpnConfig::new(4, 20);
    let a = PolicyParameters::init(&cfg, 1).unwrap();
    let b = PolicyParameters::init(&cfg, 2).unwrap();
    assert_eq!(a.lens(), b.lens());
    let mut no_corr = cfg.clone();
    no_corr.correlation = false;
    assert!(PolicyParameters::init(&no_corr, 1).unwrap().count() < a.count());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_is_always_on_the_simplex(seed in 0u64..1000, prev in prop::collection::vec(0.0f64..1.0, 3)) {
        let cfg = PpnConfig::new(3, 12);
        let p = PolicyParameters::init(&cfg, seed).unwrap();
        let a = act(&cfg, &p, &window(3, 12, seed), &prev).unwrap();
        prop_assert!(on_simplex(&a), "{:?}", a);
    }
}
