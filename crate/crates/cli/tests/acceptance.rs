//! One PASS/FAIL line per acceptance criterion, then a nonzero exit if any
//! failed. Runs without the libtest harness so the lines always print.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use costfolio::backtest::{run_backtest, BacktestConfig, ScriptedStrategy};
use costfolio::baselines::{pamr_update, Crp, Eg, Up};
use costfolio::cost_model::CostSpec;
use costfolio::market_data::PricePanel;
use costfolio::metrics::{max_drawdown_exhaustive, max_drawdown_of, MetricBlock};
use costfolio::ppn::{PpnConfig, PpnStrategy};
use costfolio::reward::RewardConfig;
use costfolio::synthetic::{bundled_panel, drift_market};
use costfolio::theorems::{penalized_objective, verify_theorem_bounds, TheoremSpec};
use costfolio::training::{train, TrainConfig};
use costfolio::verify::{corner_costs, cost_sweep, gradient_suite, GRAD_TOL, OMEGA_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRID: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];
const SEEDS: u64 = 5;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < limit_s, format!("{s:.1}s of {limit_s}s"))
}

fn cost_solver() -> Outcome {
    let t = Instant::now();
    let r = cost_sweep(10_000, &[0.001, 0.0025, 0.01, 0.05], 1).unwrap();
    let (fast, time) = within(t.elapsed(), 10.0);
    let ok = r.max_omega_error <= OMEGA_TOL && r.violations.is_empty() && r.pairs == 40_000 && fast;
    outcome(ok, format!("{} pairs, max |Δω| {:e}, {} violations, {time}", r.pairs, r.max_omega_error, r.violations.len()))
}

fn corners() -> Outcome {
    let mut worst: f64 = 0.0;
    for psi in [0.0, 0.001, 0.0025, 0.01, 0.05, 0.2] {
        for m in [2, 3, 11] {
            let (buy, swap) = corner_costs(psi, m).unwrap();
            worst = worst.max((buy - psi / (1.0 + psi)).abs()).max((swap - 2.0 * psi / (1.0 + psi)).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max deviation {worst:e}"))
}

fn random_action(rng: &mut ChaCha8Rng, n: usize, sparse: bool) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    if sparse {
        for v in w.iter_mut().skip(1) {
            if rng.random_bool(0.5) {
                *v = 0.0;
            }
        }
    }
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

fn backtest_identity() -> Outcome {
    let panel = bundled_panel().unwrap();
    let cfg = BacktestConfig::new(CostSpec::free(), 1);
    let (first, end) = cfg.decision_range(&panel).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let actions: Vec<Vec<f64>> = (first..end).map(|_| random_action(&mut rng, panel.n_assets(), i % 2 == 1)).collect();
        let ledger = run_backtest(&panel, &mut ScriptedStrategy::new("random", actions.clone()), &cfg).unwrap();
        let mut want = 1.0;
        for (t, a) in (first..end).zip(&actions) {
            let x = panel.price_relative(t).unwrap();
            want *= a.iter().zip(x.iter()).map(|(w, r)| w * r).sum::<f64>();
        }
        worst = worst.max((ledger.final_wealth() - want).abs() / want);
    }
    outcome(worst <= 1e-12, format!("100 strategies × {} periods, max relative gap {worst:e}", end - first))
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let suite = gradient_suite(0).unwrap();
    let (fast, time) = within(t.elapsed(), 60.0);
    let failed: Vec<&str> = suite.iter().filter(|(_, r)| !r.passed(GRAD_TOL)).map(|(n, _)| n.as_str()).collect();
    let worst = suite.iter().map(|(_, r)| r.max_rel_error).fold(0.0, f64::max);
    outcome(failed.is_empty() && fast, format!("{} checks, max rel error {worst:e}, failed {failed:?}, {time}", suite.len()))
}

fn theorem_suite() -> Outcome {
    let t = Instant::now();
    let spec = TheoremSpec::default();
    let r = verify_theorem_bounds(&spec, penalized_objective).unwrap();
    let (fast, time) = within(t.elapsed(), 30.0);
    outcome(
        r.passed() && spec.samples == 10_000 && fast,
        format!(
            "{} samples, {} checks, {} violations, max Var on (1,e] {:.4}, {time}",
            spec.samples,
            r.checks,
            r.violations.len(),
            r.max_variance_on_upper
        ),
    )
}

struct Averages {
    apv: f64,
    std: f64,
    to: f64,
}

/// Seed-averaged test metrics of policies trained on the drift market.
fn trained(panel: &PricePanel, psi: f64, lambda: f64, gamma: f64, lr: f64) -> Averages {
    let k = 16;
    let ppn = PpnConfig::new(3, k);
    let mut sum = Averages { apv: 0.0, std: 0.0, to: 0.0 };
    for seed in 0..SEEDS {
        let mut tc = TrainConfig::new((0, 600), psi);
        tc.steps = 300;
        tc.learning_rate = lr;
        tc.batch_size = 32;
        tc.seed = seed;
        let rep = train(panel, &ppn, &RewardConfig::cost_sensitive(lambda, gamma), &tc).unwrap();
        assert!(rep.abort.is_none(), "training aborted: {:?}", rep.abort);
        let mut s = PpnStrategy::new(ppn.clone(), rep.checkpoint.params).unwrap();
        let bt = BacktestConfig::new(CostSpec::symmetric(psi).unwrap(), k).with_range(600, 700);
        let m = MetricBlock::from_ledger(&run_backtest(panel, &mut s, &bt).unwrap());
        sum.apv += m.apv;
        sum.std += m.std;
        sum.to += m.to;
    }
    let n = SEEDS as f64;
    Averages { apv: sum.apv / n, std: sum.std / n, to: sum.to / n }
}

/// Nonincreasing with at most one adjacent pair rising within `slack(prev)`.
fn nonincreasing(values: &[f64], slack: impl Fn(f64) -> f64) -> bool {
    let mut ties = 0;
    for w in values.windows(2) {
        if w[1] > w[0] {
            if w[1] - w[0] > slack(w[0]) {
                return false;
            }
            ties += 1;
        }
    }
    ties <= 1
}

fn gamma_trend() -> Outcome {
    let t = Instant::now();
    let panel = drift_market(700, 3, 0.0005, 0.002, 7).unwrap();
    let to: Vec<f64> = GRID.iter().map(|&g| trained(&panel, 0.0025, 0.0, g, 1e-3).to).collect();
    let heavy = trained(&panel, 0.05, 0.0, 1e-3, 1e-3);
    let (fast, time) = within(t.elapsed(), 1800.0);
    let trend = nonincreasing(&to, |_| 0.005);
    let flat = heavy.to < 0.05 && (0.95..=1.05).contains(&heavy.apv);
    outcome(trend && flat && fast, format!("TO over γ {to:.5?}; at ψ=5% TO {:.5}, APV {:.4}; {time}", heavy.to, heavy.apv))
}

fn lambda_trend() -> Outcome {
    let panel = drift_market(700, 3, 0.005, 0.1, 7).unwrap();
    let std: Vec<f64> = GRID.iter().map(|&l| trained(&panel, 0.0025, l, 1e-3, 3e-4).std).collect();
    outcome(nonincreasing(&std, |prev| 0.05 * prev), format!("STD over λ {std:.5?}"))
}

fn baselines() -> Outcome {
    let panel = bundled_panel().unwrap();
    let cfg = BacktestConfig::new(CostSpec::symmetric(0.0025).unwrap(), 1);
    let eg = run_backtest(&panel, &mut Eg::new(0.0), &cfg).unwrap().wealth_path();
    let crp = run_backtest(&panel, &mut Crp::uniform(), &cfg).unwrap().wealth_path();
    let eg_ok = eg == crp;

    let quiet = drift_market(500, 1, 0.0, 0.0005, 0).unwrap();
    let free = BacktestConfig::new(CostSpec::free(), 1);
    let up = run_backtest(&quiet, &mut Up::new(100_000, 0), &free).unwrap().final_wealth();
    let best = (0..=100)
        .map(|i| {
            let b = i as f64 / 100.0;
            run_backtest(&quiet, &mut Crp::with_weights(vec![1.0 - b, b]).unwrap(), &free).unwrap().final_wealth()
        })
        .fold(0.0, f64::max);
    let up_ok = up >= 0.99 * best;

    let pamr_ok = pamr_update(&[0.5, 0.5], &[1.2, 0.8], 0.5) == vec![0.0, 1.0];

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mdd_ok = (0..1000).all(|_| {
        let n = rng.random_range(1..300);
        let mut path = vec![1.0];
        for _ in 0..n {
            let last = *path.last().unwrap();
            path.push(last * rng.random_range(0.8..1.25));
        }
        max_drawdown_of(&path) == max_drawdown_exhaustive(&path)
    });
    outcome(
        eg_ok && up_ok && pamr_ok && mdd_ok,
        format!("EG(0)≡CRP {eg_ok}; UP/best CRP {:.4}; PAMR {pamr_ok}; MDD on 1000 paths {mdd_ok}", up / best),
    )
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Runs the binary and returns its stdout plus every output file except
/// the wall-clock record.
fn snapshot(args: &[&str], out: &Path) -> (bool, BTreeMap<String, Vec<u8>>) {
    let run = Command::new(env!("CARGO_BIN_EXE_costfolio")).args(args).arg("--out").arg(out).current_dir(workspace()).output().unwrap();
    let mut files = BTreeMap::new();
    files.insert("<stdout>".to_string(), run.stdout);
    for entry in std::fs::read_dir(out).into_iter().flatten().flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if name != "timing.json" {
            files.insert(name, std::fs::read(entry.path()).unwrap());
        }
    }
    (run.status.success(), files)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 3] = [
        ("verify", &["verify", "--seed", "0"]),
        ("backtest", &["backtest", "-c", "configs/synthetic.toml", "-s", "all"]),
        ("train", &["train", "-c", "configs/synthetic.toml", "--set", "train.steps=25"]),
    ];
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, args) in cases {
        // Same output path both times (it is echoed on stdout); cleared in
        // between so a file the second run fails to write cannot match.
        let out = dir.path().join(name);
        let (a_ok, a) = snapshot(args, &out);
        std::fs::remove_dir_all(&out).unwrap();
        let (b_ok, b) = snapshot(args, &out);
        let same = a_ok && b_ok && a == b && a.len() > 1;
        ok &= same;
        notes.push(format!("{name} {} files {}", a.len() - 1, if same { "identical" } else { "DIFFER" }));
    }
    outcome(ok, notes.join("; "))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("cost-solver exactness", cost_solver),
        ("closed-form corners", corners),
        ("backtest identity", backtest_identity),
        ("gradient fidelity", gradients),
        ("theorem suite", theorem_suite),
        ("turnover trend in γ and ψ", gamma_trend),
        ("volatility trend in λ", lambda_trend),
        ("baseline sanity", baselines),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        failed += usize::from(!o.passed);
        println!(
            "criterion {}: {} {name} — {} [{:.1}s]",
            i + 1,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
