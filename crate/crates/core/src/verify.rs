//! The self-check suite behind `costfolio verify`: cost-solver sweep,
//! closed-form corners, theorem bounds, reward consistency, and gradient
//! checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::autodiff::{check_gradients, GradCheckReport, Graph, Tensor, Var};
use crate::cost_model::{check_cost_bounds, drift_portfolio, solve_rebalance, CostSpec};
use crate::error::Result;
use crate::market_data::PricePanel;
use crate::portfolio::l1_distance;
use crate::ppn::{forward, PolicyParameters, PpnConfig};
use crate::reward::{compute_reward, RewardConfig};
use crate::synthetic::drift_market;
use crate::theorems::{penalized_objective, verify_theorem_bounds, TheoremSpec};
use crate::training::reward_graph;

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
pub const OMEGA_TOL: f64 = 1e-12;

/// Deliberate defects for mutation testing of the suite itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Adds the turnover penalty instead of subtracting it.
    L1Sign,
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    pub cost_pairs: usize,
    pub cost_rates: Vec<f64>,
    pub theorem: TheoremSpec,
    pub gradients: bool,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            cost_pairs: 10_000,
            cost_rates: vec![0.0, 0.001, 0.0025, 0.01, 0.05],
            theorem: TheoremSpec::default(),
            gradients: true,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckOutcome { name: name.into(), passed, detail: detail.into() });
    }
}

/// `ω` from `ω = 1 − ψ_s·S(ω) − ψ_p·P(ω)` by plain bisection; written
/// separately from the solver so the two can be compared.
pub fn independent_omega(a_hat: &[f64], a_new: &[f64], spec: &CostSpec) -> f64 {
    let g = |w: f64| {
        let (mut sold, mut bought) = (0.0, 0.0);
        for i in 1..a_new.len() {
            let d = a_hat[i] - a_new[i] * w;
            if d > 0.0 {
                sold += d;
            } else {
                bought -= d;
            }
        }
        1.0 - w - spec.sale * sold - spec.purchase * bought
    };
    if g(1.0) >= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CostSweepReport {
    pub pairs: usize,
    pub max_omega_error: f64,
    pub violations: Vec<String>,
}

/// Random simplex vector; the concentration is drawn per vector so that
/// sparse, near-vertex and near-uniform points all occur.
fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let alpha = [0.1, 1.0, 10.0][rng.random_range(0..3)];
    let g = Gamma::new(alpha, 1.0).expect("valid gamma");
    let mut w: Vec<f64> = (0..n).map(|_| g.sample(rng)).collect();
    let s: f64 = w.iter().sum();
    if s == 0.0 {
        w = vec![0.0; n];
        w[rng.random_range(0..n)] = 1.0;
        return w;
    }
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Solver against [`independent_omega`] plus the cost bracket and
/// ceilings on `pairs` random pairs per rate.
pub fn cost_sweep(pairs: usize, rates: &[f64], seed: u64) -> Result<CostSweepReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CostSweepReport::default();
    for &psi in rates {
        let spec = CostSpec::symmetric(psi)?;
        for _ in 0..pairs {
            let n = rng.random_range(2..=12);
            let a_hat = random_simplex(&mut rng, n);
            let a_new = random_simplex(&mut rng, n);
            let res = solve_rebalance(&a_hat, &a_new, &spec)?;
            let err = (res.omega - independent_omega(&a_hat, &a_new, &spec)).abs();
            report.max_omega_error = report.max_omega_error.max(err);
            if err > OMEGA_TOL {
                report.violations.push(format!("psi {psi}: omega off by {err:e} for {a_hat:?} -> {a_new:?}"));
            }
            let bounds = check_cost_bounds(&a_hat, &a_new, &spec, &res)?;
            report.violations.extend(bounds.violations);
            report.pairs += 1;
        }
    }
    Ok(report)
}

/// Costs of the two closed-form corners for `m` risky assets:
/// all cash → one asset, and a full swap between two risky assets.
pub fn corner_costs(psi: f64, m: usize) -> Result<(f64, f64)> {
    let spec = CostSpec::symmetric(psi)?;
    let mut cash = vec![0.0; m + 1];
    cash[0] = 1.0;
    let mut first = vec![0.0; m + 1];
    first[1] = 1.0;
    let mut second = vec![0.0; m + 1];
    second[m] = 1.0;
    let buy = solve_rebalance(&cash, &first, &spec)?.cost;
    let swap = if m >= 2 { solve_rebalance(&first, &second, &spec)?.cost } else { f64::NAN };
    Ok((buy, swap))
}

/// Largest gap between the differentiable batch reward and the scalar
/// formula fed with the same surrogate-cost returns, over random batches.
pub fn reward_consistency(batches: usize, seed: u64, fault: Option<Fault>) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = 0.0025;
    let sign = if fault == Some(Fault::L1Sign) { -1.0 } else { 1.0 };
    let mut worst: f64 = 0.0;
    for _ in 0..batches {
        let n = rng.random_range(2..=5);
        let t_len = rng.random_range(2..=6);
        let cfg = RewardConfig::cost_sensitive(rng.random_range(0.0..0.5), rng.random_range(0.01..0.5));
        let actions: Vec<Vec<f64>> = (0..t_len).map(|_| random_simplex(&mut rng, n)).collect();
        let xs: Vec<Vec<f64>> =
            (0..t_len).map(|_| std::iter::once(1.0).chain((1..n).map(|_| rng.random_range(0.8..1.25))).collect()).collect();
        let first = random_simplex(&mut rng, n);

        let mut drifted = vec![first.clone()];
        for t in 1..t_len {
            drifted.push(drift_portfolio(&actions[t - 1], &xs[t - 1]));
        }
        let returns: Vec<f64> = (0..t_len)
            .map(|t| {
                let gross: f64 = actions[t].iter().zip(&xs[t]).map(|(a, x)| a * x).sum();
                (gross * (1.0 - psi * l1_distance(&actions[t], &drifted[t]))).ln()
            })
            .collect();
        let want = compute_reward(&returns, &actions, &drifted, &cfg)?;

        let mut g = Graph::new();
        let vars: Vec<Var> = actions.iter().map(|a| g.input(Tensor::vector(a.clone()))).collect();
        let xr: Vec<&[f64]> = xs.iter().map(|x| &x[..]).collect();
        let nodes = reward_graph(&mut g, &vars, &xr, &first, psi, &cfg, sign)?;
        worst = worst.max((g.value(nodes.reward).item() - want).abs());
    }
    Ok(worst)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor { shape: shape.to_vec(), data: (0..n).map(|_| rng.random_range(lo..hi)).collect() }
}

/// Values bounded away from zero, so `abs` and `relu` kinks stay outside
/// the finite-difference stencil.
fn signed_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let mut t = random_tensor(rng, shape, 0.1, 1.0);
    t.data.iter_mut().for_each(|v| {
        if rng.random::<bool>() {
            *v = -*v
        }
    });
    t
}

/// Reduces any node to a scalar through fixed random weights, so every
/// output element contributes a distinct amount.
fn weigh(g: &mut Graph, v: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.value(v).len();
    let shape = g.value(v).shape.clone();
    let w = g.constant(Tensor { shape, data: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() });
    let p = g.mul(v, w)?;
    Ok(g.sum(p))
}

type OpCase = (&'static str, Vec<Tensor>, Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>);

/// Finite-difference checks of every operator on small random instances
/// (`m = 3`, `k = 8`).
pub fn gradient_suite(seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, k) = (3, 8);
    let r = &mut rng;
    let cases: Vec<OpCase> = vec![
        (
            "add",
            vec![signed_tensor(r, &[m, k]), signed_tensor(r, &[m, k])],
            Box::new(|g, v| {
                let o = g.add(v[0], v[1])?;
                weigh(g, o, 1)
            }),
        ),
        (
            "sub",
            vec![signed_tensor(r, &[m, k]), signed_tensor(r, &[m, k])],
            Box::new(|g, v| {
                let o = g.sub(v[0], v[1])?;
                weigh(g, o, 2)
            }),
        ),
        (
            "mul",
            vec![signed_tensor(r, &[m, k]), signed_tensor(r, &[m, k])],
            Box::new(|g, v| {
                let o = g.mul(v[0], v[1])?;
                weigh(g, o, 3)
            }),
        ),
        (
            "scale",
            vec![signed_tensor(r, &[m])],
            Box::new(|g, v| {
                let o = g.scale(v[0], -1.7);
                weigh(g, o, 4)
            }),
        ),
        (
            "add_const",
            vec![signed_tensor(r, &[m])],
            Box::new(|g, v| {
                let o = g.add_const(v[0], 0.3);
                let s = g.square(o);
                weigh(g, s, 5)
            }),
        ),
        (
            "mul_scalar",
            vec![signed_tensor(r, &[m, k]), signed_tensor(r, &[])],
            Box::new(|g, v| {
                let o = g.mul_scalar(v[0], v[1])?;
                weigh(g, o, 6)
            }),
        ),
        (
            "add_scalar",
            vec![signed_tensor(r, &[m, k]), signed_tensor(r, &[])],
            Box::new(|g, v| {
                let o = g.add_scalar(v[0], v[1])?;
                let s = g.square(o);
                weigh(g, s, 7)
            }),
        ),
        (
            "recip",
            vec![random_tensor(r, &[m], 0.5, 2.0)],
            Box::new(|g, v| {
                let o = g.recip(v[0]);
                weigh(g, o, 8)
            }),
        ),
        (
            "log",
            vec![random_tensor(r, &[m], 0.5, 2.0)],
            Box::new(|g, v| {
                let o = g.log(v[0]);
                weigh(g, o, 9)
            }),
        ),
        (
            "abs",
            vec![signed_tensor(r, &[m, k])],
            Box::new(|g, v| {
                let o = g.abs(v[0]);
                weigh(g, o, 10)
            }),
        ),
        (
            "square",
            vec![signed_tensor(r, &[m, k])],
            Box::new(|g, v| {
                let o = g.square(v[0]);
                weigh(g, o, 11)
            }),
        ),
        (
            "relu",
            vec![signed_tensor(r, &[m, k])],
            Box::new(|g, v| {
                let o = g.relu(v[0]);
                weigh(g, o, 12)
            }),
        ),
        (
            "sum",
            vec![signed_tensor(r, &[m, k])],
            Box::new(|g, v| {
                let o = g.sum(v[0]);
                Ok(g.square(o))
            }),
        ),
        (
            "mean",
            vec![signed_tensor(r, &[m, k])],
            Box::new(|g, v| {
                let o = g.mean(v[0])?;
                Ok(g.square(o))
            }),
        ),
        (
            "reshape",
            vec![signed_tensor(r, &[m, k])],
            Box::new(move |g, v| {
                let o = g.reshape(v[0], &[k, m])?;
                weigh(g, o, 13)
            }),
        ),
        (
            "index",
            vec![signed_tensor(r, &[m, k])],
            Box::new(|g, v| {
                let o = g.index(v[0], 1)?;
                weigh(g, o, 14)
            }),
        ),
        (
            "concat",
            vec![signed_tensor(r, &[m, 2]), signed_tensor(r, &[m, 3])],
            Box::new(|g, v| {
                let o = g.concat(&[v[0], v[1]], 1)?;
                weigh(g, o, 15)
            }),
        ),
        (
            "dropout",
            vec![signed_tensor(r, &[m, k])],
            Box::new(|g, v| {
                let mut rng = ChaCha8Rng::seed_from_u64(99);
                let o = g.dropout(v[0], 0.2, Some(&mut rng));
                weigh(g, o, 16)
            }),
        ),
        (
            "softmax",
            vec![signed_tensor(r, &[m + 1])],
            Box::new(|g, v| {
                let o = g.softmax(v[0])?;
                weigh(g, o, 17)
            }),
        ),
        (
            "matvec",
            vec![signed_tensor(r, &[m + 1, 5]), signed_tensor(r, &[5])],
            Box::new(|g, v| {
                let o = g.matvec(v[0], v[1])?;
                weigh(g, o, 18)
            }),
        ),
        (
            "causal_conv",
            vec![signed_tensor(r, &[m, k, 4]), signed_tensor(r, &[6, 4, 3]), signed_tensor(r, &[6])],
            Box::new(|g, v| {
                let o = g.causal_conv(v[0], v[1], v[2], 2)?;
                weigh(g, o, 19)
            }),
        ),
        (
            "corr_conv",
            vec![signed_tensor(r, &[m, k, 4]), signed_tensor(r, &[4, 4, m]), signed_tensor(r, &[4])],
            Box::new(|g, v| {
                let o = g.corr_conv(v[0], v[1], v[2])?;
                weigh(g, o, 20)
            }),
        ),
        (
            "time_conv",
            vec![signed_tensor(r, &[m, k, 4]), signed_tensor(r, &[5, 4, k]), signed_tensor(r, &[5])],
            Box::new(|g, v| {
                let o = g.time_conv(v[0], v[1], v[2])?;
                weigh(g, o, 21)
            }),
        ),
        (
            "lstm",
            vec![
                random_tensor(r, &[m, k, 4], 0.5, 1.5),
                signed_tensor(r, &[4 * 16, 4]),
                signed_tensor(r, &[4 * 16, 16]),
                signed_tensor(r, &[4 * 16]),
            ],
            Box::new(|g, v| {
                let o = g.lstm(v[0], v[1], v[2], v[3])?;
                weigh(g, o, 22)
            }),
        ),
    ];
    let mut out = Vec::with_capacity(cases.len() + 1);
    for (name, inputs, f) in cases {
        out.push((name.to_string(), check_gradients(&inputs, GRAD_STEP, f)?));
    }
    out.push(("ppn+reward".to_string(), ppn_reward_gradcheck(seed)?));
    Ok(out)
}

/// A short batch of PPN decisions fed into the batch reward, differentiated
/// with respect to every network parameter (`m = 3`, `k = 8`).
pub fn ppn_reward_gradcheck(seed: u64) -> Result<GradCheckReport> {
    let (m, k, t_len) = (3, 8, 3);
    let cfg = PpnConfig::new(m, k);
    let mut params = PolicyParameters::init(&cfg, seed)?;
    // Zero biases put ReLU inputs exactly on the kink wherever a layer's
    // inputs are all zero (padding, dead units); move off it.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for slot in params.slots.iter_mut().filter(|s| s.name.ends_with(".bias")) {
        slot.data.iter_mut().for_each(|v| *v += rng.random_range(0.05..0.2) * if rng.random::<bool>() { 1.0 } else { -1.0 });
    }
    let panel: PricePanel = drift_market(k + t_len + 1, m, 0.001, 0.02, seed)?;
    let relatives = panel.relatives()?;
    let windows = (k..k + t_len).map(|t| panel.window_at(t, k)).collect::<Result<Vec<_>>>()?;
    let xs: Vec<Vec<f64>> = (k..k + t_len).map(|t| relatives[t].to_vec()).collect();
    let first = drift_portfolio(&[0.1, 0.2, 0.3, 0.4], &relatives[k - 1]);
    let reward = RewardConfig::cost_sensitive(0.1, 0.01);
    let prev = [vec![0.2, 0.3, 0.4], vec![0.1, 0.5, 0.3], vec![0.3, 0.3, 0.1]];
    check_gradients(&params.tensors(), GRAD_STEP, |g, p| {
        let mut actions = Vec::with_capacity(t_len);
        for (s, w) in windows.iter().enumerate() {
            // training-mode dropout with a fixed stream per decision
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + s as u64);
            actions.push(forward(&cfg, g, p, w, &prev[s], Some(&mut rng))?.action);
        }
        let xr: Vec<&[f64]> = xs.iter().map(|x| &x[..]).collect();
        Ok(reward_graph(g, &actions, &xr, &first, 0.0025, &reward, 1.0)?.reward)
    })
}

/// Runs everything and collects one outcome per check.
pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();

    let sweep = cost_sweep(opts.cost_pairs, &opts.cost_rates, opts.seed)?;
    report.push(
        "cost solver vs independent bisection",
        sweep.max_omega_error <= OMEGA_TOL,
        format!("{} pairs, max |Δω| = {:e}", sweep.pairs, sweep.max_omega_error),
    );
    report.push(
        "cost bracket and ceilings",
        sweep.violations.is_empty(),
        sweep.violations.first().cloned().unwrap_or_else(|| format!("{} pairs, no violations", sweep.pairs)),
    );

    let mut corner_detail = Vec::new();
    let mut corners_ok = true;
    for &psi in &opts.cost_rates {
        let (buy, swap) = corner_costs(psi, 3)?;
        let (want_buy, want_swap) = (psi / (1.0 + psi), 2.0 * psi / (1.0 + psi));
        corners_ok &= (buy - want_buy).abs() <= 1e-12 && (swap - want_swap).abs() <= 1e-12;
        corner_detail.push(format!("psi {psi}: buy {buy:e}, swap {swap:e}"));
    }
    report.push("closed-form corners", corners_ok, corner_detail.join("; "));

    let objective = match opts.fault {
        Some(Fault::L1Sign) => |m: f64, v: f64, l1: f64, lambda: f64, gamma: f64| m - lambda * v + gamma * l1,
        None => penalized_objective,
    };
    let theorems = verify_theorem_bounds(&opts.theorem, objective)?;
    report.push(
        "theorem bounds",
        theorems.passed(),
        match theorems.violations.first() {
            Some(v) => format!("{} violations; first [{}] sample {}: {}", theorems.violations.len(), v.check, v.sample, v.detail),
            None => format!(
                "{} checks, max Var on (1,e] = {:.4}, max E L1 = {:.4}",
                theorems.checks, theorems.max_variance_on_upper, theorems.max_expected_l1
            ),
        },
    );

    let gap = reward_consistency(200, opts.seed, opts.fault)?;
    report.push("batch reward vs scalar reward", gap <= 1e-12, format!("max gap {gap:e}"));

    if opts.gradients {
        for (name, r) in gradient_suite(opts.seed)? {
            report.push(
                format!("gradient {name}"),
                r.passed(GRAD_TOL),
                format!(
                    "{} entries ({} one-sided, {} skipped), max rel error {:e} at {:?}",
                    r.checked, r.one_sided, r.skipped, r.max_rel_error, r.worst
                ),
            );
        }
    }
    Ok(report)
}
