//! Monte-Carlo checks of the variance and turnover bounds behind the
//! cost-sensitive reward.
//!
//! For sampled discrete return distributions `r` with support in `[1/e, e]`:
//!
//! * (a) `h(r) = E log r − λ·Var(log r) ≤ E log r`;
//! * (b) with support in `(1, e]`, `Var(log r) ≤ 1/4`, so `h(r) ≥ E log r − λ/4`;
//! * (c) for sampled simplex pairs with a feasible cost, the expected L1
//!   turnover lies in `(0, 2(1−ψ)/(1+ψ)]`, and the penalized objective sits
//!   within `(9/4)λ + 2γ(1−ψ)/(1+ψ)` below the unpenalized one.
//!
//! The bound in (c) is about the expectation. A single pair can exceed
//! `2(1−ψ)/(1+ψ)` (a full swap has L1 = 2); only `L1 ≤ 2` holds pairwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::cost_model::{solve_rebalance, CostSpec};
use crate::error::{Error, Result};
use crate::portfolio::l1_distance;

/// Penalized objective `mean − λ·var − γ·l1`, the scalar form of the cost-sensitive reward.
pub type Objective = fn(mean: f64, variance: f64, mean_l1: f64, lambda: f64, gamma: f64) -> f64;

pub fn penalized_objective(mean: f64, variance: f64, mean_l1: f64, lambda: f64, gamma: f64) -> f64 {
    mean - lambda * variance - gamma * mean_l1
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoremSpec {
    pub samples: usize,
    /// Support points per sampled return distribution.
    pub support: usize,
    /// Simplex pairs per sample for the expected turnover.
    pub pairs: usize,
    /// Assets in each simplex vector, cash included.
    pub assets: usize,
    pub psi: f64,
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub seed: u64,
}

impl Default for TheoremSpec {
    fn default() -> Self {
        let grid = vec![1e-4, 1e-3, 1e-2, 1e-1];
        Self { samples: 10_000, support: 8, pairs: 8, assets: 4, psi: 0.0025, lambdas: grid.clone(), gammas: grid, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub check: &'static str,
    pub sample: usize,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TheoremReport {
    pub checks: usize,
    pub violations: Vec<Violation>,
    /// Largest `Var(log r)` seen on `(1, e]` support.
    pub max_variance_on_upper: f64,
    pub max_expected_l1: f64,
}

impl TheoremReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Weighted mean and variance of `log r`.
pub fn log_moments(values: &[f64], probs: &[f64]) -> (f64, f64) {
    let mean: f64 = values.iter().zip(probs).map(|(v, p)| p * v.ln()).sum();
    let var = values.iter().zip(probs).map(|(v, p)| p * (v.ln() - mean).powi(2)).sum();
    (mean, var)
}

fn dirichlet(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let g = Gamma::new(1.0, 1.0).expect("valid gamma");
    let mut w: Vec<f64> = (0..n).map(|_| g.sample(rng)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

const TOL: f64 = 1e-12;

/// Runs the suite with the given objective (normally
/// [`penalized_objective`]; mutation tests pass a broken one).
pub fn verify_theorem_bounds(spec: &TheoremSpec, objective: Objective) -> Result<TheoremReport> {
    if spec.support == 0 || spec.pairs == 0 || spec.assets < 2 {
        return Err(Error::Config("theorem suite needs support >= 1, pairs >= 1, assets >= 2".into()));
    }
    let psi = spec.psi;
    let cost = CostSpec::symmetric(psi)?;
    let l1_ceiling = 2.0 * (1.0 - psi) / (1.0 + psi);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut report = TheoremReport::default();
    let fail = |report: &mut TheoremReport, check, sample, detail: String| {
        report.violations.push(Violation { check, sample, detail });
    };

    for s in 0..spec.samples {
        // (a) support in [1/e, e]
        let probs = dirichlet(&mut rng, spec.support);
        let full: Vec<f64> = (0..spec.support).map(|_| rng.random_range(-1.0..=1.0f64).exp()).collect();
        let (mean, var) = log_moments(&full, &probs);
        for &lambda in &spec.lambdas {
            let h = objective(mean, var, 0.0, lambda, 0.0);
            report.checks += 1;
            if h > mean + TOL {
                fail(&mut report, "a: h(r) <= E log r", s, format!("lambda {lambda}: h = {h}, E log r = {mean}"));
            }
        }

        // (b) support in (1, e]
        let upper: Vec<f64> = (0..spec.support).map(|_| (1.0 - rng.random::<f64>()).exp()).collect();
        let (mean_u, var_u) = log_moments(&upper, &probs);
        report.max_variance_on_upper = report.max_variance_on_upper.max(var_u);
        report.checks += 1;
        if var_u > 0.25 + TOL {
            fail(&mut report, "b: Var(log r) <= 1/4", s, format!("variance {var_u} on support {upper:?}"));
        }
        for &lambda in &spec.lambdas {
            let h = objective(mean_u, var_u, 0.0, lambda, 0.0);
            report.checks += 1;
            if h < mean_u - lambda / 4.0 - TOL {
                fail(&mut report, "b: h(r) >= E log r - lambda/4", s, format!("lambda {lambda}: h = {h}, E log r = {mean_u}"));
            }
        }

        // (c) expected turnover over non-identical pairs with feasible cost
        let mut total = 0.0;
        let mut used = 0;
        while used < spec.pairs {
            let a = dirichlet(&mut rng, spec.assets);
            let b = dirichlet(&mut rng, spec.assets);
            let l1 = l1_distance(&a, &b);
            if l1 == 0.0 || solve_rebalance(&b, &a, &cost)?.cost >= 1.0 {
                continue;
            }
            total += l1;
            used += 1;
        }
        let el1 = total / spec.pairs as f64;
        report.max_expected_l1 = report.max_expected_l1.max(el1);
        report.checks += 1;
        if !(el1 > 0.0 && el1 <= l1_ceiling + TOL) {
            fail(&mut report, "c: E L1 in (0, 2(1-psi)/(1+psi)]", s, format!("E L1 = {el1}, ceiling {l1_ceiling}"));
        }
        for &lambda in &spec.lambdas {
            for &gamma in &spec.gammas {
                let plain = objective(mean, var, el1, 0.0, 0.0);
                let pen = objective(mean, var, el1, lambda, gamma);
                let width = 2.25 * lambda + gamma * l1_ceiling;
                let gap = plain - pen;
                report.checks += 1;
                if !(gap >= -TOL && gap <= width + TOL) {
                    fail(
                        &mut report,
                        "c: sandwich width (9/4)lambda + 2gamma(1-psi)/(1+psi)",
                        s,
                        format!("lambda {lambda}, gamma {gamma}: gap {gap}, width {width}, E L1 {el1}, Var {var}"),
                    );
                }
            }
        }
    }
    Ok(report)
}
