//! Proportional transaction costs.
//!
//! Rebalancing from the drifted holdings `â` to a target `a` leaves a net
//! wealth fraction `ω = 1 - c`. With purchase rate `ψ_p` and sale rate
//! `ψ_s`, and fees charged only on risky assets, the cash account balances
//! when
//!
//! ```text
//! 1 - ω = (ψ_p + ψ_s) / (1 + ψ_p) · Σ_{i≥1} (â_i - a_i ω)^+
//!       +        ψ_p  / (1 + ψ_p) · (â_0 - a_0 ω)
//! ```
//!
//! The second line is the cash leg: it vanishes when the cash position is
//! carried over unchanged, and it is what charges the purchase fee on a
//! cash-to-risky move. The right-hand side is nonincreasing in `ω`, so the
//! root is unique and bisection brackets it. Expanding the same balance
//! gives the sales/purchases decomposition
//! `c = ψ_s Σ (â_i - a_i ω)^+ + ψ_p Σ (a_i ω - â_i)^+`, which
//! [`decomposed_cost`] evaluates independently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::{check_simplex, l1_distance};

const BISECTION_TOL: f64 = 1e-14;
const BISECTION_MAX_ITER: usize = 200;

/// Purchase and sale commission rates, each in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub purchase: f64,
    pub sale: f64,
}

impl CostSpec {
    pub fn new(purchase: f64, sale: f64) -> Result<Self> {
        for (name, r) in [("purchase", purchase), ("sale", sale)] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("{name} rate must lie in [0, 1), got {r}")));
            }
        }
        Ok(Self { purchase, sale })
    }

    pub fn symmetric(psi: f64) -> Result<Self> {
        Self::new(psi, psi)
    }

    pub fn free() -> Self {
        Self { purchase: 0.0, sale: 0.0 }
    }

    /// The common rate when purchases and sales cost the same.
    pub fn common_rate(&self) -> Option<f64> {
        (self.purchase == self.sale).then_some(self.purchase)
    }

    /// Largest cost fraction any rebalance can incur, `2ψ/(1+ψ)` in the
    /// symmetric case.
    pub fn max_cost(&self) -> f64 {
        (self.purchase + self.sale) / (1.0 + self.purchase).min(1.0 + self.sale)
    }
}

/// Outcome of one rebalance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RebalanceResult {
    /// Net wealth fraction kept after fees.
    pub omega: f64,
    /// Fee fraction `1 - ω`.
    pub cost: f64,
    /// Per-asset sold fraction `(â_i - a_i ω)^+`; cash entry is 0.
    pub sales: Vec<f64>,
    /// Per-asset bought fraction `(a_i ω - â_i)^+`; cash entry is 0.
    pub purchases: Vec<f64>,
    pub iterations: usize,
}

/// `â = (a ⊙ x) / (aᵀx)`: holdings after one period of price moves.
pub fn drift_portfolio(prev: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = prev.iter().zip(x).map(|(a, r)| a * r).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// `f(ω) = 1 - ω - RHS(ω)` for the cash-balance equation; strictly
/// decreasing with slope at most -1.
pub fn balance_residual(a_hat: &[f64], a_new: &[f64], spec: &CostSpec, omega: f64) -> f64 {
    let k_sales = (spec.purchase + spec.sale) / (1.0 + spec.purchase);
    let k_cash = spec.purchase / (1.0 + spec.purchase);
    let sold: f64 = a_hat[1..].iter().zip(&a_new[1..]).map(|(h, a)| (h - a * omega).max(0.0)).sum();
    1.0 - omega - k_sales * sold - k_cash * (a_hat[0] - a_new[0] * omega)
}

/// `ψ_s Σ (â_i - a_i ω)^+ + ψ_p Σ (a_i ω - â_i)^+` over risky assets.
pub fn decomposed_cost(a_hat: &[f64], a_new: &[f64], spec: &CostSpec, omega: f64) -> f64 {
    let mut sold = 0.0;
    let mut bought = 0.0;
    for (h, a) in a_hat[1..].iter().zip(&a_new[1..]) {
        let d = h - a * omega;
        if d > 0.0 {
            sold += d;
        } else {
            bought -= d;
        }
    }
    spec.sale * sold + spec.purchase * bought
}

/// Solves the cash-balance equation for `ω` by bisection.
pub fn solve_rebalance(a_hat: &[f64], a_new: &[f64], spec: &CostSpec) -> Result<RebalanceResult> {
    check_simplex(a_hat, "drifted portfolio")?;
    check_simplex(a_new, "target portfolio")?;
    if a_hat.len() != a_new.len() {
        return Err(Error::contract(format!("portfolio lengths differ: {} vs {}", a_hat.len(), a_new.len())));
    }

    let f = |w: f64| balance_residual(a_hat, a_new, spec, w);
    let mut iterations = 0;
    let omega = if f(1.0) >= 0.0 {
        1.0
    } else {
        let mut lo = match spec.common_rate() {
            Some(psi) => 1.0 - 2.0 * psi / (1.0 + psi),
            None => 1.0 - spec.max_cost(),
        };
        if f(lo) < 0.0 {
            lo = 0.0;
        }
        let mut hi = 1.0;
        while hi - lo > BISECTION_TOL && iterations < BISECTION_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if f(mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            iterations += 1;
        }
        0.5 * (lo + hi)
    };

    let mut sales = vec![0.0; a_new.len()];
    let mut purchases = vec![0.0; a_new.len()];
    for i in 1..a_new.len() {
        let d = a_hat[i] - a_new[i] * omega;
        if d > 0.0 {
            sales[i] = d;
        } else {
            purchases[i] = -d;
        }
    }
    Ok(RebalanceResult { omega, cost: 1.0 - omega, sales, purchases, iterations })
}

/// Half the L1 distance between drifted holdings and post-cost targets.
pub fn turnover_term(a_hat: &[f64], a_new: &[f64], omega: f64) -> f64 {
    0.5 * a_hat.iter().zip(a_new).map(|(h, a)| (h - a * omega).abs()).sum::<f64>()
}

/// Margins of the cost bracket `ψ/(1+ψ)·L1 ≤ c ≤ ψ/(1-ψ)·L1` and of the
/// ceilings `c ≤ 2ψ/(1+ψ)`, `L1 ≤ 2`.
///
/// `L1` is measured over the risky coordinates, the ones fees are charged
/// on. Over all `m + 1` coordinates the lower bound fails for cash trades
/// (all-cash to one asset has full L1 = 2 but costs only `ψ/(1+ψ)`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub psi: f64,
    pub cost: f64,
    pub l1_risky: f64,
    pub l1_full: f64,
    pub lower: f64,
    pub upper: f64,
    pub cost_ceiling: f64,
    pub violations: Vec<String>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Absolute slack allowed on every bound comparison.
pub const BOUND_TOL: f64 = 1e-12;

pub fn check_cost_bounds(a_hat: &[f64], a_new: &[f64], spec: &CostSpec, result: &RebalanceResult) -> Result<BoundReport> {
    let psi = spec.common_rate().ok_or_else(|| Error::contract("cost bounds are stated for equal purchase and sale rates"))?;
    let l1_risky = l1_distance(&a_hat[1..], &a_new[1..]);
    let l1_full = l1_distance(a_hat, a_new);
    let lower = psi / (1.0 + psi) * l1_risky;
    let upper = if psi < 1.0 { psi / (1.0 - psi) * l1_risky } else { f64::INFINITY };
    let cost_ceiling = 2.0 * psi / (1.0 + psi);
    let c = result.cost;

    let mut violations = Vec::new();
    if c < lower - BOUND_TOL {
        violations.push(format!("cost {c:e} below lower bound {lower:e} (margin {:e})", lower - c));
    }
    if c > upper + BOUND_TOL {
        violations.push(format!("cost {c:e} above upper bound {upper:e} (margin {:e})", c - upper));
    }
    if c > cost_ceiling + BOUND_TOL {
        violations.push(format!("cost {c:e} above ceiling {cost_ceiling:e}"));
    }
    if l1_full > 2.0 + BOUND_TOL {
        violations.push(format!("L1 distance {l1_full} exceeds 2"));
    }
    if psi > 0.0 && (c == 0.0) != (l1_full == 0.0) {
        violations.push(format!("zero-cost iff no-trade broken: cost {c:e}, L1 {l1_full:e}"));
    }
    if !violations.is_empty() {
        violations.push(format!("inputs: a_hat = {a_hat:?}, a_new = {a_new:?}, psi = {psi}"));
    }
    Ok(BoundReport { psi, cost: c, l1_risky, l1_full, lower, upper, cost_ceiling, violations })
}
