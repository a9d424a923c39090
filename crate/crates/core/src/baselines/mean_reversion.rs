//! Mean-reversion strategies: PAMR, OLMAR, RMR, WMAMR, CWMR.
//!
//! All keep their own target portfolio `b` (starting uniform over risky
//! assets) and update it once per decision from the relatives seen so far.

use nalgebra::{DMatrix, DVector};

use crate::backtest::{DecisionContext, Strategy};
use crate::error::Result;
use crate::market_data::PriceRelativeVector;
use crate::portfolio::{dot, uniform_risky};

use super::simplex::project_simplex;
use super::weiszfeld::l1_median;

fn centered(x: &[f64]) -> (Vec<f64>, f64) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let norm2 = c.iter().map(|v| v * v).sum();
    (c, norm2)
}

/// Passive-aggressive step away from `x`: `b - τ(x - x̄1)` with
/// `τ = max(0, bᵀx - ε)/‖x - x̄1‖²`, projected. Constant `x` leaves `b`
/// unchanged.
pub fn pamr_update(b: &[f64], x: &[f64], eps: f64) -> Vec<f64> {
    let loss = (dot(b, x) - eps).max(0.0);
    let (c, norm2) = centered(x);
    if loss == 0.0 || norm2 == 0.0 {
        return b.to_vec();
    }
    let tau = loss / norm2;
    let v: Vec<f64> = b.iter().zip(&c).map(|(bi, ci)| bi - tau * ci).collect();
    project_simplex(&v)
}

/// Step toward the predicted relatives `x̃`: `b + τ(x̃ - x̄̃1)` with
/// `τ = max(0, ε - bᵀx̃)/‖x̃ - x̄̃1‖²`, projected.
pub fn olmar_update(b: &[f64], x_pred: &[f64], eps: f64) -> Vec<f64> {
    let gap = (eps - dot(b, x_pred)).max(0.0);
    let (c, norm2) = centered(x_pred);
    if gap == 0.0 || norm2 == 0.0 {
        return b.to_vec();
    }
    let tau = gap / norm2;
    let v: Vec<f64> = b.iter().zip(&c).map(|(bi, ci)| bi + tau * ci).collect();
    project_simplex(&v)
}

/// The last `window` prices relative to the latest one, newest first:
/// `p_{t-1-i} / p_{t-1}` for `i = 0..window` (fewer if history is short).
pub fn relative_price_history(history: &[PriceRelativeVector], window: usize, d: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![1.0; d]];
    let mut ratio = vec![1.0; d];
    for x in history.iter().rev().take(window.saturating_sub(1)) {
        for (r, v) in ratio.iter_mut().zip(x.iter()) {
            *r /= v;
        }
        out.push(ratio.clone());
    }
    out
}

#[derive(Clone, Debug)]
pub struct Pamr {
    eps: f64,
    b: Vec<f64>,
}

impl Pamr {
    pub fn new(eps: f64) -> Self {
        Self { eps, b: Vec::new() }
    }
}

impl Strategy for Pamr {
    fn name(&self) -> String {
        "pamr".into()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>> {
        if self.b.is_empty() {
            self.b = uniform_risky(ctx.n_assets());
        } else if let Some(x) = ctx.history.last() {
            self.b = pamr_update(&self.b, x, self.eps);
        }
        Ok(self.b.clone())
    }
}

/// Which price prediction feeds the OLMAR-style update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Predictor {
    MovingAverage,
    L1Median,
}

#[derive(Clone, Debug)]
pub struct Olmar {
    window: usize,
    eps: f64,
    predictor: Predictor,
    tol: f64,
    max_iter: usize,
    b: Vec<f64>,
}

impl Olmar {
    pub fn new(window: usize, eps: f64) -> Self {
        Self { window: window.max(1), eps, predictor: Predictor::MovingAverage, tol: 0.0, max_iter: 0, b: Vec::new() }
    }

    /// RMR: the same update with the L1-median prediction.
    pub fn rmr(window: usize, eps: f64, tol: f64, max_iter: usize) -> Self {
        Self { window: window.max(1), eps, predictor: Predictor::L1Median, tol, max_iter, b: Vec::new() }
    }

    fn predict(&self, history: &[PriceRelativeVector], d: usize) -> Vec<f64> {
        let points = relative_price_history(history, self.window, d);
        match self.predictor {
            Predictor::MovingAverage => {
                let n = points.len() as f64;
                (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect()
            }
            Predictor::L1Median => l1_median(&points, self.tol, self.max_iter).median,
        }
    }
}

impl Strategy for Olmar {
    fn name(&self) -> String {
        match self.predictor {
            Predictor::MovingAverage => "olmar".into(),
            Predictor::L1Median => "rmr".into(),
        }
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>> {
        if self.b.is_empty() {
            self.b = uniform_risky(ctx.n_assets());
        } else if !ctx.history.is_empty() {
            let pred = self.predict(ctx.history, ctx.n_assets());
            self.b = olmar_update(&self.b, &pred, self.eps);
        }
        Ok(self.b.clone())
    }
}

/// PAMR's ε-insensitive update applied to the mean of the last `window`
/// relatives.
#[derive(Clone, Debug)]
pub struct Wmamr {
    window: usize,
    eps: f64,
    b: Vec<f64>,
}

impl Wmamr {
    pub fn new(window: usize, eps: f64) -> Self {
        Self { window: window.max(1), eps, b: Vec::new() }
    }
}

impl Strategy for Wmamr {
    fn name(&self) -> String {
        "wmamr".into()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>> {
        if self.b.is_empty() {
            self.b = uniform_risky(ctx.n_assets());
        } else if !ctx.history.is_empty() {
            let recent: Vec<&PriceRelativeVector> = ctx.history.iter().rev().take(self.window).collect();
            let n = recent.len() as f64;
            let avg: Vec<f64> = (0..ctx.n_assets()).map(|j| recent.iter().map(|x| x[j]).sum::<f64>() / n).collect();
            self.b = pamr_update(&self.b, &avg, self.eps);
        }
        Ok(self.b.clone())
    }
}

/// Confidence-weighted mean reversion, variance form, full covariance.
///
/// Solves `min KL(N(μ,Σ) ‖ N(μ_t,Σ_t))` s.t. `μᵀx + φ·xᵀΣx ≤ ε`, `1ᵀμ = 1`.
/// The KKT conditions give `μ = μ_t - λΣ_t(x - x̄1)` and
/// `Σ⁻¹ = Σ_t⁻¹ + 2λφ·xxᵀ`; substituting into the active constraint leaves
/// a quadratic in `λ`.
#[derive(Clone, Debug)]
pub struct Cwmr {
    eps: f64,
    phi: f64,
    mu: Vec<f64>,
    sigma: DMatrix<f64>,
}

impl Cwmr {
    pub fn new(eps: f64, phi: f64) -> Self {
        Self { eps, phi, mu: Vec::new(), sigma: DMatrix::zeros(0, 0) }
    }

    fn update(&mut self, x: &[f64]) {
        let d = x.len();
        let xv = DVector::from_column_slice(x);
        let ones = DVector::from_element(d, 1.0);
        let sx = &self.sigma * &xv;
        let m = dot(&self.mu, x);
        let v = xv.dot(&sx);
        let w = ones.dot(&sx);
        let x_bar = w / ones.dot(&(&self.sigma * &ones));
        let e = self.eps - m;
        let c = e - self.phi * v;
        if c >= 0.0 {
            return; // constraint already satisfied
        }
        let dd = v - x_bar * w;
        let a = 2.0 * self.phi * v * dd;
        let b = dd + 2.0 * self.phi * v * e;
        let lambda = if a.abs() > 1e-14 {
            let disc = (b * b - 4.0 * a * c).max(0.0);
            let r1 = (-b + disc.sqrt()) / (2.0 * a);
            let r2 = (-b - disc.sqrt()) / (2.0 * a);
            r1.max(r2).max(0.0)
        } else if b.abs() > 1e-14 {
            (-c / b).max(0.0)
        } else {
            0.0
        };
        let lambda = if lambda.is_finite() { lambda.min(1e7) } else { 0.0 };
        if lambda == 0.0 {
            return;
        }
        let shift = &self.sigma * (&xv - &ones * x_bar) * lambda;
        let mu: Vec<f64> = self.mu.iter().zip(shift.iter()).map(|(a, s)| a - s).collect();
        let k = 2.0 * lambda * self.phi;
        self.sigma -= (&sx * sx.transpose()) * (k / (1.0 + k * v));
        // symmetrize and restore the initial scale so the update never freezes
        self.sigma = (&self.sigma + self.sigma.transpose()) * 0.5;
        let tr = self.sigma.trace();
        if tr > 0.0 {
            self.sigma *= (1.0 / d as f64) / tr;
        }
        self.mu = project_simplex(&mu);
    }
}

impl Strategy for Cwmr {
    fn name(&self) -> String {
        "cwmr".into()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>> {
        let d = ctx.n_assets();
        if self.mu.is_empty() {
            self.mu = uniform_risky(d);
            self.sigma = DMatrix::identity(d, d) / (d * d) as f64;
        } else if let Some(x) = ctx.history.last() {
            self.update(x);
        }
        Ok(self.mu.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pamr_hand_example() {
        assert_eq!(pamr_update(&[0.5, 0.5], &[1.2, 0.8], 0.5), vec![0.0, 1.0]);
    }

    #[test]
    fn olmar_constant_prices_is_noop() {
        let b = [0.1, 0.2, 0.7];
        assert_eq!(olmar_update(&b, &[1.0, 1.0, 1.0], 10.0), b.to_vec());
    }

    #[test]
    fn price_history_newest_first() {
        let h = vec![PriceRelativeVector::new(vec![1.0, 2.0]).unwrap(), PriceRelativeVector::new(vec![1.0, 4.0]).unwrap()];
        let p = relative_price_history(&h, 5, 2);
        assert_eq!(p, vec![vec![1.0, 1.0], vec![1.0, 0.25], vec![1.0, 0.125]]);
    }
}
