//! Anticor (Borodin, El-Yaniv and Gogan 2004).

use crate::backtest::{DecisionContext, Strategy};
use crate::error::Result;
use crate::market_data::PriceRelativeVector;
use crate::portfolio::uniform_risky;

#[derive(Clone, Debug)]
pub struct Anticor {
    window: usize,
    b: Vec<f64>,
}

impl Anticor {
    pub fn new(window: usize) -> Self {
        Self { window: window.max(2), b: Vec::new() }
    }
}

/// Wealth claims `claim[i][j]` from asset `i` to asset `j` for two
/// consecutive windows of log-relatives (`lx1` older, `lx2` newer; each
/// row is one period).
pub fn claims(lx1: &[Vec<f64>], lx2: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let w = lx1.len();
    let d = lx1[0].len();
    let col_mean = |lx: &[Vec<f64>], j: usize| lx.iter().map(|r| r[j]).sum::<f64>() / w as f64;
    let mu1: Vec<f64> = (0..d).map(|j| col_mean(lx1, j)).collect();
    let mu2: Vec<f64> = (0..d).map(|j| col_mean(lx2, j)).collect();
    let denom = (w - 1) as f64;
    let sd = |lx: &[Vec<f64>], mu: &[f64], j: usize| (lx.iter().map(|r| (r[j] - mu[j]).powi(2)).sum::<f64>() / denom).sqrt();
    let s1: Vec<f64> = (0..d).map(|j| sd(lx1, &mu1, j)).collect();
    let s2: Vec<f64> = (0..d).map(|j| sd(lx2, &mu2, j)).collect();

    let mut corr = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            if s1[i] > 0.0 && s2[j] > 0.0 {
                let cov = (0..w).map(|t| (lx1[t][i] - mu1[i]) * (lx2[t][j] - mu2[j])).sum::<f64>() / denom;
                corr[i][j] = cov / (s1[i] * s2[j]);
            }
        }
    }
    let mut claim = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            if i != j && mu2[i] > mu2[j] && corr[i][j] > 0.0 {
                claim[i][j] = corr[i][j] + (-corr[i][i]).max(0.0) + (-corr[j][j]).max(0.0);
            }
        }
    }
    claim
}

/// Moves `b_i · claim[i][j] / Σ_k claim[i][k]` from every `i` to every `j`.
pub fn apply_claims(b: &[f64], claim: &[Vec<f64>]) -> Vec<f64> {
    let mut out = b.to_vec();
    for (i, row) in claim.iter().enumerate() {
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            continue;
        }
        for (j, &c) in row.iter().enumerate() {
            let moved = b[i] * c / total;
            out[i] -= moved;
            out[j] += moved;
        }
    }
    // transfers conserve the total up to rounding; clip it away
    for v in &mut out {
        *v = v.max(0.0);
    }
    let s: f64 = out.iter().sum();
    out.iter().map(|v| v / s).collect()
}

fn log_rows(xs: &[PriceRelativeVector]) -> Vec<Vec<f64>> {
    xs.iter().map(|x| x.iter().map(|v| v.ln()).collect()).collect()
}

impl Strategy for Anticor {
    fn name(&self) -> String {
        "anticor".into()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>> {
        if self.b.is_empty() {
            self.b = uniform_risky(ctx.n_assets());
        }
        let h = ctx.history;
        let w = self.window;
        if h.len() < 2 * w {
            return Ok(self.b.clone());
        }
        let lx1 = log_rows(&h[h.len() - 2 * w..h.len() - w]);
        let lx2 = log_rows(&h[h.len() - w..]);
        self.b = apply_claims(&self.b, &claims(&lx1, &lx2));
        Ok(self.b.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_returns_make_no_claims() {
        let lx = vec![vec![0.01, 0.01]; 4];
        let c = claims(&lx, &lx);
        assert!(c.iter().flatten().all(|&v| v == 0.0));
    }
}
