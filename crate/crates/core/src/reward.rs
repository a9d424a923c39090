//! The cost-sensitive reward
//!
//! ```text
//! R = mean(r̂) - λ·var(r̂) - γ/(T-1) · Σ_{t=2..T} ‖a_t - â_{t-1}‖₁
//! ```
//!
//! over rebalanced log-returns `r̂_t = log(a_tᵀx_t · (1 - c_t))`. The
//! variance is the population variance (divisor `T`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::l1_distance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    /// Mean log-return only.
    LogReturn,
    /// Mean minus `λ` times variance.
    RiskSensitive,
    /// All three terms.
    CostSensitive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub variant: RewardVariant,
}

impl RewardConfig {
    pub fn cost_sensitive(lambda: f64, gamma: f64) -> Self {
        Self { lambda, gamma, variant: RewardVariant::CostSensitive }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.gamma >= 0.0) {
            return Err(Error::Config(format!("lambda and gamma must be nonnegative, got {} and {}", self.lambda, self.gamma)));
        }
        Ok(())
    }

    /// `λ` after applying the variant.
    pub fn risk_weight(&self) -> f64 {
        match self.variant {
            RewardVariant::LogReturn => 0.0,
            _ => self.lambda,
        }
    }

    /// `γ` after applying the variant.
    pub fn turnover_weight(&self) -> f64 {
        match self.variant {
            RewardVariant::CostSensitive => self.gamma,
            _ => 0.0,
        }
    }
}

/// The individual terms of one reward evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RewardTerms {
    pub mean_log_return: f64,
    pub variance: f64,
    /// Mean L1 distance `‖a_t - â_{t-1}‖₁` over `t = 2..T` (0 when `T = 1`).
    pub mean_l1: f64,
    pub reward: f64,
}

/// Population mean and variance.
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// All reward terms. `drifted[t]` is `â_{t-1}`, the holdings right before
/// the rebalance into `actions[t]`.
pub fn reward_terms(log_returns: &[f64], actions: &[Vec<f64>], drifted: &[Vec<f64>], cfg: &RewardConfig) -> Result<RewardTerms> {
    cfg.validate()?;
    let t_len = log_returns.len();
    if t_len == 0 {
        return Err(Error::contract("reward needs at least one period"));
    }
    if actions.len() != t_len || drifted.len() != t_len {
        return Err(Error::contract(format!(
            "reward inputs disagree in length: {} returns, {} actions, {} drifted",
            t_len,
            actions.len(),
            drifted.len()
        )));
    }
    let lambda = cfg.risk_weight();
    let gamma = cfg.turnover_weight();
    if t_len < 2 && (lambda > 0.0 || gamma > 0.0) {
        return Err(Error::contract("variance and turnover terms need T >= 2"));
    }
    let (mean, variance) = mean_and_variance(log_returns);
    let mean_l1 = if t_len < 2 { 0.0 } else { (1..t_len).map(|t| l1_distance(&actions[t], &drifted[t])).sum::<f64>() / (t_len - 1) as f64 };
    let reward = mean - lambda * variance - gamma * mean_l1;
    Ok(RewardTerms { mean_log_return: mean, variance, mean_l1, reward })
}

pub fn compute_reward(log_returns: &[f64], actions: &[Vec<f64>], drifted: &[Vec<f64>], cfg: &RewardConfig) -> Result<f64> {
    reward_terms(log_returns, actions, drifted, cfg).map(|t| t.reward)
}
