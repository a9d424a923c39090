//! Portfolio vectors over cash plus `m` risky assets.
//!
//! Index 0 is always cash. Every vector handed to the cost model or the
//! backtest must lie on the probability simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a vector lies on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-10;

/// Nonnegative weights over `m + 1` assets summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PortfolioVector(Vec<f64>);

impl PortfolioVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_simplex(&weights, "portfolio")?;
        Ok(Self(weights))
    }

    /// All wealth in cash: `(1, 0, ..., 0)`.
    pub fn cash(n_assets: usize) -> Self {
        let mut w = vec![0.0; n_assets];
        w[0] = 1.0;
        Self(w)
    }

    /// Uniform over the risky assets, nothing in cash.
    pub fn uniform_risky(n_assets: usize) -> Self {
        Self(uniform_risky(n_assets))
    }

    /// Uniform over every asset including cash.
    pub fn uniform(n_assets: usize) -> Self {
        Self(vec![1.0 / n_assets as f64; n_assets])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Risky components only (cash dropped).
    pub fn risky(&self) -> &[f64] {
        &self.0[1..]
    }
}

impl std::ops::Deref for PortfolioVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn uniform_risky(n_assets: usize) -> Vec<f64> {
    let mut w = vec![0.0; n_assets];
    if n_assets == 1 {
        w[0] = 1.0;
        return w;
    }
    let share = 1.0 / (n_assets - 1) as f64;
    for v in &mut w[1..] {
        *v = share;
    }
    w
}

/// Checks nonnegativity and unit sum within [`SIMPLEX_TOL`].
pub fn check_simplex(w: &[f64], what: &str) -> Result<()> {
    if w.is_empty() {
        return Err(Error::contract(format!("{what}: empty weight vector")));
    }
    let mut sum = 0.0;
    for (i, &v) in w.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::contract(format!("{what}: weight {i} is not finite ({v})")));
        }
        if v < -SIMPLEX_TOL {
            return Err(Error::contract(format!("{what}: weight {i} is negative ({v:e})")));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::contract(format!("{what}: weights sum to {sum}, expected 1")));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
