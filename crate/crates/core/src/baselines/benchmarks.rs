//! UBAH, Best-in-hindsight, and CRP.

use crate::backtest::{DecisionContext, Strategy};
use crate::error::{Error, Result};
use crate::market_data::PriceRelativeVector;
use crate::portfolio::{check_simplex, uniform_risky};

/// Buys uniform over the risky assets once, then never trades.
#[derive(Clone, Debug, Default)]
pub struct Ubah {
    started: bool,
}

impl Ubah {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Strategy for Ubah {
    fn name(&self) -> String {
        "ubah".into()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>> {
        if !self.started {
            self.started = true;
            return Ok(uniform_risky(ctx.n_assets()));
        }
        Ok(ctx.drifted.to_vec())
    }
}

/// Holds the risky asset with the largest cumulative relative over the
/// evaluation range. Needs the future, so it is built from the relatives of
/// exactly the periods it will be asked about. Ties go to the lowest index.
#[derive(Clone, Debug)]
pub struct Best {
    asset: usize,
    n_assets: usize,
}

impl Best {
    pub fn in_hindsight(relatives: &[PriceRelativeVector]) -> Result<Self> {
        let n_assets = relatives.first().ok_or_else(|| Error::contract("best: empty evaluation range"))?.len();
        if n_assets < 2 {
            return Err(Error::contract("best: no risky asset"));
        }
        let mut log_growth = vec![0.0; n_assets];
        for x in relatives {
            for (g, v) in log_growth.iter_mut().zip(x.iter()) {
                *g += v.ln();
            }
        }
        let mut asset = 1;
        for i in 2..n_assets {
            if log_growth[i] > log_growth[asset] {
                asset = i;
            }
        }
        Ok(Self { asset, n_assets })
    }

    pub fn asset(&self) -> usize {
        self.asset
    }
}

impl Strategy for Best {
    fn name(&self) -> String {
        "best".into()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>> {
        if ctx.n_assets() != self.n_assets {
            return Err(Error::contract("best: asset count differs from the hindsight range"));
        }
        let mut w = vec![0.0; self.n_assets];
        w[self.asset] = 1.0;
        Ok(w)
    }
}

/// Rebalances to fixed weights every period (uniform over risky by default).
#[derive(Clone, Debug, Default)]
pub struct Crp {
    weights: Option<Vec<f64>>,
}

impl Crp {
    pub fn uniform() -> Self {
        Self { weights: None }
    }

    pub fn with_weights(weights: Vec<f64>) -> Result<Self> {
        check_simplex(&weights, "crp weights")?;
        Ok(Self { weights: Some(weights) })
    }
}

impl Strategy for Crp {
    fn name(&self) -> String {
        "crp".into()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>> {
        match &self.weights {
            Some(w) if w.len() == ctx.n_assets() => Ok(w.clone()),
            Some(w) => Err(Error::contract(format!("crp: {} weights for {} assets", w.len(), ctx.n_assets()))),
            None => Ok(uniform_risky(ctx.n_assets())),
        }
    }
}
