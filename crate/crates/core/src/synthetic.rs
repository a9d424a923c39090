//! Seeded synthetic OHLC markets for tests, examples, and the bundled panel.
//!
//! Each asset's log close is `μ·t + z_t` with `z_t = (1 − κ)·z_{t−1} + σ·ε_t`:
//! `κ = 0` is a drifting random walk, `κ > 0` reverts to the trend line.
//! Opens equal the previous close; highs and lows widen the open/close range
//! by a half-normal multiple of `σ / 2`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{Bar, PricePanel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetProcess {
    /// Per-period log drift `μ`.
    pub drift: f64,
    /// Per-period log volatility `σ`.
    pub vol: f64,
    /// Mean-reversion speed `κ ∈ [0, 1]`.
    pub reversion: f64,
}

impl AssetProcess {
    pub fn walk(drift: f64, vol: f64) -> Self {
        Self { drift, vol, reversion: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub periods: usize,
    pub assets: Vec<AssetProcess>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn generate(&self) -> Result<PricePanel> {
        if self.assets.iter().any(|a| !(a.vol >= 0.0 && (0.0..=1.0).contains(&a.reversion) && a.drift.is_finite())) {
            return Err(Error::Config("synthetic asset needs vol >= 0, reversion in [0, 1], finite drift".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut bars = Vec::with_capacity(self.assets.len());
        for a in &self.assets {
            let mut col = Vec::with_capacity(self.periods);
            let mut z = 0.0;
            let mut prev = 1.0;
            for t in 0..self.periods {
                let eps: f64 = StandardNormal.sample(&mut rng);
                let wick_hi: f64 = StandardNormal.sample(&mut rng);
                let wick_lo: f64 = StandardNormal.sample(&mut rng);
                if t > 0 {
                    z = (1.0 - a.reversion) * z + a.vol * eps;
                }
                let close = (a.drift * t as f64 + z).exp();
                let open = if t == 0 { close } else { prev };
                let half = a.vol / 2.0;
                col.push(Bar {
                    open,
                    high: open.max(close) * (wick_hi.abs() * half).exp(),
                    low: open.min(close) * (-wick_lo.abs() * half).exp(),
                    close,
                });
                prev = close;
            }
            bars.push(col);
        }
        PricePanel::from_bars(bars)
    }
}

/// The market used by the trend tests: the first asset drifts up by `mu`
/// per period, the others have no drift; all share volatility `sigma`.
pub fn drift_market(periods: usize, risky: usize, mu: f64, sigma: f64, seed: u64) -> Result<PricePanel> {
    let assets = (0..risky).map(|i| AssetProcess::walk(if i == 0 { mu } else { 0.0 }, sigma)).collect();
    SyntheticSpec { periods, assets, seed }.generate()
}

/// Names, first timestamp and period of the bundled panel's CSV files.
pub const BUNDLED_ASSETS: [&str; 3] = ["syn_trend", "syn_revert", "syn_noise"];
pub const BUNDLED_START: i64 = 1_483_228_800;
pub const BUNDLED_PERIOD: i64 = 1800;

/// The bundled panel as written to disk: [`bundled_spec`] on a 30-minute
/// grid with the [`BUNDLED_ASSETS`] names.
pub fn bundled_panel() -> Result<PricePanel> {
    bundled_spec().generate()?.retimed(BUNDLED_START, BUNDLED_PERIOD)?.renamed(BUNDLED_ASSETS)
}

/// The bundled 3-asset, 2000-period panel: a trending asset, a
/// mean-reverting one, and a volatile driftless one.
pub fn bundled_spec() -> SyntheticSpec {
    SyntheticSpec {
        periods: 2000,
        assets: vec![
            AssetProcess::walk(0.0004, 0.01),
            AssetProcess { drift: 0.0001, vol: 0.012, reversion: 0.05 },
            AssetProcess::walk(0.0, 0.02),
        ],
        seed: 20170101,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_vol_walk_is_a_pure_trend() {
        let p = drift_market(5, 2, 0.01, 0.0, 1).unwrap();
        let x = p.price_relative(3).unwrap();
        assert!((x[1] - 0.01f64.exp()).abs() < 1e-12);
        assert!((x[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_panel() {
        let a = bundled_spec().generate().unwrap();
        let b = bundled_spec().generate().unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.n_periods(), 2000);
        assert_eq!(a.n_risky(), 3);
    }
}
