//! Evaluation metrics over a [`BacktestLedger`].
//!
//! Ratios that would divide by zero are reported as `+∞` together with a
//! flag, never as a silent NaN.

use serde::{Deserialize, Serialize};

use crate::backtest::BacktestLedger;
use crate::reward::mean_and_variance;

/// A ratio that may be infinite. `infinite` is set whenever the
/// denominator vanished; `value` is then `f64::INFINITY`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    #[serde(with = "finite_or_null")]
    pub value: f64,
    pub infinite: bool,
}

impl Ratio {
    fn finite(value: f64) -> Self {
        Self { value, infinite: false }
    }

    fn inf() -> Self {
        Self { value: f64::INFINITY, infinite: true }
    }
}

// JSON has no infinity; the flag carries it.
mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub apv: f64,
    /// Per-period Sharpe ratio (not scaled; see [`MetricBlock::sr_pct`]).
    pub sr: Ratio,
    /// Population standard deviation of the rebalanced log-returns.
    pub std: f64,
    pub cr: Ratio,
    pub mdd: f64,
    pub to: f64,
}

impl MetricBlock {
    pub fn from_ledger(ledger: &BacktestLedger) -> Self {
        let r = ledger.log_returns();
        let (_, var) = if r.is_empty() { (0.0, 0.0) } else { mean_and_variance(&r) };
        Self {
            apv: apv(ledger),
            sr: sharpe(ledger),
            std: var.sqrt(),
            cr: calmar(ledger),
            mdd: max_drawdown(ledger),
            to: avg_turnover(ledger),
        }
    }

    pub fn sr_pct(&self) -> f64 {
        self.sr.value * 100.0
    }
}

/// Accumulated portfolio value `S_n` (with `S_0 = 1`).
pub fn apv(ledger: &BacktestLedger) -> f64 {
    ledger.final_wealth()
}

/// Mean over population standard deviation of the rebalanced log-returns.
pub fn sharpe(ledger: &BacktestLedger) -> Ratio {
    sharpe_of(&ledger.log_returns())
}

pub fn sharpe_of(returns: &[f64]) -> Ratio {
    if returns.is_empty() {
        return Ratio::finite(0.0);
    }
    let (mean, var) = mean_and_variance(returns);
    let std = var.sqrt();
    if std == 0.0 {
        return if mean == 0.0 { Ratio::finite(0.0) } else { Ratio::inf() };
    }
    Ratio::finite(mean / std)
}

pub fn max_drawdown(ledger: &BacktestLedger) -> f64 {
    max_drawdown_of(&ledger.wealth_path())
}

/// Running-peak maximum drawdown; `path` should include `S_0`.
pub fn max_drawdown_of(path: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    for &s in path {
        peak = peak.max(s);
        worst = worst.max((peak - s) / peak);
    }
    worst
}

/// Quadratic pair scan, kept as the oracle for [`max_drawdown_of`].
pub fn max_drawdown_exhaustive(path: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, &si) in path.iter().enumerate() {
        for &sj in &path[i + 1..] {
            worst = worst.max((si - sj) / si);
        }
    }
    worst
}

/// `S_n / MDD`.
pub fn calmar(ledger: &BacktestLedger) -> Ratio {
    calmar_of(apv(ledger), max_drawdown(ledger))
}

pub fn calmar_of(apv: f64, mdd: f64) -> Ratio {
    if mdd == 0.0 {
        Ratio::inf()
    } else {
        Ratio::finite(apv / mdd)
    }
}

/// Mean of the per-period turnover terms `‖â_{t-1} - a_t ω_t‖₁ / 2`.
pub fn avg_turnover(ledger: &BacktestLedger) -> f64 {
    if ledger.is_empty() {
        return 0.0;
    }
    ledger.rows.iter().map(|r| r.turnover).sum::<f64>() / ledger.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sharpe_by_hand() {
        let sr = sharpe_of(&[0.1, 0.3]);
        assert!((sr.value - 2.0).abs() < 1e-12);
        assert!(!sr.infinite);
        assert!(sharpe_of(&[0.01, 0.01]).infinite);
        assert_eq!(sharpe_of(&[0.0, 0.0]), Ratio::finite(0.0));
    }

    #[test]
    fn drawdown_by_hand() {
        let p = [1.0, 1.2, 0.9, 1.1];
        assert!((max_drawdown_of(&p) - 0.25).abs() < 1e-15);
        assert_eq!(max_drawdown_exhaustive(&p), max_drawdown_of(&p));
        assert_eq!(max_drawdown_of(&[1.0, 1.1, 1.3]), 0.0);
        assert_eq!(max_drawdown_of(&[1.0, 0.5]), 0.5);
    }

    #[test]
    fn calmar_by_hand() {
        assert!((calmar_of(1.1, 0.25).value - 4.4).abs() < 1e-12);
        assert!(calmar_of(1.0, 0.0).infinite);
    }

    #[test]
    fn infinite_ratio_serializes_as_null() {
        let s = serde_json::to_string(&Ratio::inf()).unwrap();
        assert_eq!(s, r#"{"value":null,"infinite":true}"#);
        let back: Ratio = serde_json::from_str(&s).unwrap();
        assert!(back.value.is_infinite());
    }
}
