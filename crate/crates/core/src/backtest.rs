//! Sequential evaluation of a strategy against a price panel.
//!
//! For each decision period `t` the engine drifts the previous executed
//! allocation by `x_{t-1}`, asks the strategy for `a_t` using only data up
//! to `t - 1`, pays the exact rebalancing cost, and accrues `a_tᵀx_t`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cost_model::{drift_portfolio, solve_rebalance, turnover_term, CostSpec};
use crate::error::{Error, Result};
use crate::market_data::{PricePanel, PriceRelativeVector, PriceWindow};
use crate::portfolio::{check_simplex, dot, PortfolioVector};
use crate::reward::{compute_reward, RewardConfig};

/// Everything a strategy may look at when deciding period `t`.
pub struct DecisionContext<'a> {
    /// Period being decided.
    pub t: usize,
    /// Normalized window over periods `[t - k, t)`.
    pub window: &'a PriceWindow,
    /// Price relatives `x_1 .. x_{t-1}`, oldest first.
    pub history: &'a [PriceRelativeVector],
    /// Allocation executed for period `t - 1` (the initial allocation at
    /// the first decision).
    pub previous: &'a [f64],
    /// `previous` after drifting through period `t - 1`.
    pub drifted: &'a [f64],
}

impl DecisionContext<'_> {
    pub fn n_assets(&self) -> usize {
        self.previous.len()
    }
}

/// An action source for the backtest. Implementations must return a vector
/// on the simplex over `m + 1` assets.
pub trait Strategy {
    fn name(&self) -> String;

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>>;
}

impl<S: Strategy + ?Sized> Strategy for Box<S> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>> {
        (**self).decide(ctx)
    }
}

/// Backtest settings. Decisions run over `t ∈ [max(start, window), end)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub cost: CostSpec,
    pub window: usize,
    pub start: Option<usize>,
    pub end: Option<usize>,
    /// Holdings before the first decision; all cash when unset.
    pub initial: Option<Vec<f64>>,
}

impl BacktestConfig {
    pub fn new(cost: CostSpec, window: usize) -> Self {
        Self { cost, window, start: None, end: None, initial: None }
    }

    pub fn with_range(mut self, start: usize, end: usize) -> Self {
        self.start = Some(start);
        self.end = Some(end);
        self
    }

    pub fn with_initial(mut self, initial: Vec<f64>) -> Self {
        self.initial = Some(initial);
        self
    }

    /// First and one-past-last decision period for a panel.
    pub fn decision_range(&self, panel: &PricePanel) -> Result<(usize, usize)> {
        let first = self.start.unwrap_or(0).max(self.window).max(1);
        let end = self.end.unwrap_or(panel.n_periods()).min(panel.n_periods());
        if first >= end {
            return Err(Error::Range(format!(
                "no decision periods: window {} over range {:?}..{:?} of {} periods",
                self.window,
                self.start,
                self.end,
                panel.n_periods()
            )));
        }
        Ok((first, end))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: usize,
    pub action: Vec<f64>,
    pub drifted: Vec<f64>,
    pub omega: f64,
    pub cost: f64,
    pub gross_return: f64,
    pub log_return: f64,
    pub wealth: f64,
    pub turnover: f64,
}

/// Per-period record of one run; wealth starts at `S_0 = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktestLedger {
    pub strategy: String,
    pub rows: Vec<LedgerRow>,
}

impl BacktestLedger {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn final_wealth(&self) -> f64 {
        self.rows.last().map_or(1.0, |r| r.wealth)
    }

    /// `S_0 = 1` followed by the wealth after every period.
    pub fn wealth_path(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.rows.iter().map(|r| r.wealth)).collect()
    }

    pub fn log_returns(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.log_return).collect()
    }

    /// Recomputes wealth from the recorded returns and costs; returns the
    /// largest relative disagreement with the stored path.
    pub fn consistency_error(&self) -> f64 {
        let mut s = 1.0;
        let mut worst: f64 = 0.0;
        for r in &self.rows {
            s *= r.gross_return * (1.0 - r.cost);
            worst = worst.max(((s - r.wealth) / r.wealth).abs());
        }
        worst
    }

    /// CSV export `t,wealth,cost,log_return`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,wealth,cost,log_return")?;
        for r in &self.rows {
            writeln!(out, "{},{:?},{:?},{:?}", r.t, r.wealth, r.cost, r.log_return)?;
        }
        Ok(())
    }
}

/// Runs `strategy` over `panel`. The panel must be complete (gap-filled).
pub fn run_backtest<S: Strategy + ?Sized>(panel: &PricePanel, strategy: &mut S, config: &BacktestConfig) -> Result<BacktestLedger> {
    let relatives = panel.relatives()?;
    run_backtest_with_relatives(panel, &relatives, strategy, config)
}

/// [`run_backtest`] with precomputed relatives (see [`PricePanel::relatives`]).
pub fn run_backtest_with_relatives<S: Strategy + ?Sized>(
    panel: &PricePanel,
    relatives: &[PriceRelativeVector],
    strategy: &mut S,
    config: &BacktestConfig,
) -> Result<BacktestLedger> {
    let (first, end) = config.decision_range(panel)?;
    let d = panel.n_assets();
    let mut held = match &config.initial {
        Some(w) => PortfolioVector::new(w.clone())?.into_inner(),
        None => PortfolioVector::cash(d).into_inner(),
    };
    if held.len() != d {
        return Err(Error::contract(format!("initial allocation has {} entries, panel needs {d}", held.len())));
    }

    let name = strategy.name();
    let mut rows = Vec::with_capacity(end - first);
    let mut wealth = 1.0;
    for t in first..end {
        let drifted = if t == first { held.clone() } else { drift_portfolio(&held, &relatives[t - 1]) };
        let window = panel.window_at(t, config.window)?;
        let ctx = DecisionContext { t, window: &window, history: &relatives[1..t], previous: &held, drifted: &drifted };
        let action = strategy.decide(&ctx)?;
        if action.len() != d {
            return Err(Error::contract(format!("{name} at t = {t}: action has {} entries, expected {d}", action.len())));
        }
        check_simplex(&action, &format!("{name} action at t = {t}"))?;

        let rebalance = solve_rebalance(&drifted, &action, &config.cost)?;
        let gross = dot(&action, &relatives[t]);
        let net = gross * (1.0 - rebalance.cost);
        wealth *= net;
        rows.push(LedgerRow {
            t,
            turnover: turnover_term(&drifted, &action, rebalance.omega),
            drifted,
            omega: rebalance.omega,
            cost: rebalance.cost,
            gross_return: gross,
            log_return: net.ln(),
            wealth,
            action: action.clone(),
        });
        held = action;
    }
    Ok(BacktestLedger { strategy: name, rows })
}

/// Evaluates the cost-sensitive reward on a realized ledger.
pub fn replay_reward(ledger: &BacktestLedger, lambda: f64, gamma: f64) -> Result<f64> {
    if ledger.is_empty() {
        return Err(Error::contract("cannot replay the reward of an empty ledger"));
    }
    let actions: Vec<Vec<f64>> = ledger.rows.iter().map(|r| r.action.clone()).collect();
    let drifted: Vec<Vec<f64>> = ledger.rows.iter().map(|r| r.drifted.clone()).collect();
    compute_reward(&ledger.log_returns(), &actions, &drifted, &RewardConfig::cost_sensitive(lambda, gamma))
}

/// A fixed action sequence, mostly for tests and replays. Period `t` of the
/// run uses entry `t - first` (the last entry repeats).
#[derive(Clone, Debug)]
pub struct ScriptedStrategy {
    pub label: String,
    pub actions: Vec<Vec<f64>>,
    cursor: usize,
}

impl ScriptedStrategy {
    pub fn new(label: impl Into<String>, actions: Vec<Vec<f64>>) -> Self {
        Self { label: label.into(), actions, cursor: 0 }
    }
}

impl Strategy for ScriptedStrategy {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn decide(&mut self, _ctx: &DecisionContext<'_>) -> Result<Vec<f64>> {
        let i = self.cursor.min(self.actions.len().saturating_sub(1));
        self.cursor += 1;
        self.actions.get(i).cloned().ok_or_else(|| Error::contract("scripted strategy has no actions"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cash_only(d: usize) -> ScriptedStrategy {
        ScriptedStrategy::new("cash", vec![PortfolioVector::cash(d).into_inner()])
    }

    #[test]
    fn all_cash_keeps_unit_wealth() {
        let panel = PricePanel::from_closes(&[vec![1.0, 3.0, 0.5, 2.0], vec![2.0, 1.0, 4.0, 4.0]]).unwrap();
        let cfg = BacktestConfig::new(CostSpec::symmetric(0.01).unwrap(), 1);
        let ledger = run_backtest(&panel, &mut cash_only(3), &cfg).unwrap();
        assert_eq!(ledger.len(), 3);
        assert_eq!(ledger.final_wealth(), 1.0);
        assert!(ledger.rows.iter().all(|r| r.cost == 0.0));
    }

    #[test]
    fn holding_a_doubling_asset_costs_nothing() {
        let panel = PricePanel::from_closes(&[vec![1.0, 2.0, 4.0]]).unwrap();
        for psi in [0.0, 0.0025, 0.2] {
            let cfg = BacktestConfig::new(CostSpec::symmetric(psi).unwrap(), 1).with_initial(vec![0.0, 1.0]);
            let mut hold = ScriptedStrategy::new("hold", vec![vec![0.0, 1.0]]);
            let ledger = run_backtest(&panel, &mut hold, &cfg).unwrap();
            assert_eq!(ledger.final_wealth(), 4.0);
            assert!(ledger.rows.iter().all(|r| r.cost == 0.0));
        }
    }

    #[test]
    fn first_purchase_from_cash_is_charged() {
        let panel = PricePanel::from_closes(&[vec![1.0, 2.0, 4.0]]).unwrap();
        let psi = 0.0025;
        let cfg = BacktestConfig::new(CostSpec::symmetric(psi).unwrap(), 1);
        let mut hold = ScriptedStrategy::new("hold", vec![vec![0.0, 1.0]]);
        let ledger = run_backtest(&panel, &mut hold, &cfg).unwrap();
        assert!((ledger.rows[0].cost - psi / (1.0 + psi)).abs() < 1e-12);
        assert_eq!(ledger.rows[1].cost, 0.0);
    }

    #[test]
    fn non_simplex_action_names_the_period() {
        let panel = PricePanel::from_closes(&[vec![1.0, 2.0, 4.0]]).unwrap();
        let cfg = BacktestConfig::new(CostSpec::free(), 1);
        let mut bad = ScriptedStrategy::new("bad", vec![vec![0.5, 0.5], vec![0.7, 0.7]]);
        let err = run_backtest(&panel, &mut bad, &cfg).unwrap_err().to_string();
        assert!(err.contains("t = 2"), "{err}");
    }

    #[test]
    fn window_longer_than_panel_is_range_error() {
        let panel = PricePanel::from_closes(&[vec![1.0, 2.0, 4.0]]).unwrap();
        let cfg = BacktestConfig::new(CostSpec::free(), 3);
        assert!(matches!(run_backtest(&panel, &mut cash_only(2), &cfg), Err(Error::Range(_))));
    }

    #[test]
    fn replay_reward_on_cash_is_zero() {
        let panel = PricePanel::from_closes(&[vec![1.0, 3.0, 0.5, 2.0]]).unwrap();
        let cfg = BacktestConfig::new(CostSpec::symmetric(0.01).unwrap(), 1);
        let ledger = run_backtest(&panel, &mut cash_only(2), &cfg).unwrap();
        for lambda in [0.0, 0.1, 1.0] {
            assert_eq!(replay_reward(&ledger, lambda, 0.5).unwrap(), 0.0);
        }
    }

    #[test]
    fn replay_reward_single_period() {
        let panel = PricePanel::from_closes(&[vec![1.0, 1.5]]).unwrap();
        let cfg = BacktestConfig::new(CostSpec::free(), 1).with_initial(vec![0.0, 1.0]);
        let mut hold = ScriptedStrategy::new("hold", vec![vec![0.0, 1.0]]);
        let ledger = run_backtest(&panel, &mut hold, &cfg).unwrap();
        assert_eq!(replay_reward(&ledger, 0.0, 0.0).unwrap(), 1.5f64.ln());
        assert!(replay_reward(&ledger, 0.0, 0.1).is_err());
    }
}
