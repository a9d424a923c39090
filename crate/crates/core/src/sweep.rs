//! Train-then-evaluate runs over a λ × γ grid.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backtest::{run_backtest, BacktestConfig, BacktestLedger};
use crate::cost_model::CostSpec;
use crate::error::{Error, Result};
use crate::market_data::PricePanel;
use crate::metrics::MetricBlock;
use crate::ppn::{PpnConfig, PpnStrategy};
use crate::reward::{RewardConfig, RewardVariant};
use crate::training::{train, TrainConfig, TrainReport};

/// Everything one grid cell needs besides `(λ, γ)` and the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub ppn: PpnConfig,
    /// Template; `seed` is replaced per run.
    pub train: TrainConfig,
    pub variant: RewardVariant,
    pub cost: CostSpec,
    /// Evaluation periods `[start, end)`.
    pub test_range: (usize, usize),
    pub seeds: Vec<u64>,
}

/// Metrics of one `(λ, γ)` cell, averaged over seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub gamma: f64,
    pub apv: f64,
    /// Mean per-period Sharpe ratio; infinite if any run's was.
    pub sr: f64,
    pub std: f64,
    pub mdd: f64,
    pub to: f64,
    pub runs: Vec<MetricBlock>,
}

/// Trains with `reward` and backtests the result over `test_range`.
pub fn train_and_evaluate(
    panel: &PricePanel,
    ppn: &PpnConfig,
    reward: &RewardConfig,
    train_cfg: &TrainConfig,
    cost: &CostSpec,
    test_range: (usize, usize),
) -> Result<(TrainReport, BacktestLedger)> {
    let report = train(panel, ppn, reward, train_cfg)?;
    if let Some(abort) = &report.abort {
        return Err(Error::NonFinite(format!("training aborted at step {}: {}", abort.step, abort.reason)));
    }
    let mut policy = PpnStrategy::new(ppn.clone(), report.checkpoint.params.clone())?;
    let bt = BacktestConfig::new(*cost, ppn.window).with_range(test_range.0, test_range.1);
    let ledger = run_backtest(panel, &mut policy, &bt)?;
    Ok((report, ledger))
}

/// Runs every `(λ, γ)` in `points` for every seed, on up to `jobs` threads.
/// The output does not depend on `jobs`.
pub fn run_sweep(panel: &PricePanel, cfg: &SweepConfig, points: &[(f64, f64)], jobs: usize) -> Result<Vec<SweepRow>> {
    if cfg.seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let tasks: Vec<(usize, u64)> = (0..points.len()).flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s))).collect();
    let results: Vec<Mutex<Option<Result<MetricBlock>>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);

    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(p, seed)) = tasks.get(i) else { break };
        let (lambda, gamma) = points[p];
        let reward = RewardConfig { lambda, gamma, variant: cfg.variant };
        let mut train_cfg = cfg.train.clone();
        train_cfg.seed = seed;
        let out = train_and_evaluate(panel, &cfg.ppn, &reward, &train_cfg, &cfg.cost, cfg.test_range)
            .map(|(_, ledger)| MetricBlock::from_ledger(&ledger));
        *results[i].lock().expect("result slot") = Some(out);
    };
    let jobs = jobs.clamp(1, tasks.len().max(1));
    if jobs == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(work);
            }
        });
    }

    let mut blocks = Vec::with_capacity(tasks.len());
    for slot in results {
        blocks.push(slot.into_inner().expect("result slot").expect("every task ran")?);
    }
    let per = cfg.seeds.len();
    Ok(points
        .iter()
        .zip(blocks.chunks(per))
        .map(|(&(lambda, gamma), runs)| {
            let mean = |f: fn(&MetricBlock) -> f64| runs.iter().map(f).sum::<f64>() / per as f64;
            SweepRow {
                lambda,
                gamma,
                apv: mean(|m| m.apv),
                sr: mean(|m| m.sr.value),
                std: mean(|m| m.std),
                mdd: mean(|m| m.mdd),
                to: mean(|m| m.to),
                runs: runs.to_vec(),
            }
        })
        .collect())
}
