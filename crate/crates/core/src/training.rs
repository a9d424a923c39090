//! Direct policy-gradient training of the PPN with Adam.
//!
//! One step samples a contiguous batch of decision periods, runs the
//! network once per period with the previous action taken from the
//! portfolio memory, evaluates the cost-sensitive reward on a small graph
//! over the batch actions, and pushes `∂R/∂a_t` back through every
//! per-period graph. Inside the reward the cost is the surrogate
//! `c̃_t = ψ‖a_t − â_{t−1}‖₁`; backtests always use the exact solver.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::market_data::{PricePanel, PriceRelativeVector, PriceWindow};
use crate::portfolio::PortfolioVector;
use crate::ppn::{bind, forward, AdamMoments, Checkpoint, PolicyParameters, PpnConfig};
use crate::reward::RewardConfig;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// How batch start indices are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    Uniform,
    /// Offset back from the most recent start ~ Geometric(`bias`),
    /// redrawn when it falls outside the range.
    Geometric {
        bias: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    /// Periods `[start, end)` of the panel available to training.
    pub range: (usize, usize),
    /// Rate in the cost surrogate.
    pub psi: f64,
    pub sampler: Sampler,
}

impl TrainConfig {
    pub fn new(range: (usize, usize), psi: f64) -> Self {
        Self { batch_size: 128, learning_rate: 1e-3, steps: 2000, seed: 0, range, psi, sampler: Sampler::Uniform }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be finite and nonnegative, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.psi) {
            return Err(Error::Config(format!("psi must lie in [0, 1), got {}", self.psi)));
        }
        if let Sampler::Geometric { bias } = self.sampler {
            if !(bias > 0.0 && bias <= 1.0) {
                return Err(Error::Config(format!("geometric sampler bias must lie in (0, 1], got {bias}")));
            }
        }
        Ok(())
    }
}

/// Draws batch starts `t0` with `t0 ∈ [start + k, end − B]`.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    lo: usize,
    hi: usize,
    kind: Sampler,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(range: (usize, usize), window: usize, batch: usize, kind: Sampler, seed: u64) -> Result<Self> {
        let (start, end) = range;
        let lo = start + window.max(1);
        if end < lo + batch {
            return Err(Error::Config(format!(
                "training range {start}..{end} holds {} periods; batch {batch} plus window {window} needs {}",
                end.saturating_sub(start),
                batch + window
            )));
        }
        Ok(Self { lo, hi: end - batch, kind, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    /// Inclusive bounds of the valid starts.
    pub fn bounds(&self) -> (usize, usize) {
        (self.lo, self.hi)
    }

    pub fn next_start(&mut self) -> usize {
        match self.kind {
            Sampler::Uniform => self.rng.random_range(self.lo..=self.hi),
            Sampler::Geometric { bias } => loop {
                let u: f64 = self.rng.random();
                let back = if bias >= 1.0 { 0.0 } else { ((1.0 - u).ln() / (1.0 - bias).ln()).floor() };
                if back <= (self.hi - self.lo) as f64 {
                    break self.hi - back as usize;
                }
            },
        }
    }
}

/// The last emitted action for every period, initialized uniform over all
/// `m + 1` assets. Only the trainer writes to it.
#[derive(Clone, Debug, PartialEq)]
pub struct PortfolioMemory {
    slots: Vec<Vec<f64>>,
}

impl PortfolioMemory {
    pub fn new(n_periods: usize, n_assets: usize) -> Self {
        Self { slots: vec![PortfolioVector::uniform(n_assets).into_inner(); n_periods] }
    }

    pub fn get(&self, t: usize) -> &[f64] {
        &self.slots[t]
    }

    /// Risky components of the action stored for period `t`.
    pub fn risky(&self, t: usize) -> &[f64] {
        &self.slots[t][1..]
    }

    pub fn set(&mut self, t: usize, action: &[f64]) {
        self.slots[t].copy_from_slice(action);
    }
}

/// Adam on a flat list of slots, as gradient *ascent*.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lens: &[usize]) -> Self {
        Self { step: 0, m: lens.iter().map(|&n| vec![0.0; n]).collect(), v: lens.iter().map(|&n| vec![0.0; n]).collect() }
    }

    pub fn update(&mut self, params: &mut PolicyParameters, grads: &[Vec<f64>], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        for (i, slot) in params.slots.iter_mut().enumerate() {
            for (j, w) in slot.data.iter_mut().enumerate() {
                let g = grads[i][j];
                let m = &mut self.m[i][j];
                let v = &mut self.v[i][j];
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                let delta = lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                // skipping zero steps keeps lr = 0 bitwise inert (-0.0 + 0.0 = +0.0)
                if delta != 0.0 {
                    *w += delta;
                }
            }
        }
    }

    pub fn moments(&self) -> AdamMoments {
        AdamMoments { step: self.step, m: self.m.clone(), v: self.v.clone() }
    }
}

/// Nodes of the batch reward.
#[derive(Clone, Debug)]
pub struct RewardNodes {
    pub reward: Var,
    pub mean_log_return: Var,
    pub variance: Var,
    /// Mean `‖a_t − â_{t−1}‖₁` over `t ≥ 2` (absent for a one-period batch).
    pub mean_l1: Option<Var>,
}

/// The cost-sensitive reward on `g` for batch actions `actions[t]` (shape `[m+1]`) with the
/// surrogate cost. `first_drifted` is `â` before the first action (a
/// constant); later `â` are drifted batch actions, so gradients flow
/// through them. `turnover_sign` is `1.0` except in mutation tests.
pub fn reward_graph(
    g: &mut Graph,
    actions: &[Var],
    relatives: &[&[f64]],
    first_drifted: &[f64],
    psi: f64,
    cfg: &RewardConfig,
    turnover_sign: f64,
) -> Result<RewardNodes> {
    cfg.validate()?;
    let t_len = actions.len();
    if t_len == 0 || relatives.len() != t_len {
        return Err(Error::contract(format!("reward batch has {t_len} actions and {} relatives", relatives.len())));
    }
    let lambda = cfg.risk_weight();
    let gamma = cfg.turnover_weight();
    if t_len < 2 && (lambda > 0.0 || gamma > 0.0) {
        return Err(Error::contract("variance and turnover terms need T >= 2"));
    }
    let mut drifted = g.constant(Tensor::vector(first_drifted.to_vec()));
    let mut returns = Vec::with_capacity(t_len);
    let mut l1s = Vec::with_capacity(t_len);
    for (t, (&a, &x)) in actions.iter().zip(relatives).enumerate() {
        let diff = g.sub(a, drifted)?;
        let abs = g.abs(diff);
        let l1 = g.sum(abs);
        let cost = g.scale(l1, -psi);
        let keep = g.add_const(cost, 1.0);
        let xv = g.constant(Tensor::vector(x.to_vec()));
        let held = g.mul(a, xv)?;
        let gross = g.sum(held);
        let lg = g.log(gross);
        let lk = g.log(keep);
        returns.push(g.add(lg, lk)?);
        if t > 0 {
            l1s.push(l1);
        }
        let inv = g.recip(gross);
        drifted = g.mul_scalar(held, inv)?;
    }
    let r = g.concat(&returns, 0)?;
    let mean = g.mean(r)?;
    let neg = g.scale(mean, -1.0);
    let centered = g.add_scalar(r, neg)?;
    let sq = g.square(centered);
    let variance = g.mean(sq)?;
    let mut reward = mean;
    if lambda != 0.0 {
        let pen = g.scale(variance, -lambda);
        reward = g.add(reward, pen)?;
    }
    let mean_l1 = if l1s.is_empty() {
        None
    } else {
        let all = g.concat(&l1s, 0)?;
        Some(g.mean(all)?)
    };
    if let (Some(l1), true) = (mean_l1, gamma != 0.0) {
        let pen = g.scale(l1, -gamma * turnover_sign);
        reward = g.add(reward, pen)?;
    }
    Ok(RewardNodes { reward, mean_log_return: mean, variance, mean_l1 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub reward: f64,
    pub mean_log_return: f64,
    pub variance: f64,
    /// `γ` times the batch mean L1 turnover.
    pub turnover_penalty: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
}

impl TrainLog {
    /// CSV `step,reward,mean_log_return,variance,turnover_penalty`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,reward,mean_log_return,variance,turnover_penalty")?;
        for r in &self.rows {
            writeln!(out, "{},{:?},{:?},{:?},{:?}", r.step, r.reward, r.mean_log_return, r.variance, r.turnover_penalty)?;
        }
        Ok(())
    }
}

/// Why training stopped early.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainAbort {
    pub step: usize,
    pub reason: String,
}

/// Outcome of [`train`]. On abort the checkpoint holds the last parameters
/// that produced a finite step.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
    pub abort: Option<TrainAbort>,
}

struct Batch {
    windows: Vec<PriceWindow>,
    start: usize,
}

fn dropout_rng(seed: u64, step: usize, slot: usize, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream((step * batch + slot) as u64);
    rng
}

/// Trains from a fresh initialization seeded by `train.seed`.
pub fn train(panel: &PricePanel, ppn: &PpnConfig, reward: &RewardConfig, train: &TrainConfig) -> Result<TrainReport> {
    let params = PolicyParameters::init(ppn, train.seed)?;
    train_from(panel, ppn, params, reward, train)
}

/// Trains starting from `params`.
pub fn train_from(
    panel: &PricePanel,
    ppn: &PpnConfig,
    mut params: PolicyParameters,
    reward: &RewardConfig,
    train: &TrainConfig,
) -> Result<TrainReport> {
    ppn.validate()?;
    reward.validate()?;
    train.validate()?;
    params.check_layout(ppn)?;
    if panel.n_risky() != ppn.assets {
        return Err(Error::Config(format!("network expects {} risky assets, panel has {}", ppn.assets, panel.n_risky())));
    }
    if train.range.1 > panel.n_periods() {
        return Err(Error::Range(format!("training range ends at {}, panel has {} periods", train.range.1, panel.n_periods())));
    }
    let relatives: Vec<PriceRelativeVector> = panel.relatives()?;
    let b = train.batch_size;
    let mut sampler = BatchSampler::new(train.range, ppn.window, b, train.sampler, train.seed)?;
    let mut memory = PortfolioMemory::new(panel.n_periods(), panel.n_assets());
    let lens = params.lens();
    let mut adam = Adam::new(&lens);
    let mut log = TrainLog::default();

    for step in 0..train.steps {
        let t0 = sampler.next_start();
        let batch = Batch { windows: (t0..t0 + b).map(|t| panel.window_at(t, ppn.window)).collect::<Result<_>>()?, start: t0 };

        let mut graphs = Vec::with_capacity(b);
        let mut emitted = Vec::with_capacity(b);
        for (s, window) in batch.windows.iter().enumerate() {
            let t = batch.start + s;
            let mut g = Graph::new();
            let p = bind(&mut g, &params);
            let mut rng = dropout_rng(train.seed, step, s, b);
            let nodes = forward(ppn, &mut g, &p, window, memory.risky(t - 1), Some(&mut rng))?;
            emitted.push(g.value(nodes.action).data.clone());
            graphs.push((g, nodes.action));
        }

        let first_drifted = crate::cost_model::drift_portfolio(memory.get(t0 - 1), &relatives[t0 - 1]);
        let mut rg = Graph::new();
        let actions: Vec<Var> = emitted.iter().map(|a| rg.input(Tensor::vector(a.clone()))).collect();
        let xs: Vec<&[f64]> = (t0..t0 + b).map(|t| &relatives[t][..]).collect();
        let nodes = reward_graph(&mut rg, &actions, &xs, &first_drifted, train.psi, reward, 1.0)?;
        let r = rg.value(nodes.reward).item();
        let row = TrainLogRow {
            step,
            reward: r,
            mean_log_return: rg.value(nodes.mean_log_return).item(),
            variance: rg.value(nodes.variance).item(),
            turnover_penalty: nodes.mean_l1.map_or(0.0, |v| reward.turnover_weight() * rg.value(v).item()),
        };
        if !r.is_finite() {
            return Ok(aborted(ppn, params, adam, log, step, format!("reward is {r} at batch start {t0}")));
        }
        let rgrads = rg.backward(nodes.reward)?;

        let mut total: Vec<Vec<f64>> = lens.iter().map(|&n| vec![0.0; n]).collect();
        for (s, (g, action)) in graphs.iter_mut().enumerate() {
            let da = rgrads.get(actions[s]).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; emitted[s].len()]);
            let weight = g.constant(Tensor::vector(da));
            let prod = g.mul(*action, weight)?;
            let root = g.sum(prod);
            let grads = g.backward(root)?;
            for (acc, part) in total.iter_mut().zip(g.param_gradients(&grads, &lens)) {
                for (a, v) in acc.iter_mut().zip(part) {
                    *a += v;
                }
            }
        }
        if let Some((i, j)) = first_non_finite(&total) {
            let name = params.slots[i].name.clone();
            return Ok(aborted(ppn, params, adam, log, step, format!("gradient of {name}[{j}] is non-finite at batch start {t0}")));
        }

        let before = params.clone();
        adam.update(&mut params, &total, train.learning_rate);
        if !params.all_finite() {
            return Ok(aborted(ppn, before, adam, log, step, "parameters became non-finite after the Adam step".into()));
        }
        for (s, a) in emitted.iter().enumerate() {
            memory.set(t0 + s, a);
        }
        log.rows.push(row);
    }

    Ok(TrainReport { checkpoint: Checkpoint::new(ppn.clone(), params, Some(adam.moments())), log, abort: None })
}

fn first_non_finite(grads: &[Vec<f64>]) -> Option<(usize, usize)> {
    grads.iter().enumerate().find_map(|(i, g)| g.iter().position(|v| !v.is_finite()).map(|j| (i, j)))
}

fn aborted(ppn: &PpnConfig, params: PolicyParameters, adam: Adam, log: TrainLog, step: usize, reason: String) -> TrainReport {
    TrainReport { checkpoint: Checkpoint::new(ppn.clone(), params, Some(adam.moments())), log, abort: Some(TrainAbort { step, reason }) }
}
