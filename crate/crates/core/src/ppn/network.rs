//! The two-stream forward pass.
//!
//! ```text
//! window (m,k,4) ─┬─ TCCB1 → TCCB2 → TCCB3 → Conv4 [1×k] ─ (m,16) ─┐
//!                 └─ LSTM(16), shared across assets ────── (m,16) ─┼─ ⊕ prev (m,1) → (m,33)
//!                                               cash row (1,33) ───┘          → (m+1,33)
//!                                            1×1 conv → (m+1) → softmax
//! ```

use rand::Rng;

use super::config::PpnConfig;
use super::params::PolicyParameters;
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::market_data::PriceWindow;

/// Intermediate nodes of one forward pass, for inspection and ablation.
#[derive(Clone, Copy, Debug)]
pub struct ForwardNodes {
    /// Correlation stream output `(m, C4)`.
    pub correlation: Var,
    /// Sequential stream output `(m, H)`.
    pub sequential: Var,
    /// Logits `(m+1)`.
    pub logits: Var,
    /// Portfolio `(m+1)`, cash first.
    pub action: Var,
}

/// Puts every parameter slot on `g` as a parameter leaf.
pub fn bind(g: &mut Graph, params: &PolicyParameters) -> Vec<Var> {
    params.slots.iter().enumerate().map(|(i, s)| g.param(i, s.tensor())).collect()
}

fn stage(e: crate::error::Error, name: &str) -> Error {
    match e {
        Error::Contract(m) => Error::Contract(format!("{name}: {m}")),
        other => other,
    }
}

/// Runs the network on `g`. `p` are the parameter nodes in slot order (see
/// [`bind`]); `prev_risky` is the previous executed action without cash.
/// Pass `rng` for training-mode dropout, `None` for evaluation.
pub fn forward<R: Rng>(
    cfg: &PpnConfig,
    g: &mut Graph,
    p: &[Var],
    window: &PriceWindow,
    prev_risky: &[f64],
    mut rng: Option<&mut R>,
) -> Result<ForwardNodes> {
    let m = cfg.assets;
    let k = cfg.window;
    if window.shape() != [m, k, cfg.features] {
        return Err(Error::contract(format!("input: window shape {:?}, config expects {:?}", window.shape(), [m, k, cfg.features])));
    }
    if prev_risky.len() != m {
        return Err(Error::contract(format!("input: previous action has {} risky weights, expected {m}", prev_risky.len())));
    }
    let x = g.constant(Tensor { shape: vec![m, k, cfg.features], data: window.values.clone() });

    let mut next = 0;
    let mut take = || {
        next += 1;
        p[next - 1]
    };
    let mut h = x;
    for (n, b) in cfg.blocks.iter().enumerate() {
        let name = format!("tccb{}", n + 1);
        for _ in 0..2 {
            let (w, bias) = (take(), take());
            h = g.causal_conv(h, w, bias, b.dilation).map_err(|e| stage(e, &name))?;
            h = g.dropout(h, cfg.dropout, rng.as_deref_mut());
            h = g.relu(h);
        }
        if cfg.correlation {
            let (w, bias) = (take(), take());
            h = g.corr_conv(h, w, bias).map_err(|e| stage(e, &name))?;
            h = g.dropout(h, cfg.dropout, rng.as_deref_mut());
            h = g.relu(h);
        }
    }
    let (w4, b4) = (take(), take());
    let c4 = g.time_conv(h, w4, b4).map_err(|e| stage(e, "conv4"))?;
    let correlation = g.relu(c4);

    let (w_ih, w_hh, b_l) = (take(), take(), take());
    let sequential = g.lstm(x, w_ih, w_hh, b_l).map_err(|e| stage(e, "lstm"))?;

    let prev = g.constant(Tensor { shape: vec![m, 1], data: prev_risky.to_vec() });
    let feats = g.concat(&[correlation, sequential, prev], 1).map_err(|e| stage(e, "concat"))?;
    let width = cfg.decision_width();
    let cash = g.constant(Tensor { shape: vec![1, width], data: vec![cfg.cash_bias; width] });
    let all = g.concat(&[cash, feats], 0).map_err(|e| stage(e, "concat"))?;
    let wd = take();
    let logits = g.matvec(all, wd).map_err(|e| stage(e, "decision"))?;
    let action = g.softmax(logits)?;
    debug_assert_eq!(next, p.len());
    Ok(ForwardNodes { correlation, sequential, logits, action })
}

/// Evaluation-mode forward pass returning the portfolio.
pub fn act(cfg: &PpnConfig, params: &PolicyParameters, window: &PriceWindow, prev_risky: &[f64]) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let p = bind(&mut g, params);
    let nodes = forward::<rand_chacha::ChaCha8Rng>(cfg, &mut g, &p, window, prev_risky, None)?;
    Ok(g.value(nodes.action).data.clone())
}
