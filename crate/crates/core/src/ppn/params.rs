use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::PpnConfig;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamSlot {
    pub fn tensor(&self) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.clone() }
    }
}

/// Flat parameter store with one named slot per weight tensor, in a fixed
/// order that is a pure function of the config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    pub slots: Vec<ParamSlot>,
}

/// `(name, shape, fan_in, fan_out)` of every slot. Biases have fans of 0.
pub(crate) fn layout(cfg: &PpnConfig) -> Vec<(String, Vec<usize>, usize, usize)> {
    let mut out = Vec::new();
    let k = cfg.kernel;
    let mut c_in = cfg.features;
    for (n, b) in cfg.blocks.iter().enumerate() {
        let p = format!("tccb{}", n + 1);
        let c = b.channels;
        out.push((format!("{p}.dconv1.weight"), vec![c, c_in, k], c_in * k, c * k));
        out.push((format!("{p}.dconv1.bias"), vec![c], 0, 0));
        out.push((format!("{p}.dconv2.weight"), vec![c, c, k], c * k, c * k));
        out.push((format!("{p}.dconv2.bias"), vec![c], 0, 0));
        if cfg.correlation {
            let m = cfg.assets;
            out.push((format!("{p}.cconv.weight"), vec![c, c, m], c * m, c * m));
            out.push((format!("{p}.cconv.bias"), vec![c], 0, 0));
        }
        c_in = c;
    }
    let (c4, w) = (cfg.conv4_channels, cfg.window);
    out.push(("conv4.weight".into(), vec![c4, c_in, w], c_in * w, c4 * w));
    out.push(("conv4.bias".into(), vec![c4], 0, 0));
    let (h, f) = (cfg.lstm_hidden, cfg.features);
    out.push(("lstm.w_ih".into(), vec![4 * h, f], f, 4 * h));
    out.push(("lstm.w_hh".into(), vec![4 * h, h], h, 4 * h));
    out.push(("lstm.bias".into(), vec![4 * h], 0, 0));
    let d = cfg.decision_width();
    out.push(("decision.weight".into(), vec![d], d, 1));
    out
}

impl PolicyParameters {
    /// Glorot-uniform weights `U(±√(6/(fan_in+fan_out)))`, zero biases, and
    /// forget-gate bias +1.
    pub fn init(cfg: &PpnConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut slots = Vec::new();
        for (name, shape, fan_in, fan_out) in layout(cfg) {
            let n: usize = shape.iter().product();
            let data = if fan_in + fan_out == 0 {
                let mut b = vec![0.0; n];
                if name == "lstm.bias" {
                    let h = cfg.lstm_hidden;
                    b[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
                }
                b
            } else {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-limit..limit)).collect()
            };
            slots.push(ParamSlot { name, shape, data });
        }
        Ok(Self { slots })
    }

    /// Checks that the slots match what `cfg` requires.
    pub fn check_layout(&self, cfg: &PpnConfig) -> Result<()> {
        let want = layout(cfg);
        if want.len() != self.slots.len() {
            return Err(Error::Checkpoint(format!("expected {} parameter slots, found {}", want.len(), self.slots.len())));
        }
        for ((name, shape, _, _), slot) in want.iter().zip(&self.slots) {
            if name != &slot.name || shape != &slot.shape || slot.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Checkpoint(format!("slot `{}` {:?} does not match `{name}` {shape:?}", slot.name, slot.shape)));
            }
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&ParamSlot> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamSlot> {
        self.slots.iter_mut().find(|s| s.name == name)
    }

    pub fn lens(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.data.len()).collect()
    }

    pub fn count(&self) -> usize {
        self.slots.iter().map(|s| s.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.slots.iter().all(|s| s.data.iter().all(|v| v.is_finite()))
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.slots.iter().map(ParamSlot::tensor).collect()
    }

    /// Zeroes the decision layer: the policy then outputs the uniform
    /// portfolio over all `m + 1` assets.
    pub fn zero_decision(&mut self) {
        if let Some(s) = self.get_mut("decision.weight") {
            s.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}
