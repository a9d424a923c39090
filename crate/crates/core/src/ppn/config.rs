use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One temporal correlational convolution block: two dilated causal
/// convolutions along time, then one convolution across assets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub channels: usize,
    pub dilation: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpnConfig {
    /// Risky assets `m`.
    pub assets: usize,
    /// Window length `k`.
    pub window: usize,
    /// Input channels per period (open, high, low, close).
    pub features: usize,
    pub kernel: usize,
    pub blocks: Vec<BlockConfig>,
    pub conv4_channels: usize,
    pub lstm_hidden: usize,
    pub dropout: f64,
    /// Fixed logit of the cash row.
    pub cash_bias: f64,
    /// `false` drops every correlational convolution (the TCB variant).
    pub correlation: bool,
}

impl PpnConfig {
    /// The default architecture for `m` risky assets and window `k`.
    pub fn new(assets: usize, window: usize) -> Self {
        Self {
            assets,
            window,
            features: 4,
            kernel: 3,
            blocks: vec![
                BlockConfig { channels: 8, dilation: 1 },
                BlockConfig { channels: 16, dilation: 2 },
                BlockConfig { channels: 16, dilation: 4 },
            ],
            conv4_channels: 16,
            lstm_hidden: 16,
            dropout: 0.2,
            cash_bias: 0.0,
            correlation: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("ppn: {m}")));
        if self.assets == 0 {
            return bad("need at least one risky asset");
        }
        if self.window == 0 {
            return bad("window must be positive");
        }
        if self.features == 0 || self.kernel == 0 || self.conv4_channels == 0 || self.lstm_hidden == 0 {
            return bad("layer sizes must be positive");
        }
        if self.blocks.iter().any(|b| b.channels == 0 || b.dilation == 0) {
            return bad("block channels and dilations must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout rate must lie in [0, 1)");
        }
        if !self.cash_bias.is_finite() {
            return bad("cash bias must be finite");
        }
        Ok(())
    }

    /// Width of each asset row entering the decision layer:
    /// conv features ⊕ LSTM features ⊕ previous weight.
    pub fn decision_width(&self) -> usize {
        self.conv4_channels + self.lstm_hidden + 1
    }

    /// Channels leaving the last block (the input features if there are no
    /// blocks).
    pub fn trunk_channels(&self) -> usize {
        self.blocks.last().map_or(self.features, |b| b.channels)
    }
}

/// Lag span of the stacked dilated causal convolutions:
/// `1 + Σ_layers (K-1)·d`, two layers per block.
pub fn receptive_field(config: &PpnConfig) -> usize {
    1 + config.blocks.iter().map(|b| 2 * (config.kernel - 1) * b.dilation).sum::<usize>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn receptive_fields() {
        assert_eq!(receptive_field(&PpnConfig::new(11, 30)), 29);
        let mut one = PpnConfig::new(3, 30);
        one.blocks.truncate(1);
        assert_eq!(receptive_field(&one), 5);
        one.blocks.clear();
        assert_eq!(receptive_field(&one), 1);
    }
}
