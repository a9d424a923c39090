use super::config::PpnConfig;
use super::network::act;
use super::params::PolicyParameters;
use crate::backtest::{DecisionContext, Strategy};
use crate::error::{Error, Result};

/// The network as a backtest strategy (evaluation mode). The recursive
/// input is the previous *executed* action, not the drifted one.
#[derive(Clone, Debug)]
pub struct PpnStrategy {
    config: PpnConfig,
    params: PolicyParameters,
    label: String,
}

impl PpnStrategy {
    pub fn new(config: PpnConfig, params: PolicyParameters) -> Result<Self> {
        config.validate()?;
        params.check_layout(&config)?;
        Ok(Self { config, params, label: "ppn".into() })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn config(&self) -> &PpnConfig {
        &self.config
    }

    pub fn params(&self) -> &PolicyParameters {
        &self.params
    }
}

impl Strategy for PpnStrategy {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>> {
        if ctx.n_assets() != self.config.assets + 1 {
            return Err(Error::contract(format!("ppn trained for {} risky assets, panel has {}", self.config.assets, ctx.n_assets() - 1)));
        }
        act(&self.config, &self.params, ctx.window, &ctx.previous[1..])
    }
}
