//! The portfolio policy network.

mod checkpoint;
mod config;
mod network;
mod params;
mod strategy;

pub use checkpoint::{AdamMoments, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{receptive_field, BlockConfig, PpnConfig};
pub use network::{act, bind, forward, ForwardNodes};
pub use params::{ParamSlot, PolicyParameters};
pub use strategy::PpnStrategy;
