//! Cost-sensitive portfolio selection.

pub mod autodiff;
pub mod backtest;
pub mod baselines;
pub mod cost_model;
pub mod error;
pub mod market_data;
pub mod metrics;
pub mod portfolio;
pub mod ppn;
pub mod reward;
pub mod sweep;
pub mod synthetic;
pub mod theorems;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
