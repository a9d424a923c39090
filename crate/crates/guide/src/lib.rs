//! mdbook cannot run snippets that depend on workspace crates, so every
//! chapter is included here as module docs and `cargo test --doc` runs them.

#[doc = include_str!("../../../README.md")]
pub mod readme {}
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/market-data.md")]
pub mod market_data {}
#[doc = include_str!("../../../book/src/transaction-costs.md")]
pub mod transaction_costs {}
#[doc = include_str!("../../../book/src/backtesting.md")]
pub mod backtesting {}
#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}
#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod autodiff {}
#[doc = include_str!("../../../book/src/policy-network.md")]
pub mod policy_network {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/command-line.md")]
pub mod command_line {}
#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}
