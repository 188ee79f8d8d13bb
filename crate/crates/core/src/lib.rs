//! Minimum-divergence portfolio construction.
//!
//! Portfolio weights are chosen so that the empirical distribution of portfolio
//! returns is close to an analytic target distribution, measured by a kernel
//! discrepancy (MMD, KSD, FSSD), a Wasserstein distance, or a Gaussian KL
//! objective. Closed-form kernel mean embeddings make the "semi-explicit" MMD
//! estimator possible, a cross-entropy method searches the budget hyperplane,
//! and a rolling-window harness evaluates strategies out of sample.

pub mod backtest;
pub mod cem;
pub mod divergences;
pub mod embeddings;
pub mod error;
pub mod experiments;
pub mod gram;
pub mod kernels;
pub mod objective;
pub mod rng;
pub mod special;
pub mod targets;

pub use error::{Error, Result};
pub use kernels::KernelSpec;
pub use targets::{beta_from_moments, MomentSet, TargetSpec};
pub use backtest::{BacktestConfig, ReturnsPanel, StrategySpec};
pub use cem::{CemConfig, CemOutcome, Weights};
pub use divergences::{DivergenceConfig, DivergenceEstimate, DivergenceKind, Variant};
pub use embeddings::EmbeddingPair;
pub use objective::{Bandwidth, PortfolioObjective};
