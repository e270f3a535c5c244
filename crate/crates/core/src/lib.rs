//! Energy-aware detector architecture search.
//!
//! - [`arch`]: the elastic block search space, encodings, analytic cost and scaling.
//! - [`mlp`]: a small feed-forward regression network with exact backpropagation.
//! - [`energy`]: two-stage (prior + device residual) and joint energy estimators.
//! - [`search`]: budget-constrained stage-wise coordinate search.
//! - [`data`]: energy tables, device registry, synthetic oracles, few-shot splits.
//! - [`experiments`]: few-shot benchmark, space characterization, Pareto tables.
//! - [`experiments`]: few-shot benchmark, space characterization, Pareto reports.

pub mod arch;
pub mod data;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod mlp;
pub mod par;
pub mod search;

pub use error::{Error, Result};
