//! Portfolio management over per-asset reinforcement-learning modules.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cm;
pub mod codec;
pub mod data_store;
pub mod metrics;
pub mod pipeline;
pub mod portfolio;
pub mod refinery;
pub mod rl;
pub mod synth;
pub mod time;
