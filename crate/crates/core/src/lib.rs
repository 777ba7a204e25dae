//! Deterministic 2D laboratory for learned UAV collision avoidance.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod ddpg;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod plot;
pub mod rewards;
pub mod scene;
pub mod sim;
