//! Martingale tail bounds, scheduling-strategy optimization and simulation for
//! heterogeneous fork-join queues.
//!
//! Parameter checks are written as `!(x > 0.0)` throughout so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod decay;
pub mod distributions;
pub mod error;
pub mod optimizer;
pub mod rng;
pub mod simulator;
pub mod strategies;
pub mod system;
