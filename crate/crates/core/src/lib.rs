//! Agent-based simulation of ride-pooling feeder services between a suburb
//! and a transit hub, with ride-sharing, taxi and flexible-route bus baselines.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod baselines;
pub mod demand;
pub mod dispatch;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod matching;
pub mod network;
pub mod reposition;
pub mod rng;
pub mod routing;
pub mod scenario;

pub use error::{Error, Result};
