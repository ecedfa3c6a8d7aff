//! Player contribution and MVP ranking from box scores.
//!
//! The pipeline: parse box scores ([`dataset`]), train a boosted win-loss
//! model on mirrored game samples ([`model`]), attribute each sample's
//! margin to its features with exact tree Shapley values ([`attribution`]),
//! sum those into per-player contributions and rank players ([`mvp`]),
//! refine the feature set ([`causal`]) and score rankings against votes
//! ([`eval`]). [`harness`] generates synthetic leagues with planted skills.

pub mod attribution;
pub mod causal;
pub mod dataset;
pub mod eval;
pub mod harness;
pub mod model;
pub mod mvp;
