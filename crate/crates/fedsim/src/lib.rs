//! Deterministic federated-learning simulator with randomized
//! meta-aggregation and Shapley-based contribution valuation.
//!
//! The crate is organized bottom-up: deterministic RNG and parameter
//! arithmetic at the base, then models, data partitioning, server
//! aggregation strategies, Shapley valuation, and finally the experiment
//! runner and CLI surface on top.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod model;
pub mod param_math;
pub mod report;
pub mod rng;
pub mod shapley;
pub mod strategies;

pub use error::{Error, Result};
