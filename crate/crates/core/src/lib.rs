//! Risk-constrained reranking of best-of-K candidate pools.
//!
//! Given per-candidate scalar satisfaction samples for every prompt, the
//! crate selects one output per prompt under entropic, budgeted, penalized,
//! near-tie, confidence-bound and baseline rules, aggregates several
//! scorers with a soft worst case, evaluates selections on held-out samples
//! and checks the closed forms it relies on against brute-force optimizers.

pub mod calibrate;
pub mod corpus;
pub mod decoders;
pub mod error;
pub mod metrics;
pub mod multiscorer;
pub mod numfmt;
pub mod oracle;
pub mod pipeline;
pub mod risk;
pub mod rng;
pub mod simulator;
pub mod verify;

pub use error::{Error, Result};
