//! Streaming variational Bayes for conjugate exponential-family models on
//! drifting data streams.
//!
//! The learners (SVB, SVB with power priors, population VB and the
//! hierarchical power prior variants) share one batch-update interface and
//! are selected by name through [`learners::LearnerRegistry`].

pub mod drift;
pub mod engine;
pub mod error;
pub mod expfam;
pub mod learners;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod special;
pub mod streams;

pub use error::{Error, Result};
