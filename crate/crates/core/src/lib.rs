//! Logistic classifier chains for multi-label learning.
//!
//! The crate covers ridge logistic fitting, link-specification diagnostics,
//! forward selection of the chain ordering, joint-mode inference, synthetic
//! chain models, evaluation measures, dataset input/output and the
//! simulation sweeps built on top of them.

pub mod chain;
pub mod dataio;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod linalg;
pub mod logistic;
pub mod metrics;
pub mod ordering;
pub mod rng;
pub mod speclink;
pub mod synthgen;

pub use error::{Error, Result};
