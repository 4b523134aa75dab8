//! Hyperdimensional-computing seizure detection from multichannel EEG.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataio;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod filter;
pub mod generalization;
pub mod hybrid;
pub mod hypervector;
pub mod similarity;
pub mod training;

pub use error::{ErrorCategory, HdError, Result};
