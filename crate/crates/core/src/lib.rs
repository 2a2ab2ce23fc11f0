//! Length-harmonizing fine-tuning on a desk-scale autoregressive policy.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod io;
pub mod policy;
pub mod reward;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
