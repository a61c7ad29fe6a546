//! Active-learning data collection and all-pairs evaluation for extremely
//! imbalanced pairwise classification tasks.

pub mod cli;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod index;
pub mod strategies;

pub use error::{Error, Result};
