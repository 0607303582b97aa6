//! Sparse integer risk scorecards.
//!
//! The training pipeline binarizes raw variables into threshold/category/missing
//! splits, fits a constrained sparse logistic regression by beam search, grows a
//! pool of near-optimal alternatives by single-feature swaps, and rounds each one
//! to integer points under a searched multiplier.

pub mod binarize;
pub mod cli;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pool;
pub mod rounding;
pub mod solver;

pub use error::{Error, Result};
