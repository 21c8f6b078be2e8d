//! Regional feature effects by interaction-minimizing recursive partitioning.
//!
//! The crate computes local effects (centered ICE, ALE derivatives,
//! interventional Shapley values), grows trees that split the feature space
//! so that these local effects become homogeneous, quantifies the removed
//! interaction heterogeneity and tests features with a permutation test.

pub mod cli;
pub mod data;
pub mod effects;
pub mod error;
pub mod gadget;
pub mod interactions;
pub mod learners;
pub mod pint;
pub mod rng;
pub mod simlab;
pub mod stats;

pub use error::{GadgetError, Result};
