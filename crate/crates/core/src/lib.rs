//! Distance-preserving graph networks (DGN), their scale-normalising input
//! layer, a standard graph network baseline, and the polytope classification
//! experiments that compare them.

pub mod autodiff;
pub mod blocks;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod graph;
pub mod rng;
pub mod training;

pub use error::{DgnError, Result};
