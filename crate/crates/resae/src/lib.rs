//! ReSaE: hyper-relational knowledge graph embedding for link prediction.
//!
//! The encoder passes messages over statements whose relations carry
//! qualifier pairs, using self-attention over the relation table and a
//! co-occurrence matrix to update relation representations. The decoder is a
//! position-free transformer with a type-wise pooling readout scored
//! one-vs-all against every entity. Everything runs on a small built-in f64
//! autodiff core, so the whole model is finite-difference checkable.
//!
//! See the crate examples for runnable entry points into each capability and
//! the `resae` binary for the command-line workflow.

pub mod autodiff;
pub mod cli;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod kg;
pub mod model;
pub mod train;

pub use error::{ResaeError, Result};
