//! Fusion and orthogonal projection for face-voice association.
//!
//! A small workbench over precomputed face and voice embeddings: a gated
//! fusion head trained with cross-entropy plus an orthogonality constraint,
//! baseline metric-learning losses, and the verification, matching and
//! feature-similarity evaluations used to compare them.

pub mod benchlosses;
pub mod dataio;
pub mod error;
pub mod evalsuite;
pub mod fopmodel;
pub mod losses;
pub mod numcore;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
pub use numcore::{Matrix, Rng, Scalar};

/// Double-precision matrix, the workbench default.
pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
