//! Dense linear algebra, elementwise math and seeded randomness shared by
//! every other module.
//!
//! Everything numeric is generic over [`Scalar`], which is implemented for
//! `f32` and `f64`. The workbench itself runs in `f64`; finite-difference
//! gradient checks need the headroom.

mod matrix;
mod ops;
mod rng;
mod scalar;

pub use matrix::Matrix;
pub use ops::{cosine, dot, hadamard, l2_normalize, norm, sigmoid, softmax, tanh, NORM_EPS};
pub use rng::Rng;
pub use scalar::Scalar;
