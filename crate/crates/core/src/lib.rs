//! Gradient descent on scalar and matrix factorization losses, its planar quotient
//! dynamics, and tools for measuring the fractal geometry of its basins.

// `!(x > 0.0)` style checks are used on purpose so NaN inputs are rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod criticality;
pub mod error;
pub mod experiments;
pub mod fractal;
pub mod linalg;
pub mod matrix;
pub mod poly;
pub mod quotient;
pub mod scalar;

pub use error::{Error, Result};
