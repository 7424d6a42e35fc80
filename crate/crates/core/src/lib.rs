//! Quasi-extremal pairs for the spherical averaging operator.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the formulas;
// `is_multiple_of` is newer than the supported toolchain.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::manual_is_multiple_of)]

pub mod calibration;
pub mod config;
pub mod convex;
pub mod decomposition;
pub mod error;
pub mod geometry;
pub mod lab;
pub mod maps;
pub mod rng;
pub mod surface;

pub use error::{Error, Result};
