// negated comparisons below are deliberate: they reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod error;
pub mod frames;
pub mod geometry;
pub mod kernels;
pub mod orthopoly;
pub mod par;
pub mod quadrature;
pub mod sampling;

pub use error::{ConicError, Result};
