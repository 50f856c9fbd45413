//! Continuous-time recurrent models of retinal ganglion cell responses.

// `!(x >= 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cfc;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod kernels;
pub mod layers;
pub mod ltc;
pub mod model;
pub mod params;
pub mod sequence;
pub mod tensor;
pub mod train;
pub mod wiring;

pub use error::{Error, Result};
