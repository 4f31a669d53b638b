#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geo;
pub mod pinhole;
pub mod raster;
pub mod rpc;
pub mod sweep;
pub mod synthetic;
pub mod tensor;
pub mod warp;

pub use error::{Error, Result};
