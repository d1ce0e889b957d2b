//! Reconstruction toolkit for lensfree holographic color microscopy.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autofocus;
pub mod colorimetry;
pub mod error;
pub mod fft;
pub mod field;
pub mod metrics;
pub mod phase;
pub mod pipeline;
pub mod propagation;
pub mod raster;
pub mod simulate;
pub mod superres;

pub use error::{Error, Result};
