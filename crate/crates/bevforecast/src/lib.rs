//! Bird's-eye-view highway trajectory forecasting.
//!
//! The pipeline: vehicle scenes are rasterized into Gaussian occupancy
//! grids ([`bev`]), a depth-parameterized encoder-decoder ([`net`]) is
//! trained from scratch ([`train`]) to regress future grids from stacked
//! past grids, numeric positions are recovered by subpixel peak
//! extraction ([`extract`]), matched to targets by Hungarian assignment
//! ([`assoc`]), and scored as per-horizon longitudinal/lateral errors
//! ([`eval`]).
//!
//! See the crate `examples/` directory for one runnable walk-through per
//! capability, and the `bevf` binary for the equivalent command line.

// Validation uses `!(x > 0.0)` on purpose: unlike `x <= 0.0`, it also
// rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assoc;
pub mod bev;
pub mod config;
pub mod error;
pub mod eval;
pub mod extract;
pub mod net;
pub mod scenes;
pub mod train;

pub use error::{Error, Result};
