//! Numerical laboratory for L-geometry and `g_t`-Brownian motion
//! on closed-form backwards Ricci flows.

// `!(a < b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod cli;
pub mod config;
pub mod coupling;
pub mod error;
pub mod frame_bm;
pub mod geometry;
pub mod io;
pub mod lgeodesic;
pub mod linalg;
pub mod pathopt;
pub mod transport;
pub mod verification;

pub use error::{LabError, Result};
