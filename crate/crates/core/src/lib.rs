//! Simulation and signal-processing core for a swept-wavelength optical
//! vector network analyzer with an automatic polarization controller.
//!
//! The crate is `no_std` and only needs an allocator.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod apc;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod fiber;
pub mod linalg;
pub mod sweep;

pub use error::{Error, Result};

/// Vacuum speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
