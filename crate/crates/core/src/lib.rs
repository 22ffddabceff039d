//! Simulation and analysis of a precessing nuclear spin tracked by periodic
//! weak measurements through an electron-spin meter.
//!
//! The crate is `no_std` (with `alloc`) so the numerical core can be embedded
//! anywhere; file formats and the command line live in the `spintrack` crate.
//!
//! Modules:
//! - [`analytic`]: closed-form Bloch-sphere model (kick, shrink, lock).
//! - [`dm`]: density-matrix engine for a meter plus up to three nuclei.
//! - [`protocol`]: pulse timing, resonance conditions, filter function, aliasing.
//! - [`noise`]: photon readout, re-initialisation kicks, field drift, SNR model.
//! - [`spectra`]: power spectra, least-squares fits, baseline normalisation.
//!
//! Units: angular frequencies and couplings in rad/s, rates in 1/s, times in s,
//! frequencies in Hz only where the name says so.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analytic;
pub mod dm;
mod error;
mod fft;
pub mod noise;
pub mod protocol;
pub mod rng;
pub mod spectra;
pub mod stats;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
