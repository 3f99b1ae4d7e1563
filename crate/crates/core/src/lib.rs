//! Search-free direction-of-arrival estimation for transmit-beamspace MIMO radar.
//!
//! The received pulses of one coherent processing interval form a
//! `K×N×Q` tensor (beam × receive element × pulse) with CP structure
//! `[[WᴴA, B, C]]`. [`cp::als_decompose`] recovers the transmit factor, and
//! [`doa::estimate_doas`] turns each of its columns into an angle by rooting a
//! Laurent polynomial whose unit-circle zero sits at the target's transmit
//! null. [`experiments`] wraps the pipeline in seeded Monte-Carlo sweeps.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod cli;
pub mod config;
pub mod cp;
pub mod doa;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod tensor;

pub use error::{Error, Result};
pub use num_complex::Complex64;
