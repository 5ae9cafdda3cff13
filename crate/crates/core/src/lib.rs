//! Simulation and analysis toolkit for direction-dependent Raman gain of
//! waveguide-guided light by spin-polarized Λ atoms.
//!
//! Pipeline: [`chiral`] resolves a physical scenario into effective
//! [`lambda::LambdaParams`] per propagation direction, [`cascade`] drives
//! each atom of the array with the field transmitted by the atoms upstream
//! (integrating the [`lindblad`] master equation and converting coherences
//! to transfer functions with [`response`]), and [`spectroscopy`] scans and
//! fits quasi-steady-state spectra. [`scenario`] and [`output`] handle
//! configuration, presets and CSV.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod chiral;
pub mod error;
pub mod lambda;
pub mod lindblad;
pub mod ode;
pub mod output;
pub mod response;
pub mod scenario;
pub mod spectroscopy;

pub use error::{Error, Result};
pub use lambda::{mhz, to_mhz, LambdaParams, Level};
