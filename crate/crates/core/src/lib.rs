//! Temporal-spectral invariance toolkit for patch-signal deepfake detectors.

pub mod attacks;
pub mod autodiff;
pub mod cli;
pub mod error;
pub mod harness;
pub mod io;
pub mod models;
pub mod objectives;
pub mod spectral;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
