//! File formats, model archives, cross-validation and synthetic data for
//! residual-augmented zero-shot classification.

pub mod archive;
pub mod cv;
pub mod error;
pub mod io;
pub mod plot;
pub mod synth;

pub use error::{CliError, Result};
