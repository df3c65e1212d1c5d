//! Selective zero-shot classification with augmented attributes.
//!
//! A linear model that learns latent attributes tied to human-defined class
//! descriptions, plus residual attributes that capture what those descriptions
//! miss, and uses the agreement between the two to decide when to abstain.
//!
//! The crate is `no_std` with `alloc`; file formats, the command line and the
//! cross-validation harness live in the `szsc` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod eval;
pub mod inference;
pub mod lad;
pub mod matrix;
pub mod residual;
pub mod solve;

pub use data::{ClassId, Dataset, HyperParams, MatchSpace, ResidualCenters, Violation};
pub use error::{Error, Result};
pub use eval::{rcc, RiskCoverageCurve};
pub use inference::{AugmentedCode, ConfidenceReport, Decision};
pub use lad::{fit_lad, LadModel};
pub use matrix::Matrix;
pub use residual::{fit_residual, AugmentedModel, ResidualModel};
pub use solve::{ridge_solve, SolverSettings};
