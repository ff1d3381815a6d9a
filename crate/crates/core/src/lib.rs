//! Image-on-scalar regression with region-selecting penalties.
//!
//! The model is `Y_i(s) = X_iᵀβ(s) + noise` on a 2D pixel grid. Coefficient
//! images are estimated by minimizing least squares plus one of three
//! penalties:
//!
//! * SCAD2TV: SCAD on the forward differences (weight `gamma`) and on the
//!   pixel values of every 3-pixel neighbourhood (weight `1 - gamma`),
//! * TV-ℓ1: `lambda (gamma TV + (1 - gamma) ℓ1)`,
//! * GraphNet: `lambda (gamma ||∇β||² + (1 - gamma) ℓ1)`.
//!
//! All three are solved by the same ADMM loop ([`solver::fit`]); large
//! images can be split into overlapping tiles ([`dnc::fit_tiled`]).

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diffops;
pub mod dnc;
pub mod error;
pub mod io;
pub mod metrics;
pub mod penalty;
pub mod solver;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    devectorize, vectorize, CoefficientField, Dataset, FitResult, GridShape, Image, PenaltyKind, SolverConfig,
    TileSummary,
};
