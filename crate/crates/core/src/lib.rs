//! Mean-field caching game: an HJB–FPK equilibrium solver for per-file cache
//! control at dense small-cell base stations, and a finite-N agent simulator
//! to check it against.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod costs;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod scenario;
pub mod simulator;
pub mod solver;
pub mod validation;

pub use error::{Error, Result};
