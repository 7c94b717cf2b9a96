//! Invariant measures for weighted backward shifts on sequence spaces.
//!
//! The core types are generic over the scalar; the aliases below fix the
//! common choices.

pub mod commands;
pub mod config;
pub mod dense;
pub mod error;
pub mod majorant;
pub mod measure;
pub mod rng;
pub mod scalar;
pub mod shift;
pub mod space;
pub mod symbolic;
pub mod verify;

pub use error::{Error, Result};

pub type Vector = space::SparseVector<f64>;
pub type Vector32 = space::SparseVector<f32>;
pub type RationalVector = space::SparseVector<num_rational::Ratio<i64>>;
pub type Shift = shift::WeightedShift;
