//! Groundwater heat pump plume toolkit: random geology, a finite-volume
//! flow and heat-transport simulator, training-data pipeline, a convolutional
//! encoder-decoder surrogate and evaluation utilities.

pub mod container;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod field;
pub mod geogen;
pub mod lahm;
pub mod nn;
pub mod render;
pub mod sim;
pub mod surrogate;

pub use error::{Error, Result};
pub use field::{Grid, ScalarField, VectorField};
