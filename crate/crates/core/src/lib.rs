//! Time-domain marine CSEM inversion toolkit: layered-earth forward
//! modelling, synthetic data generation, a dual-branch temporal
//! convolutional network with a physics decoder, classical iterative
//! inversion and uncertainty quantification.

pub mod classical_inversion;
pub mod em_forward;
mod error;
pub mod evaluation;
pub mod phys_decoder;
pub mod synth_data;
pub mod tcn_core;
pub mod training;
pub mod uq;

pub use error::{Error, Result};
