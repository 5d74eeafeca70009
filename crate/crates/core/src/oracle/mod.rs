//! Independent reference models of the core.
//!
//! * [`scalar`]: a naive integer re-implementation used to check the engine bit for bit.
//! * [`float`]: a double-precision simulator used for training and for
//!   fixed-versus-float comparisons.

pub mod float;
pub mod scalar;

pub use float::{quantize_matrix, quantize_weight, FloatNetwork, FloatNeuronParams, FloatRunOptions, FloatTrace, StdpRule};
pub use scalar::oracle_run;
