//! Software model of a small time-multiplexed spiking core: fixed-point LIF
//! neurons with current synapses, on-line rectangular-window STDP, and the
//! host link that configures it and streams spikes in and out.
//!
//! Modules, bottom up:
//!
//! * [`fixed`]: Q1.7.10 state values and signed 8-bit weights.
//! * [`dynamics`]: one LIF neuron step.
//! * [`plasticity`]: trace banks and the STDP rule.
//! * [`network`]: the full core and its run loop.
//! * [`protocol`]: spike-word codec, framing and the device-side session.
//! * [`oracle`]: independent scalar and floating-point reference models.
//! * [`harness`]: datasets and the digit / citation-graph experiments.

pub mod dynamics;
pub mod fixed;
pub mod harness;
pub mod matrix;
pub mod network;
pub mod oracle;
pub mod plasticity;
pub mod protocol;

pub use dynamics::{lif_step, syn_decay, NeuronParams, NeuronState};
pub use fixed::{q_add, q_sub, weight_to_current, Weight8, Q710};
pub use matrix::Matrix;
pub use network::{Network, NetworkConfig, NetworkError, RunTrace, Spike, SpikeEvent, WeightSnapshot};
pub use plasticity::{stdp_delta, StdpParams, TraceState, TRACE_DISABLED};
