//! Leaky integrate-and-fire update with a linearly decaying current synapse.
//!
//! One timestep of a neuron:
//!
//! ```text
//! I_syn <- decay(I_syn, syn_leak) + injected
//! V     <- V - leak + I_syn
//! spike <- V > V_th
//! ```
//!
//! Decay pulls the current toward zero without crossing it. While refractory
//! the neuron holds `V = V_reset`, discards injected current and only lets the
//! synaptic current decay.

use crate::fixed::{q_add, q_sub, Q710};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamError {
    #[error("leak must be non-negative (got raw {0})")]
    NegativeLeak(i32),
    #[error("synaptic leak must be non-negative (got raw {0})")]
    NegativeSynLeak(i32),
    #[error("threshold (raw {v_th}) must exceed reset (raw {v_reset})")]
    ThresholdBelowReset { v_th: i32, v_reset: i32 },
}

/// Parameters shared by every neuron of a core.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeuronParams {
    pub v_th: Q710,
    /// Per-step membrane leak.
    pub leak: Q710,
    pub refractory_steps: u16,
    pub v_reset: Q710,
    /// Per-step synaptic current decay.
    pub syn_leak: Q710,
    /// Clamp the membrane at `v_reset` from below.
    pub membrane_floor: bool,
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams {
            v_th: Q710::ONE,
            leak: Q710::ZERO,
            refractory_steps: 0,
            v_reset: Q710::ZERO,
            syn_leak: Q710::ZERO,
            membrane_floor: true,
        }
    }
}

impl NeuronParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.leak.is_negative() {
            return Err(ParamError::NegativeLeak(self.leak.raw()));
        }
        if self.syn_leak.is_negative() {
            return Err(ParamError::NegativeSynLeak(self.syn_leak.raw()));
        }
        if self.v_th <= self.v_reset {
            return Err(ParamError::ThresholdBelowReset {
                v_th: self.v_th.raw(),
                v_reset: self.v_reset.raw(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NeuronState {
    pub v: Q710,
    pub i_syn: Q710,
    pub refractory_remaining: u16,
    /// Whether the neuron fired on the most recent step.
    pub spiked: bool,
}

impl NeuronState {
    /// Resting state for the given parameters.
    pub fn resting(params: &NeuronParams) -> Self {
        NeuronState { v: params.v_reset, ..Default::default() }
    }
}

/// Moves `i` toward zero by `syn_leak`, never past it.
#[inline]
pub fn syn_decay(i: Q710, syn_leak: Q710) -> Q710 {
    let mag = i.abs_raw() as i64 - syn_leak.raw() as i64;
    if mag <= 0 {
        Q710::ZERO
    } else if i.is_negative() {
        Q710::saturating_from_raw(-mag)
    } else {
        Q710::saturating_from_raw(mag)
    }
}

/// Advances one neuron by one timestep. Returns the new state and whether it spiked.
pub fn lif_step(state: NeuronState, params: &NeuronParams, injected: Q710) -> (NeuronState, bool) {
    let i_decayed = syn_decay(state.i_syn, params.syn_leak);

    if state.refractory_remaining > 0 {
        let next = NeuronState {
            v: params.v_reset,
            i_syn: i_decayed,
            refractory_remaining: state.refractory_remaining - 1,
            spiked: false,
        };
        return (next, false);
    }

    let i_syn = q_add(i_decayed, injected);
    let mut v = q_add(q_sub(state.v, params.leak), i_syn);
    if params.membrane_floor && v < params.v_reset {
        v = params.v_reset;
    }

    if v > params.v_th {
        let next = NeuronState {
            v: params.v_reset,
            i_syn,
            refractory_remaining: params.refractory_steps,
            spiked: true,
        };
        (next, true)
    } else {
        (NeuronState { v, i_syn, refractory_remaining: 0, spiked: false }, false)
    }
}
