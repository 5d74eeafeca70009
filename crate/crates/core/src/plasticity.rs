//! Pair-based STDP with a rectangular learning window.
//!
//! Spike pairings are detected with 8-bit age counters instead of timestamps:
//!
//! * `synaptic_traces[j][k]` counts steps since presynaptic neuron `j` last
//!   fired, per outgoing synapse. Reset to 0 on a spike of `j`, cleared to
//!   [`TRACE_DISABLED`] once it reaches `t_pre` or once it has been used for a
//!   potentiation.
//! * `post_traces[k]` counts steps since neuron `k` last fired, cleared once it
//!   reaches `t_post`.
//! * `update_state[j][k]` mirrors whether `synaptic_traces[j][k]` is live.
//! * `enable_stdp[j][k]` is the static plasticity mask.
//!
//! Feedforward synapses use an [`InputTraces`] bank with the same rules; its
//! matrices are indexed `[neuron][channel]`, like `W_in`.

use crate::fixed::Weight8;
use crate::matrix::Matrix;
use thiserror::Error;

/// Trace value of an inactive counter.
pub const TRACE_DISABLED: u8 = 0xFF;

/// Longest window an 8-bit counter can time out before hitting the sentinel.
pub const MAX_WINDOW: u8 = 254;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StdpParamError {
    #[error("{name} must be in 1..=127 (got {value})")]
    Step { name: &'static str, value: u8 },
    #[error("{name} must be in 1..=254 (got {value})")]
    Window { name: &'static str, value: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StdpParams {
    /// Potentiation step for a causal pair.
    pub dw_pos: u8,
    /// Depression step for an acausal pair.
    pub dw_neg: u8,
    /// Causal window length in timesteps (exclusive).
    pub t_pre: u8,
    /// Acausal window length in timesteps (exclusive).
    pub t_post: u8,
    pub enabled: bool,
}

impl Default for StdpParams {
    fn default() -> Self {
        StdpParams { dw_pos: 1, dw_neg: 1, t_pre: 10, t_post: 10, enabled: false }
    }
}

impl StdpParams {
    pub fn validate(&self) -> Result<(), StdpParamError> {
        for (name, value) in [("dw_pos", self.dw_pos), ("dw_neg", self.dw_neg)] {
            if !(1..=127).contains(&value) {
                return Err(StdpParamError::Step { name, value });
            }
        }
        for (name, value) in [("t_pre", self.t_pre), ("t_post", self.t_post)] {
            if !(1..=MAX_WINDOW).contains(&value) {
                return Err(StdpParamError::Window { name, value });
            }
        }
        Ok(())
    }
}

/// Weight change for an isolated pair, `delta_t = t_post_spike - t_pre_spike`.
pub fn stdp_delta(delta_t: i64, params: &StdpParams) -> i32 {
    if delta_t > 0 && delta_t < params.t_pre as i64 {
        params.dw_pos as i32
    } else if delta_t < 0 && -delta_t < params.t_post as i64 {
        -(params.dw_neg as i32)
    } else {
        0
    }
}

#[inline]
fn advance(trace: &mut u8, window: u8) -> bool {
    if *trace == TRACE_DISABLED {
        return false;
    }
    *trace += 1;
    if *trace >= window {
        *trace = TRACE_DISABLED;
        false
    } else {
        true
    }
}

#[inline]
fn live_within(trace: u8, window: u8) -> bool {
    trace != TRACE_DISABLED && trace > 0 && trace < window
}

/// STDP bookkeeping for the recurrent matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceState {
    pub synaptic_traces: Matrix<u8>,
    pub post_traces: Vec<u8>,
    pub update_state: Matrix<bool>,
    pub enable_stdp: Matrix<bool>,
}

impl TraceState {
    /// All traces disabled. `enable_stdp` must be square.
    pub fn new(enable_stdp: Matrix<bool>) -> Self {
        let n = enable_stdp.rows();
        assert_eq!(enable_stdp.cols(), n, "recurrent plasticity mask must be square");
        TraceState {
            synaptic_traces: Matrix::filled(n, n, TRACE_DISABLED),
            post_traces: vec![TRACE_DISABLED; n],
            update_state: Matrix::filled(n, n, false),
            enable_stdp,
        }
    }

    pub fn len(&self) -> usize {
        self.post_traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.post_traces.is_empty()
    }

    /// Disables every trace, keeping the mask.
    pub fn clear(&mut self) {
        self.synaptic_traces.fill(TRACE_DISABLED);
        self.update_state.fill(false);
        self.post_traces.fill(TRACE_DISABLED);
    }

    /// Causal pass for a spike of `n`: every live incoming trace `j -> n`
    /// potentiates `w[j][n]` and is consumed.
    pub fn potentiate_incoming(&mut self, n: usize, weights: &mut Matrix<Weight8>, params: &StdpParams) {
        for j in 0..self.len() {
            let trace = self.synaptic_traces[(j, n)];
            if !live_within(trace, params.t_pre) {
                continue;
            }
            if self.enable_stdp[(j, n)] {
                weights[(j, n)] = weights[(j, n)].saturating_step(params.dw_pos as i32);
            }
            self.synaptic_traces[(j, n)] = TRACE_DISABLED;
            self.update_state[(j, n)] = false;
        }
    }

    /// Acausal pass for a spike of `n`: every target `k` that fired within
    /// `t_post` steps depresses `w[n][k]`.
    pub fn depress_outgoing(&mut self, n: usize, weights: &mut Matrix<Weight8>, params: &StdpParams) {
        for k in 0..self.len() {
            if live_within(self.post_traces[k], params.t_post) && self.enable_stdp[(n, k)] {
                weights[(n, k)] = weights[(n, k)].saturating_step(-(params.dw_neg as i32));
            }
        }
    }

    /// Starts the outgoing and post traces of `n` at age 0.
    pub fn restart(&mut self, n: usize) {
        self.synaptic_traces.row_mut(n).fill(0);
        self.update_state.row_mut(n).fill(true);
        self.post_traces[n] = 0;
    }

    /// Full bookkeeping for a lone spike of `n`: causal pass, acausal pass, restart.
    pub fn on_spike(&mut self, n: usize, weights: &mut Matrix<Weight8>, params: &StdpParams) {
        self.potentiate_incoming(n, weights, params);
        self.depress_outgoing(n, weights, params);
        self.restart(n);
    }

    /// Ages every live trace by one step, expiring those that reach their window.
    pub fn tick(&mut self, params: &StdpParams) {
        let traces = self.synaptic_traces.as_mut_slice();
        let flags = self.update_state.as_mut_slice();
        for (trace, flag) in traces.iter_mut().zip(flags.iter_mut()) {
            *flag = advance(trace, params.t_pre);
        }
        for trace in &mut self.post_traces {
            advance(trace, params.t_post);
        }
    }
}

/// STDP bookkeeping for the feedforward matrix, shaped `neurons x channels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputTraces {
    pub synaptic_traces: Matrix<u8>,
    pub update_state: Matrix<bool>,
    pub enable_stdp: Matrix<bool>,
}

impl InputTraces {
    pub fn new(enable_stdp: Matrix<bool>) -> Self {
        let (n, n_in) = enable_stdp.shape();
        InputTraces {
            synaptic_traces: Matrix::filled(n, n_in, TRACE_DISABLED),
            update_state: Matrix::filled(n, n_in, false),
            enable_stdp,
        }
    }

    pub fn clear(&mut self) {
        self.synaptic_traces.fill(TRACE_DISABLED);
        self.update_state.fill(false);
    }

    /// Causal pass for a spike of neuron `n` against every input channel.
    pub fn potentiate_row(&mut self, n: usize, w_in: &mut Matrix<Weight8>, params: &StdpParams) {
        for c in 0..self.synaptic_traces.cols() {
            let trace = self.synaptic_traces[(n, c)];
            if !live_within(trace, params.t_pre) {
                continue;
            }
            if self.enable_stdp[(n, c)] {
                w_in[(n, c)] = w_in[(n, c)].saturating_step(params.dw_pos as i32);
            }
            self.synaptic_traces[(n, c)] = TRACE_DISABLED;
            self.update_state[(n, c)] = false;
        }
    }

    /// Acausal pass for a spike on channel `c` against the neurons' post traces.
    pub fn depress_column(&mut self, c: usize, w_in: &mut Matrix<Weight8>, post_traces: &[u8], params: &StdpParams) {
        for (k, &post) in post_traces.iter().enumerate() {
            if live_within(post, params.t_post) && self.enable_stdp[(k, c)] {
                w_in[(k, c)] = w_in[(k, c)].saturating_step(-(params.dw_neg as i32));
            }
        }
    }

    /// Starts the traces of channel `c` toward every neuron at age 0.
    pub fn restart_channel(&mut self, c: usize) {
        for k in 0..self.synaptic_traces.rows() {
            self.synaptic_traces[(k, c)] = 0;
            self.update_state[(k, c)] = true;
        }
    }

    pub fn tick(&mut self, params: &StdpParams) {
        let traces = self.synaptic_traces.as_mut_slice();
        let flags = self.update_state.as_mut_slice();
        for (trace, flag) in traces.iter_mut().zip(flags.iter_mut()) {
            *flag = advance(trace, params.t_pre);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(dw_pos: u8, dw_neg: u8, t_pre: u8, t_post: u8) -> StdpParams {
        StdpParams { dw_pos, dw_neg, t_pre, t_post, enabled: true }
    }

    fn all_plastic(n: usize) -> TraceState {
        TraceState::new(Matrix::filled(n, n, true))
    }

    fn coupling_holds(t: &TraceState) -> bool {
        t.synaptic_traces
            .as_slice()
            .iter()
            .zip(t.update_state.as_slice())
            .all(|(&tr, &flag)| flag == (tr != TRACE_DISABLED))
    }

    #[test]
    fn delta_examples() {
        let p = params(4, 3, 10, 10);
        assert_eq!(stdp_delta(4, &p), 4);
        assert_eq!(stdp_delta(0, &p), 0);
        assert_eq!(stdp_delta(10, &p), 0);
        assert_eq!(stdp_delta(9, &p), 4);
        assert_eq!(stdp_delta(-4, &p), -3);
        assert_eq!(stdp_delta(-10, &p), 0);
    }

    #[test]
    fn tick_examples() {
        let p = params(1, 1, 10, 10);
        let mut t = all_plastic(2);
        t.synaptic_traces[(0, 1)] = 5;
        t.update_state[(0, 1)] = true;
        t.synaptic_traces[(1, 0)] = 9;
        t.update_state[(1, 0)] = true;
        t.tick(&p);
        assert_eq!(t.synaptic_traces[(0, 1)], 6);
        assert_eq!(t.synaptic_traces[(1, 0)], TRACE_DISABLED);
        assert!(!t.update_state[(1, 0)]);
        assert_eq!(t.synaptic_traces[(0, 0)], TRACE_DISABLED);
        assert!(coupling_holds(&t));
    }

    /// Runs spikes of neuron 1 and neuron 3 at the given times through on_spike/tick.
    fn pair(t1: u32, t3: u32, p: &StdpParams, w13: i8) -> Matrix<Weight8> {
        let mut traces = all_plastic(4);
        let mut w = Matrix::filled(4, 4, Weight8(0));
        w[(1, 3)] = Weight8(w13);
        for t in 0..=t1.max(t3) {
            if t == t1 {
                traces.on_spike(1, &mut w, p);
            }
            if t == t3 {
                traces.on_spike(3, &mut w, p);
            }
            traces.tick(p);
            assert!(coupling_holds(&traces));
        }
        w
    }

    #[test]
    fn causal_pair_potentiates() {
        let p = params(4, 3, 10, 10);
        let w = pair(2, 6, &p, 10);
        assert_eq!(w[(1, 3)], Weight8(14));
    }

    #[test]
    fn acausal_pair_depresses() {
        let p = params(4, 3, 10, 10);
        let w = pair(6, 2, &p, 10);
        assert_eq!(w[(1, 3)], Weight8(7));
    }

    #[test]
    fn potentiation_saturates() {
        let p = params(4, 3, 10, 10);
        assert_eq!(pair(0, 4, &p, 126)[(1, 3)], Weight8(127));
        assert_eq!(pair(4, 0, &p, -127)[(1, 3)], Weight8(-128));
    }

    #[test]
    fn causal_trace_is_consumed() {
        let p = params(4, 3, 10, 10);
        let mut traces = all_plastic(4);
        let mut w = Matrix::filled(4, 4, Weight8(0));
        traces.on_spike(1, &mut w, &p);
        traces.tick(&p);
        traces.tick(&p);
        traces.potentiate_incoming(3, &mut w, &p);
        assert_eq!(w[(1, 3)], Weight8(4));
        assert_eq!(traces.synaptic_traces[(1, 3)], TRACE_DISABLED);
        assert!(!traces.update_state[(1, 3)]);
        traces.potentiate_incoming(3, &mut w, &p);
        assert_eq!(w[(1, 3)], Weight8(4));
    }

    #[test]
    fn masked_synapse_is_frozen() {
        let p = params(4, 3, 10, 10);
        let mut traces = all_plastic(4);
        traces.enable_stdp[(1, 3)] = false;
        let mut w = Matrix::filled(4, 4, Weight8(0));
        w[(1, 3)] = Weight8(10);
        traces.on_spike(1, &mut w, &p);
        traces.tick(&p);
        traces.on_spike(3, &mut w, &p);
        assert_eq!(w[(1, 3)], Weight8(10));
    }

    #[test]
    fn input_bank_pairs() {
        let p = params(5, 2, 4, 4);
        let mut bank = InputTraces::new(Matrix::filled(2, 3, true));
        let mut w = Matrix::filled(2, 3, Weight8(0));
        bank.restart_channel(1);
        bank.tick(&p);
        bank.potentiate_row(0, &mut w, &p);
        assert_eq!(w[(0, 1)], Weight8(5));
        assert_eq!(w[(1, 1)], Weight8(0));
        let post = [2u8, TRACE_DISABLED];
        bank.depress_column(2, &mut w, &post, &p);
        assert_eq!(w[(0, 2)], Weight8(-2));
        assert_eq!(w[(1, 2)], Weight8(0));
    }

    #[test]
    fn param_validation() {
        assert!(params(1, 127, 1, 254).validate().is_ok());
        assert!(params(0, 1, 1, 1).validate().is_err());
        assert!(params(1, 128, 1, 1).validate().is_err());
        assert!(params(1, 1, 255, 1).validate().is_err());
        assert!(params(1, 1, 1, 0).validate().is_err());
    }
}
