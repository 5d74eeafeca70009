//! The emulation engine: input FIFO, feedforward and recurrent injection,
//! neuron updates, on-line STDP and observable readback.
//!
//! # Timing
//!
//! Update step `t` computes `V(t+1)` from the currents present at time `t`.
//! Input events stamped `t` and neuron spikes stamped `t` both inject during
//! step `t`; a neuron that crosses threshold during step `t` is stamped
//! `t + 1`. So an input spike at `t` can make a neuron fire at `t + 1` at the
//! earliest, and a neuron spike at `t` can make its targets fire at `t + 1`.
//! Because recurrent current is deferred this way, the order in which neurons
//! are visited inside a step has no observable effect.
//!
//! Step `t`, in order:
//! 1. STDP, input side: every distinct channel spiking at `t` runs its
//!    acausal pass over the neurons' post traces, then restarts its traces.
//! 2. Currents from the inputs at `t` (through `W_in`) and from the neurons
//!    stamped `t` (through `W_AA`) are summed in a wide accumulator, saturated
//!    once, and fed to [`lif_step`] for every neuron.
//! 3. All live traces age by one step.
//! 4. STDP, neuron side, for the neurons stamped `t + 1`: every causal pass
//!    runs first, then every acausal pass, then their traces restart.

use crate::dynamics::{lif_step, NeuronParams, NeuronState, ParamError};
use crate::fixed::{weight_to_raw_current, Weight8, Q710, MAX_WEIGHT_SHIFT};
use crate::matrix::Matrix;
use crate::plasticity::{InputTraces, StdpParamError, StdpParams, TraceState};
use std::sync::mpsc;
use std::thread;
use thiserror::Error;

/// Default neuron capacity of one core.
pub const DEFAULT_N_MAX: usize = 100;

/// Largest usable input address; `0xFFFF` is reserved on the wire.
pub const MAX_INPUT_CHANNELS: usize = 0xFFFF;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("neuron count {n} outside 1..={n_max}")]
    NeuronCount { n: usize, n_max: usize },
    #[error("input channel count {0} outside 1..=65535")]
    InputCount(usize),
    #[error("{name} has shape {got:?}, expected {expected:?}")]
    Shape { name: &'static str, got: (usize, usize), expected: (usize, usize) },
    #[error("monitored neuron {monitor} out of range for {n} neurons")]
    Monitor { monitor: usize, n: usize },
    #[error("weight shift {0} exceeds {MAX_WEIGHT_SHIFT}")]
    WeightShift(u8),
    #[error("neuron parameters: {0}")]
    Neuron(#[from] ParamError),
    #[error("STDP parameters: {0}")]
    Stdp(#[from] StdpParamError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("event at time {event} delivered to step {step}")]
    Sequencing { event: u32, step: u32 },
    #[error("input stream not time-sorted at index {index}")]
    Unsorted { index: usize },
    #[error("input address {address} out of range for {n_in} channels")]
    Address { address: u16, n_in: usize },
    #[error("update order is not a permutation of 0..{0}")]
    UpdateOrder(usize),
}

/// One input spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpikeEvent {
    pub time: u32,
    pub address: u16,
}

impl SpikeEvent {
    pub const fn new(time: u32, address: u16) -> Self {
        SpikeEvent { time, address }
    }
}

/// One output spike in a raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Spike {
    pub time: u32,
    pub neuron: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightSnapshot {
    pub w_aa: Matrix<Weight8>,
    pub w_in: Matrix<Weight8>,
}

/// Everything observable from one run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunTrace {
    /// Output spikes in time order, ascending neuron index within a timestep.
    pub raster: Vec<Spike>,
    /// Membrane of the monitored neuron; entry `i` is `V(i + 1)`.
    pub membrane: Vec<Q710>,
    pub final_weights: Option<WeightSnapshot>,
}

impl RunTrace {
    /// Output spike counts per neuron.
    pub fn spike_counts(&self, n: usize) -> Vec<u32> {
        let mut counts = vec![0u32; n];
        for s in &self.raster {
            counts[s.neuron as usize] += 1;
        }
        counts
    }
}

/// Full description of a network as loaded onto the core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub n: usize,
    pub n_in: usize,
    /// `w_aa[(source, target)]`.
    pub w_aa: Matrix<Weight8>,
    /// `w_in[(neuron, channel)]`.
    pub w_in: Matrix<Weight8>,
    pub enable_stdp_aa: Matrix<bool>,
    pub enable_stdp_in: Matrix<bool>,
    pub neuron_params: NeuronParams,
    pub stdp_params: StdpParams,
    pub weight_shift: u8,
    pub monitored_neuron: usize,
    pub n_max: usize,
}

impl NetworkConfig {
    /// Unconnected network with default parameters and everything masked.
    pub fn new(n: usize, n_in: usize) -> Self {
        NetworkConfig {
            n,
            n_in,
            w_aa: Matrix::filled(n, n, Weight8::ZERO),
            w_in: Matrix::filled(n, n_in, Weight8::ZERO),
            enable_stdp_aa: Matrix::filled(n, n, false),
            enable_stdp_in: Matrix::filled(n, n_in, false),
            neuron_params: NeuronParams::default(),
            stdp_params: StdpParams::default(),
            weight_shift: crate::fixed::DEFAULT_WEIGHT_SHIFT,
            monitored_neuron: 0,
            n_max: DEFAULT_N_MAX,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 || self.n > self.n_max || self.n > u16::MAX as usize {
            return Err(ConfigError::NeuronCount { n: self.n, n_max: self.n_max });
        }
        if self.n_in == 0 || self.n_in > MAX_INPUT_CHANNELS {
            return Err(ConfigError::InputCount(self.n_in));
        }
        let square = (self.n, self.n);
        let rect = (self.n, self.n_in);
        for (name, got, expected) in [
            ("w_aa", self.w_aa.shape(), square),
            ("w_in", self.w_in.shape(), rect),
            ("enable_stdp_aa", self.enable_stdp_aa.shape(), square),
            ("enable_stdp_in", self.enable_stdp_in.shape(), rect),
        ] {
            if got != expected {
                return Err(ConfigError::Shape { name, got, expected });
            }
        }
        if self.monitored_neuron >= self.n {
            return Err(ConfigError::Monitor { monitor: self.monitored_neuron, n: self.n });
        }
        if self.weight_shift > MAX_WEIGHT_SHIFT {
            return Err(ConfigError::WeightShift(self.weight_shift));
        }
        self.neuron_params.validate()?;
        self.stdp_params.validate()?;
        Ok(())
    }
}

/// Checks that a stream is time-sorted and addresses fit `n_in`.
pub fn validate_stream(stream: &[SpikeEvent], n_in: usize) -> Result<(), NetworkError> {
    for (index, pair) in stream.windows(2).enumerate() {
        if pair[1].time < pair[0].time {
            return Err(NetworkError::Unsorted { index: index + 1 });
        }
    }
    if let Some(e) = stream.iter().find(|e| e.address as usize >= n_in) {
        return Err(NetworkError::Address { address: e.address, n_in });
    }
    Ok(())
}

/// What one update step produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutput {
    /// Timestamp of the spikes in `fired` (update step + 1).
    pub time: u32,
    /// Neurons that crossed threshold, ascending.
    pub fired: Vec<usize>,
    /// Monitored membrane after the update.
    pub membrane: Q710,
}

/// A configured core.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    w_aa: Matrix<Weight8>,
    w_in: Matrix<Weight8>,
    neurons: Vec<NeuronState>,
    traces: TraceState,
    input_traces: InputTraces,
    /// Neurons stamped with the current time, to be propagated this step.
    pending: Vec<usize>,
    time: u32,
    order: Vec<usize>,
    accumulator: Vec<i64>,
    channel_seen: Vec<bool>,
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let n = config.n;
        Ok(Network {
            w_aa: config.w_aa.clone(),
            w_in: config.w_in.clone(),
            neurons: vec![NeuronState::resting(&config.neuron_params); n],
            traces: TraceState::new(config.enable_stdp_aa.clone()),
            input_traces: InputTraces::new(config.enable_stdp_in.clone()),
            pending: Vec::new(),
            time: 0,
            order: (0..n).collect(),
            accumulator: vec![0; n],
            channel_seen: vec![false; config.n_in],
            config,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Index of the next update step.
    pub fn time(&self) -> u32 {
        self.time
    }

    pub fn neuron(&self, i: usize) -> &NeuronState {
        &self.neurons[i]
    }

    pub fn traces(&self) -> &TraceState {
        &self.traces
    }

    pub fn input_traces(&self) -> &InputTraces {
        &self.input_traces
    }

    pub fn set_monitor(&mut self, neuron: usize) -> Result<(), ConfigError> {
        if neuron >= self.config.n {
            return Err(ConfigError::Monitor { monitor: neuron, n: self.config.n });
        }
        self.config.monitored_neuron = neuron;
        Ok(())
    }

    pub fn set_stdp_enabled(&mut self, enabled: bool) {
        self.config.stdp_params.enabled = enabled;
    }

    /// Replaces the learning rule parameters without touching weights or state.
    pub fn set_stdp_params(&mut self, params: StdpParams) -> Result<(), ConfigError> {
        params.validate()?;
        self.config.stdp_params = params;
        Ok(())
    }

    /// Visits neurons in `order` instead of ascending index. Results are
    /// identical either way; this exists to check that claim.
    pub fn set_update_order(&mut self, order: Vec<usize>) -> Result<(), NetworkError> {
        let n = self.config.n;
        let mut seen = vec![false; n];
        if order.len() != n {
            return Err(NetworkError::UpdateOrder(n));
        }
        for &i in &order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(NetworkError::UpdateOrder(n));
            }
        }
        self.order = order;
        Ok(())
    }

    /// Clears membranes, currents, traces, pending spikes and the clock. Weights are kept.
    pub fn reset(&mut self) {
        let rest = NeuronState::resting(&self.config.neuron_params);
        self.neurons.fill(rest);
        self.traces.clear();
        self.input_traces.clear();
        self.pending.clear();
        self.time = 0;
    }

    /// Puts the weights back to their configured values.
    pub fn restore_weights(&mut self) {
        self.w_aa = self.config.w_aa.clone();
        self.w_in = self.config.w_in.clone();
    }

    pub fn weights(&self) -> (&Matrix<Weight8>, &Matrix<Weight8>) {
        (&self.w_aa, &self.w_in)
    }

    pub fn readback_weights(&self) -> WeightSnapshot {
        WeightSnapshot { w_aa: self.w_aa.clone(), w_in: self.w_in.clone() }
    }

    /// Runs one update step with the input events stamped at the current time.
    pub fn step(&mut self, events: &[SpikeEvent]) -> Result<StepOutput, NetworkError> {
        let n_in = self.config.n_in;
        for e in events {
            if e.time != self.time {
                return Err(NetworkError::Sequencing { event: e.time, step: self.time });
            }
            if e.address as usize >= n_in {
                return Err(NetworkError::Address { address: e.address, n_in });
            }
        }

        let stdp = self.config.stdp_params;
        let shift = self.config.weight_shift;

        if stdp.enabled {
            for e in events {
                let c = e.address as usize;
                if !std::mem::replace(&mut self.channel_seen[c], true) {
                    self.input_traces.depress_column(c, &mut self.w_in, &self.traces.post_traces, &stdp);
                    self.input_traces.restart_channel(c);
                }
            }
            for e in events {
                self.channel_seen[e.address as usize] = false;
            }
        }

        self.accumulator.fill(0);
        for e in events {
            let c = e.address as usize;
            for (k, acc) in self.accumulator.iter_mut().enumerate() {
                *acc += weight_to_raw_current(self.w_in[(k, c)], shift);
            }
        }
        for &s in &self.pending {
            for (acc, &w) in self.accumulator.iter_mut().zip(self.w_aa.row(s)) {
                *acc += weight_to_raw_current(w, shift);
            }
        }

        let params = self.config.neuron_params;
        let mut fired = Vec::new();
        for &k in &self.order {
            let injected = Q710::saturating_from_raw(self.accumulator[k]);
            let (next, spiked) = lif_step(self.neurons[k], &params, injected);
            self.neurons[k] = next;
            if spiked {
                fired.push(k);
            }
        }
        fired.sort_unstable();

        if stdp.enabled {
            self.traces.tick(&stdp);
            self.input_traces.tick(&stdp);
            for &k in &fired {
                self.traces.potentiate_incoming(k, &mut self.w_aa, &stdp);
                self.input_traces.potentiate_row(k, &mut self.w_in, &stdp);
            }
            for &k in &fired {
                self.traces.depress_outgoing(k, &mut self.w_aa, &stdp);
            }
            for &k in &fired {
                self.traces.restart(k);
            }
        }

        self.time += 1;
        self.pending.clone_from(&fired);
        Ok(StepOutput {
            time: self.time,
            fired,
            membrane: self.neurons[self.config.monitored_neuron].v,
        })
    }

    /// Resets dynamic state and runs update steps `0..t_end`, draining events
    /// from the head of `stream` as the clock reaches their timestamps.
    /// Events stamped at or after `t_end` are never delivered.
    pub fn run(&mut self, stream: &[SpikeEvent], t_end: u32) -> Result<RunTrace, NetworkError> {
        self.run_with(stream, t_end, |_| {})
    }

    /// [`Network::run`] with a callback after every step.
    pub fn run_with(
        &mut self,
        stream: &[SpikeEvent],
        t_end: u32,
        mut on_step: impl FnMut(&StepOutput),
    ) -> Result<RunTrace, NetworkError> {
        validate_stream(stream, self.config.n_in)?;
        self.reset();
        let mut trace = RunTrace::default();
        let mut head = 0;
        for t in 0..t_end {
            let start = head;
            while head < stream.len() && stream[head].time == t {
                head += 1;
            }
            let out = self.step(&stream[start..head])?;
            trace.raster.extend(out.fired.iter().map(|&k| Spike { time: out.time, neuron: k as u16 }));
            trace.membrane.push(out.membrane);
            on_step(&out);
        }
        trace.final_weights = Some(self.readback_weights());
        Ok(trace)
    }
}

/// Finishes with the network and its full trace.
pub type RunHandle = thread::JoinHandle<Result<(Network, RunTrace), NetworkError>>;

/// Runs a network on a worker thread, streaming per-step output through a
/// bounded queue of `capacity` entries. The handle yields the network and the
/// full trace once the run completes.
pub fn spawn_run(
    mut network: Network,
    stream: Vec<SpikeEvent>,
    t_end: u32,
    capacity: usize,
) -> (mpsc::Receiver<StepOutput>, RunHandle) {
    let (tx, rx) = mpsc::sync_channel(capacity);
    let handle = thread::spawn(move || {
        let trace = network.run_with(&stream, t_end, |out| {
            // A dropped receiver only stops the stream, not the run.
            let _ = tx.send(out.clone());
        })?;
        Ok((network, trace))
    });
    (rx, handle)
}
