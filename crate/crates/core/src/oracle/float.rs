//! Double-precision reference simulator.
//!
//! Same neuron equations and step timing as the fixed-point core, but with
//! `f64` state and weights, no saturation, and a choice of STDP kernel. Used
//! to train feedforward weights before they are quantized onto the core, and
//! to compare learning trajectories against the fixed-point engine.

use crate::fixed::Weight8;
use crate::matrix::Matrix;
use crate::network::{NetworkConfig, Spike, SpikeEvent};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StdpRule {
    /// Constant steps inside open windows, nearest-pair with consumption of
    /// the causal pairing (the core's rule).
    Rectangular { dw_pos: f64, dw_neg: f64, t_pre: u32, t_post: u32 },
    /// Nearest-neighbour exponential kernel.
    Exponential { a_pos: f64, a_neg: f64, tau_pos: f64, tau_neg: f64 },
}

impl StdpRule {
    fn potentiation(&self, gap: i64) -> f64 {
        match *self {
            StdpRule::Rectangular { dw_pos, t_pre, .. } => {
                if gap > 0 && gap < t_pre as i64 {
                    dw_pos
                } else {
                    0.0
                }
            }
            StdpRule::Exponential { a_pos, tau_pos, .. } => {
                if gap > 0 {
                    a_pos * (-(gap as f64) / tau_pos).exp()
                } else {
                    0.0
                }
            }
        }
    }

    fn depression(&self, gap: i64) -> f64 {
        match *self {
            StdpRule::Rectangular { dw_neg, t_post, .. } => {
                if gap > 0 && gap < t_post as i64 {
                    dw_neg
                } else {
                    0.0
                }
            }
            StdpRule::Exponential { a_neg, tau_neg, .. } => {
                if gap > 0 {
                    a_neg * (-(gap as f64) / tau_neg).exp()
                } else {
                    0.0
                }
            }
        }
    }

    fn consumes_pairs(&self) -> bool {
        matches!(self, StdpRule::Rectangular { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloatNeuronParams {
    pub v_th: f64,
    pub leak: f64,
    pub v_reset: f64,
    pub syn_leak: f64,
    pub refractory_steps: u32,
    pub membrane_floor: bool,
}

/// Floating-point mirror of a [`NetworkConfig`]. Weights are in weight units;
/// `weight_scale` converts a unit of weight into membrane units.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatNetwork {
    pub n: usize,
    pub n_in: usize,
    pub w_aa: Matrix<f64>,
    pub w_in: Matrix<f64>,
    pub enable_stdp_aa: Matrix<bool>,
    pub enable_stdp_in: Matrix<bool>,
    pub neuron: FloatNeuronParams,
    /// `None` disables learning.
    pub stdp: Option<StdpRule>,
    pub weight_scale: f64,
    pub monitored_neuron: usize,
}

/// Extra controls for a float run.
#[derive(Debug, Clone, Default)]
pub struct FloatRunOptions {
    /// `(timestamp, neuron)` pairs that must spike, sorted by time.
    pub forced: Vec<(u32, usize)>,
    /// Only forced spikes happen; threshold crossings just reset the membrane.
    pub suppress_unforced: bool,
    /// Snapshot the weights every this many steps.
    pub record_weights_every: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FloatTrace {
    pub raster: Vec<Spike>,
    pub membrane: Vec<f64>,
    /// `(timestamp, w_aa, w_in)` snapshots.
    pub weight_history: Vec<(u32, Matrix<f64>, Matrix<f64>)>,
}

impl FloatTrace {
    pub fn spike_counts(&self, n: usize) -> Vec<u32> {
        let mut counts = vec![0u32; n];
        for s in &self.raster {
            counts[s.neuron as usize] += 1;
        }
        counts
    }
}

/// Round half away from zero, then clamp to the signed-byte range.
pub fn quantize_weight(w: f64) -> Weight8 {
    if w.is_nan() {
        return Weight8::ZERO;
    }
    Weight8(w.round().clamp(-128.0, 127.0) as i8)
}

pub fn quantize_matrix(m: &Matrix<f64>) -> Matrix<Weight8> {
    m.map(|&w| quantize_weight(w))
}

impl FloatNetwork {
    /// Exact real-valued image of a fixed-point configuration.
    pub fn from_fixed(config: &NetworkConfig, stdp: Option<StdpRule>) -> Self {
        let p = &config.neuron_params;
        FloatNetwork {
            n: config.n,
            n_in: config.n_in,
            w_aa: config.w_aa.map(|w| w.0 as f64),
            w_in: config.w_in.map(|w| w.0 as f64),
            enable_stdp_aa: config.enable_stdp_aa.clone(),
            enable_stdp_in: config.enable_stdp_in.clone(),
            neuron: FloatNeuronParams {
                v_th: p.v_th.to_f64(),
                leak: p.leak.to_f64(),
                v_reset: p.v_reset.to_f64(),
                syn_leak: p.syn_leak.to_f64(),
                refractory_steps: p.refractory_steps as u32,
                membrane_floor: p.membrane_floor,
            },
            stdp,
            weight_scale: (2.0f64).powi(config.weight_shift as i32 - 10),
            monitored_neuron: config.monitored_neuron,
        }
    }

    /// Rectangular rule with the core's integer steps and windows.
    pub fn rectangular_from(config: &NetworkConfig) -> StdpRule {
        let s = &config.stdp_params;
        StdpRule::Rectangular {
            dw_pos: s.dw_pos as f64,
            dw_neg: s.dw_neg as f64,
            t_pre: s.t_pre as u32,
            t_post: s.t_post as u32,
        }
    }

    pub fn run(&mut self, stream: &[SpikeEvent], t_end: u32) -> FloatTrace {
        self.run_with(stream, t_end, &FloatRunOptions::default())
    }

    /// Runs update steps `0..t_end` from rest. Learned weights stay in `self`.
    ///
    /// `stream` must be time-sorted with addresses below `n_in`.
    pub fn run_with(&mut self, stream: &[SpikeEvent], t_end: u32, opts: &FloatRunOptions) -> FloatTrace {
        let n = self.n;
        let np = self.neuron;
        let mut v = vec![np.v_reset; n];
        let mut cur = vec![0.0f64; n];
        let mut refr = vec![0u32; n];
        let mut prev_fired: Vec<usize> = Vec::new();

        let mut last_spike: Vec<Option<i64>> = vec![None; n];
        let mut last_input: Vec<Option<i64>> = vec![None; self.n_in];
        let mut paired_aa = Matrix::filled(n, n, false);
        let mut paired_in = Matrix::filled(n, self.n_in, false);

        let mut trace = FloatTrace::default();
        let mut head = 0usize;
        let mut forced_head = 0usize;
        let mut channels: Vec<usize> = Vec::new();

        for t in 0..t_end {
            let now = t as i64;
            channels.clear();
            let start = head;
            while head < stream.len() && stream[head].time == t {
                head += 1;
            }
            let events = &stream[start..head];

            if let Some(rule) = self.stdp {
                for e in events {
                    let c = e.address as usize;
                    if channels.contains(&c) {
                        continue;
                    }
                    channels.push(c);
                    for k in 0..n {
                        if let Some(tk) = last_spike[k] {
                            if self.enable_stdp_in[(k, c)] {
                                self.w_in[(k, c)] -= rule.depression(now - tk);
                            }
                        }
                        paired_in[(k, c)] = false;
                    }
                    last_input[c] = Some(now);
                }
            }

            let mut drive = vec![0.0f64; n];
            for (k, d) in drive.iter_mut().enumerate() {
                let mut total = 0.0;
                for e in events {
                    total += self.w_in[(k, e.address as usize)];
                }
                for &s in &prev_fired {
                    total += self.w_aa[(s, k)];
                }
                *d = total * self.weight_scale;
            }

            let stamp = t + 1;
            let mut forced_now: Vec<usize> = Vec::new();
            while forced_head < opts.forced.len() && opts.forced[forced_head].0 <= stamp {
                if opts.forced[forced_head].0 == stamp {
                    forced_now.push(opts.forced[forced_head].1);
                }
                forced_head += 1;
            }

            let mut fired = Vec::new();
            for k in 0..n {
                let decayed = if cur[k].abs() <= np.syn_leak { 0.0 } else { cur[k] - np.syn_leak * cur[k].signum() };
                let forced = forced_now.contains(&k);
                if refr[k] > 0 && !forced {
                    refr[k] -= 1;
                    v[k] = np.v_reset;
                    cur[k] = decayed;
                    continue;
                }
                if refr[k] > 0 {
                    cur[k] = decayed;
                } else {
                    cur[k] = decayed + drive[k];
                    v[k] = v[k] - np.leak + cur[k];
                    if np.membrane_floor && v[k] < np.v_reset {
                        v[k] = np.v_reset;
                    }
                }
                let natural = v[k] > np.v_th;
                if forced || (natural && !opts.suppress_unforced) {
                    fired.push(k);
                    v[k] = np.v_reset;
                    refr[k] = np.refractory_steps;
                } else if natural {
                    v[k] = np.v_reset;
                }
            }

            if let Some(rule) = self.stdp {
                let stamp = stamp as i64;
                for &post in &fired {
                    for pre in 0..n {
                        let Some(tj) = last_spike[pre] else { continue };
                        let dw = rule.potentiation(stamp - tj);
                        if dw != 0.0 && !(rule.consumes_pairs() && paired_aa[(pre, post)]) {
                            if self.enable_stdp_aa[(pre, post)] {
                                self.w_aa[(pre, post)] += dw;
                            }
                            paired_aa[(pre, post)] = true;
                        }
                    }
                    for c in 0..self.n_in {
                        let Some(tc) = last_input[c] else { continue };
                        let dw = rule.potentiation(stamp - tc);
                        if dw != 0.0 && !(rule.consumes_pairs() && paired_in[(post, c)]) {
                            if self.enable_stdp_in[(post, c)] {
                                self.w_in[(post, c)] += dw;
                            }
                            paired_in[(post, c)] = true;
                        }
                    }
                }
                for &pre in &fired {
                    for (post, last) in last_spike.iter().enumerate() {
                        if let Some(tk) = *last {
                            if self.enable_stdp_aa[(pre, post)] {
                                self.w_aa[(pre, post)] -= rule.depression(stamp - tk);
                            }
                        }
                    }
                }
                for &k in &fired {
                    last_spike[k] = Some(stamp);
                    paired_aa.row_mut(k).fill(false);
                }
            }

            for &k in &fired {
                trace.raster.push(Spike { time: t + 1, neuron: k as u16 });
            }
            trace.membrane.push(v[self.monitored_neuron]);
            if let Some(every) = opts.record_weights_every {
                if every > 0 && (t + 1) % every == 0 {
                    trace.weight_history.push((t + 1, self.w_aa.clone(), self.w_in.clone()));
                }
            }
            prev_fired = fired;
        }
        trace
    }

    pub fn quantized_weights(&self) -> (Matrix<Weight8>, Matrix<Weight8>) {
        (quantize_matrix(&self.w_aa), quantize_matrix(&self.w_in))
    }
}
