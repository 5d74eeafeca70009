//! 8x8 handwritten digits: rate encoding, teacher-forced one-shot training on
//! the float model, and fixed-point inference with learning off.

use super::{read_file, DataError};
use crate::dynamics::NeuronParams;
use crate::fixed::{Weight8, Q710};
use crate::matrix::Matrix;
use crate::network::{Network, NetworkConfig, SpikeEvent};
use crate::oracle::{quantize_matrix, FloatNetwork, FloatRunOptions, StdpRule};
use crate::plasticity::StdpParams;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::Path;

pub const PIXELS: usize = 64;
pub const CLASSES: usize = 10;
pub const MAX_LEVEL: u8 = 15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitsSample {
    /// Row-major 8x8 grey levels.
    pub pixels: [u8; PIXELS],
    pub label: u8,
}

impl DigitsSample {
    pub fn new(pixels: [u8; PIXELS], label: u8) -> Result<Self, String> {
        if let Some((i, p)) = pixels.iter().enumerate().find(|(_, &p)| p > MAX_LEVEL) {
            return Err(format!("pixel {i} = {p} outside 0..={MAX_LEVEL}"));
        }
        if label as usize >= CLASSES {
            return Err(format!("label {label} outside 0..=9"));
        }
        Ok(DigitsSample { pixels, label })
    }
}

/// Parses CSV rows of 64 pixel values followed by the label. A first line
/// that does not parse as numbers is taken as a header. Rows are numbered
/// from 1, counting the header.
pub fn parse_digits(text: &str) -> Result<Vec<DigitsSample>, DataError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if i == 0 && fields.iter().any(|f| f.parse::<i64>().is_err()) {
            continue;
        }
        if fields.len() != PIXELS + 1 {
            return Err(DataError::Row { row, message: format!("{} fields, expected {}", fields.len(), PIXELS + 1) });
        }
        let mut values = [0i64; PIXELS + 1];
        for (slot, f) in values.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| DataError::Row { row, message: format!("{f:?} is not an integer") })?;
        }
        let mut pixels = [0u8; PIXELS];
        for (i, (&v, p)) in values.iter().zip(pixels.iter_mut()).enumerate() {
            if !(0..=MAX_LEVEL as i64).contains(&v) {
                return Err(DataError::Row { row, message: format!("pixel {i} = {v} outside 0..={MAX_LEVEL}") });
            }
            *p = v as u8;
        }
        let label = values[PIXELS];
        if !(0..CLASSES as i64).contains(&label) {
            return Err(DataError::Row { row, message: format!("label {label} outside 0..=9") });
        }
        out.push(DigitsSample { pixels, label: label as u8 });
    }
    if out.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(out)
}

pub fn load_digits(path: &Path) -> Result<Vec<DigitsSample>, DataError> {
    parse_digits(&read_file(path)?)
}

/// Level `v` on channel `c` becomes `spikes_per_level * v` spikes at
/// `floor(i * window / count)`; the stream is sorted by time, then channel.
pub fn rate_encode(sample: &DigitsSample, window: u32, spikes_per_level: u32) -> Vec<SpikeEvent> {
    let mut out = Vec::new();
    for (c, &v) in sample.pixels.iter().enumerate() {
        let count = spikes_per_level as u64 * v as u64;
        for i in 0..count {
            out.push(SpikeEvent::new((i * window as u64 / count) as u32, c as u16));
        }
    }
    out.sort_unstable();
    out
}

/// Seeded shuffle of `0..n`, split into `round(train_fraction * n)` training
/// indices and the rest.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((train_fraction * n as f64).round() as usize).min(n);
    let test = idx.split_off(n_train);
    (idx, test)
}

/// How the label neuron is driven during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TeacherMode {
    /// A label spike at `t + 1` for every step `t` that carries input.
    #[default]
    EveryInputStep,
    /// One label spike, one step after the sample's last input.
    SingleSpike,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitsParams {
    pub seed: u64,
    pub train_fraction: f64,
    pub window: u32,
    pub spikes_per_level: u32,
    pub teacher: TeacherMode,
    /// Float training rule (weight units per pairing).
    pub train_dw_pos: f64,
    pub train_dw_neg: f64,
    pub train_t_pre: u32,
    pub train_t_post: u32,
    /// Inference core settings.
    pub weight_shift: u8,
    pub neuron: NeuronParams,
    pub t_end: u32,
}

impl Default for DigitsParams {
    fn default() -> Self {
        DigitsParams {
            seed: 0,
            train_fraction: 0.7,
            window: 32,
            spikes_per_level: 2,
            teacher: TeacherMode::EveryInputStep,
            train_dw_pos: 0.025,
            train_dw_neg: 0.005,
            train_t_pre: 2,
            train_t_post: 2,
            weight_shift: 4,
            neuron: NeuronParams {
                v_th: Q710::from_f64(16.0),
                leak: Q710::ONE,
                refractory_steps: 0,
                v_reset: Q710::ZERO,
                syn_leak: Q710::MAX,
                membrane_floor: true,
            },
            t_end: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedDigits {
    pub w_in_float: Matrix<f64>,
    /// `w_in[(class, pixel)]`, quantized.
    pub w_in: Matrix<Weight8>,
}

/// Presents each training sample once to a 64 -> 10 float network with the
/// label neuron teacher-forced and every other output held silent, then
/// quantizes the learned weights.
pub fn train_digits_one_shot(samples: &[DigitsSample], train: &[usize], params: &DigitsParams) -> TrainedDigits {
    let mut net = FloatNetwork::from_fixed(&inference_config(&Matrix::filled(CLASSES, PIXELS, Weight8::ZERO), params), None);
    net.enable_stdp_in = Matrix::filled(CLASSES, PIXELS, true);
    net.stdp = Some(StdpRule::Rectangular {
        dw_pos: params.train_dw_pos,
        dw_neg: params.train_dw_neg,
        t_pre: params.train_t_pre,
        t_post: params.train_t_post,
    });
    for &i in train {
        let sample = &samples[i];
        let stream = rate_encode(sample, params.window, params.spikes_per_level);
        let label = sample.label as usize;
        let mut times: Vec<u32> = stream.iter().map(|e| e.time).collect();
        times.dedup();
        let forced = match params.teacher {
            TeacherMode::EveryInputStep => times.iter().map(|&t| (t + 1, label)).collect(),
            TeacherMode::SingleSpike => times.last().map(|&t| vec![(t + 1, label)]).unwrap_or_default(),
        };
        let opts = FloatRunOptions { forced, suppress_unforced: true, record_weights_every: None };
        net.run_with(&stream, params.window, &opts);
    }
    TrainedDigits { w_in: quantize_matrix(&net.w_in), w_in_float: net.w_in }
}

/// 10 output neurons fed by 64 input channels, no recurrence, learning off.
pub fn inference_config(w_in: &Matrix<Weight8>, params: &DigitsParams) -> NetworkConfig {
    let mut cfg = NetworkConfig::new(CLASSES, PIXELS);
    cfg.w_in = w_in.clone();
    cfg.weight_shift = params.weight_shift;
    cfg.neuron_params = params.neuron;
    cfg.stdp_params = StdpParams { enabled: false, ..StdpParams::default() };
    cfg
}

/// Index of the largest count; ties go to the lowest index.
pub fn predict(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitsEval {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    /// `confusion[label][predicted]`.
    pub confusion: [[u32; CLASSES]; CLASSES],
}

impl DigitsEval {
    fn from_predictions(samples: &[DigitsSample], test: &[usize], predictions: Vec<usize>) -> Self {
        let mut confusion = [[0u32; CLASSES]; CLASSES];
        for (&i, &p) in test.iter().zip(&predictions) {
            confusion[samples[i].label as usize][p] += 1;
        }
        let correct: u32 = (0..CLASSES).map(|k| confusion[k][k]).sum();
        let accuracy = if test.is_empty() { 0.0 } else { correct as f64 / test.len() as f64 };
        DigitsEval { accuracy, predictions, confusion }
    }

    pub fn per_class(&self) -> Vec<(u32, u32)> {
        (0..CLASSES).map(|k| (self.confusion[k][k], self.confusion[k].iter().sum())).collect()
    }
}

/// Streams each test sample through the fixed-point core.
pub fn eval_digits(w_in: &Matrix<Weight8>, samples: &[DigitsSample], test: &[usize], params: &DigitsParams) -> DigitsEval {
    let cfg = inference_config(w_in, params);
    let template = Network::new(cfg).expect("inference configuration is valid");
    let predictions = test
        .par_iter()
        .map(|&i| {
            let stream = rate_encode(&samples[i], params.window, params.spikes_per_level);
            let trace = template.clone().run(&stream, params.t_end).expect("encoded stream is valid");
            predict(&trace.spike_counts(CLASSES))
        })
        .collect();
    DigitsEval::from_predictions(samples, test, predictions)
}

/// Same readout on the float model with identical quantized weights.
pub fn eval_digits_float(w_in: &Matrix<Weight8>, samples: &[DigitsSample], test: &[usize], params: &DigitsParams) -> DigitsEval {
    let template = FloatNetwork::from_fixed(&inference_config(w_in, params), None);
    let predictions = test
        .par_iter()
        .map(|&i| {
            let stream = rate_encode(&samples[i], params.window, params.spikes_per_level);
            let trace = template.clone().run(&stream, params.t_end);
            predict(&trace.spike_counts(CLASSES))
        })
        .collect();
    DigitsEval::from_predictions(samples, test, predictions)
}
