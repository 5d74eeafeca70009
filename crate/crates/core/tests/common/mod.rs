//! Random network cases shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use spikecore::{Matrix, NetworkConfig, SpikeEvent, StdpParams, Weight8, Q710};

pub fn q(raw: i32) -> Q710 {
    Q710::from_raw(raw).unwrap()
}

/// A random but lively configuration: weights, leaks and thresholds are drawn
/// so that a good fraction of neurons fire and learning has something to do.
pub fn random_config<R: Rng>(rng: &mut R, n_max: usize, n_in_max: usize, stdp: bool) -> NetworkConfig {
    let n = rng.gen_range(1..=n_max);
    let n_in = rng.gen_range(1..=n_in_max);
    let mut cfg = NetworkConfig::new(n, n_in);
    let shift = rng.gen_range(4..=10u8);
    cfg.weight_shift = shift;
    let density = rng.gen_range(0.2..0.9);
    let weight = |rng: &mut R| {
        if rng.gen_bool(density) {
            Weight8(rng.gen_range(-128i32..=127) as i8)
        } else {
            Weight8::ZERO
        }
    };
    cfg.w_aa = Matrix::from_fn(n, n, |_, _| Weight8::ZERO);
    for r in 0..n {
        for c in 0..n {
            cfg.w_aa[(r, c)] = weight(rng);
        }
        for c in 0..n_in {
            cfg.w_in[(r, c)] = weight(rng);
        }
    }
    let scale = 1i32 << shift;
    let p = &mut cfg.neuron_params;
    p.v_reset = q(rng.gen_range(-4 * 1024..=1024));
    p.v_th = q(p.v_reset.raw() + rng.gen_range(1..=60 * scale.max(16)).min(100_000));
    p.leak = q(rng.gen_range(0..=scale * 4));
    p.syn_leak = if rng.gen_bool(0.2) { Q710::MAX } else { q(rng.gen_range(0..=scale * 40)) };
    p.refractory_steps = rng.gen_range(0..=6);
    p.membrane_floor = rng.gen_bool(0.5);
    let plastic = rng.gen_range(0.0..=1.0);
    cfg.enable_stdp_aa = Matrix::from_fn(n, n, |_, _| rng.gen_bool(plastic));
    cfg.enable_stdp_in = Matrix::from_fn(n, n_in, |_, _| rng.gen_bool(plastic));
    cfg.stdp_params = StdpParams {
        dw_pos: rng.gen_range(1..=40),
        dw_neg: rng.gen_range(1..=40),
        t_pre: rng.gen_range(1..=30),
        t_post: rng.gen_range(1..=30),
        enabled: stdp,
    };
    cfg.monitored_neuron = rng.gen_range(0..n);
    cfg
}

/// Time-sorted input with a random per-step rate; may contain duplicates.
pub fn random_stream<R: Rng>(rng: &mut R, n_in: usize, t_end: u32) -> Vec<SpikeEvent> {
    let rate = rng.gen_range(0.0..0.5);
    let mut out = Vec::new();
    for t in 0..t_end + 5 {
        for c in 0..n_in {
            if rng.gen_bool(rate / n_in as f64 * 3.0_f64.min(n_in as f64)) {
                out.push(SpikeEvent::new(t, c as u16));
            }
        }
        if rng.gen_bool(0.02) {
            out.push(SpikeEvent::new(t, rng.gen_range(0..n_in) as u16));
        }
    }
    out.sort();
    out
}
