//! Straight-line re-implementation of the core's semantics for equivalence
//! testing.
//!
//! Nothing here calls into the engine: arithmetic is done on plain `i64`
//! with explicit clamping, and STDP pairing is tracked with last-spike
//! timestamps plus a "used" flag per synapse instead of 8-bit age counters.

use crate::fixed::Weight8;
use crate::matrix::Matrix;
use crate::network::{NetworkConfig, NetworkError, RunTrace, Spike, SpikeEvent, WeightSnapshot};
use crate::fixed::Q710;

const RAW_LO: i64 = -(1 << 17);
const RAW_HI: i64 = (1 << 17) - 1;

fn sat18(x: i64) -> i64 {
    x.clamp(RAW_LO, RAW_HI)
}

fn sat8(x: i64) -> i64 {
    x.clamp(-128, 127)
}

fn grid<T: Copy>(m: &Matrix<T>, f: impl Fn(T) -> i64) -> Vec<Vec<i64>> {
    (0..m.rows()).map(|r| (0..m.cols()).map(|c| f(m[(r, c)])).collect()).collect()
}

fn to_matrix(g: &[Vec<i64>], cols: usize) -> Matrix<Weight8> {
    Matrix::from_fn(g.len(), cols, |r, c| Weight8(g[r][c] as i8))
}

/// Runs `config` on `stream` for `t_end` update steps. Same contract as
/// [`crate::network::Network::run`] on a freshly loaded network.
///
/// `config` is assumed valid.
pub fn oracle_run(config: &NetworkConfig, stream: &[SpikeEvent], t_end: u32) -> Result<RunTrace, NetworkError> {
    let n = config.n;
    let n_in = config.n_in;
    for i in 1..stream.len() {
        if stream[i].time < stream[i - 1].time {
            return Err(NetworkError::Unsorted { index: i });
        }
    }
    for e in stream {
        if e.address as usize >= n_in {
            return Err(NetworkError::Address { address: e.address, n_in });
        }
    }

    let p = &config.neuron_params;
    let v_th = p.v_th.raw() as i64;
    let v_reset = p.v_reset.raw() as i64;
    let leak = p.leak.raw() as i64;
    let syn_leak = p.syn_leak.raw() as i64;
    let refractory = p.refractory_steps as i64;
    let floor = p.membrane_floor;
    let scale = 1i64 << config.weight_shift.min(10);

    let sp = &config.stdp_params;
    let learning = sp.enabled;
    let dw_pos = sp.dw_pos as i64;
    let dw_neg = sp.dw_neg as i64;
    let t_pre = sp.t_pre as i64;
    let t_post = sp.t_post as i64;

    let mut w_aa = grid(&config.w_aa, |w| w.0 as i64);
    let mut w_in = grid(&config.w_in, |w| w.0 as i64);
    let plastic_aa = grid(&config.enable_stdp_aa, |b| b as i64);
    let plastic_in = grid(&config.enable_stdp_in, |b| b as i64);

    let mut v = vec![v_reset; n];
    let mut cur = vec![0i64; n];
    let mut refr = vec![0i64; n];
    let mut fired_prev: Vec<usize> = Vec::new();

    // STDP bookkeeping by timestamp.
    let mut last_spike: Vec<Option<i64>> = vec![None; n];
    let mut used_aa = vec![vec![false; n]; n];
    let mut last_input: Vec<Option<i64>> = vec![None; n_in];
    let mut used_in = vec![vec![false; n_in]; n];

    let mut trace = RunTrace::default();
    let mut cursor = 0usize;

    for t in 0..t_end {
        let now = t as i64;
        let mut events = Vec::new();
        while cursor < stream.len() && stream[cursor].time == t {
            events.push(stream[cursor].address as usize);
            cursor += 1;
        }
        // Events before the clock are impossible for a sorted stream starting at 0.

        if learning {
            let mut done: Vec<usize> = Vec::new();
            for &c in &events {
                if done.contains(&c) {
                    continue;
                }
                done.push(c);
                for k in 0..n {
                    if let Some(tk) = last_spike[k] {
                        let gap = now - tk;
                        if gap > 0 && gap < t_post && plastic_in[k][c] == 1 {
                            w_in[k][c] = sat8(w_in[k][c] - dw_neg);
                        }
                    }
                }
                last_input[c] = Some(now);
                for row in used_in.iter_mut() {
                    row[c] = false;
                }
            }
        }

        let mut drive = vec![0i64; n];
        for k in 0..n {
            let mut total = 0i64;
            for &c in &events {
                total += w_in[k][c] * scale;
            }
            for &s in &fired_prev {
                total += w_aa[s][k] * scale;
            }
            drive[k] = sat18(total);
        }

        let mut fired = Vec::new();
        for k in 0..n {
            let decayed = if cur[k].abs() <= syn_leak {
                0
            } else if cur[k] > 0 {
                cur[k] - syn_leak
            } else {
                cur[k] + syn_leak
            };
            if refr[k] > 0 {
                refr[k] -= 1;
                v[k] = v_reset;
                cur[k] = decayed;
                continue;
            }
            cur[k] = sat18(decayed + drive[k]);
            let mut vk = sat18(sat18(v[k] - leak) + cur[k]);
            if floor && vk < v_reset {
                vk = v_reset;
            }
            if vk > v_th {
                fired.push(k);
                v[k] = v_reset;
                refr[k] = refractory;
            } else {
                v[k] = vk;
            }
        }

        let stamp = now + 1;
        if learning {
            for &post in &fired {
                for pre in 0..n {
                    if let Some(tj) = last_spike[pre] {
                        let gap = stamp - tj;
                        if !used_aa[pre][post] && gap > 0 && gap < t_pre {
                            if plastic_aa[pre][post] == 1 {
                                w_aa[pre][post] = sat8(w_aa[pre][post] + dw_pos);
                            }
                            used_aa[pre][post] = true;
                        }
                    }
                }
                for c in 0..n_in {
                    if let Some(tc) = last_input[c] {
                        let gap = stamp - tc;
                        if !used_in[post][c] && gap > 0 && gap < t_pre {
                            if plastic_in[post][c] == 1 {
                                w_in[post][c] = sat8(w_in[post][c] + dw_pos);
                            }
                            used_in[post][c] = true;
                        }
                    }
                }
            }
            for &pre in &fired {
                for post in 0..n {
                    if let Some(tk) = last_spike[post] {
                        let gap = stamp - tk;
                        if gap > 0 && gap < t_post && plastic_aa[pre][post] == 1 {
                            w_aa[pre][post] = sat8(w_aa[pre][post] - dw_neg);
                        }
                    }
                }
            }
            for &k in &fired {
                last_spike[k] = Some(stamp);
                for used in used_aa[k].iter_mut() {
                    *used = false;
                }
            }
        }

        for &k in &fired {
            trace.raster.push(Spike { time: stamp as u32, neuron: k as u16 });
        }
        trace.membrane.push(Q710::from_raw(v[config.monitored_neuron] as i32).expect("clamped"));
        fired_prev = fired;
    }

    trace.final_weights = Some(WeightSnapshot { w_aa: to_matrix(&w_aa, n), w_in: to_matrix(&w_in, n_in) });
    Ok(trace)
}
