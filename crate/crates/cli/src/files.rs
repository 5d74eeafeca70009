//! On-disk formats: network config and run manifest (TOML), matrices (CSV or
//! raw bytes), spike streams (CSV or wire words) and run outputs (CSV).

use anyhow::{bail, ensure, Context, Result};
use serde::Deserialize;
use spikecore::protocol::{decode_spikes, encode_spikes};
use spikecore::{Matrix, NetworkConfig, NeuronParams, RunTrace, SpikeEvent, StdpParams, Weight8, Q710};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const FORMAT: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NeuronSection {
    v_th: f64,
    #[serde(default)]
    leak: f64,
    #[serde(default)]
    v_reset: f64,
    #[serde(default)]
    syn_leak: f64,
    #[serde(default)]
    refractory: u16,
    #[serde(default = "yes")]
    membrane_floor: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StdpSection {
    #[serde(default)]
    enabled: bool,
    dw_pos: u8,
    dw_neg: u8,
    t_pre: u8,
    t_post: u8,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    format: u32,
    n: usize,
    n_in: usize,
    #[serde(default = "default_shift")]
    weight_shift: u8,
    #[serde(default)]
    monitor: usize,
    n_max: Option<usize>,
    w_aa: Option<PathBuf>,
    w_in: Option<PathBuf>,
    mask_aa: Option<PathBuf>,
    mask_in: Option<PathBuf>,
    neuron: NeuronSection,
    stdp: Option<StdpSection>,
}

fn default_shift() -> u8 {
    spikecore::fixed::DEFAULT_WEIGHT_SHIFT
}

fn check_format(format: u32, path: &Path) -> Result<()> {
    ensure!(format == FORMAT, "{}: unsupported format {format}, expected {FORMAT}", path.display());
    Ok(())
}

fn q(value: f64, name: &str) -> Result<Q710> {
    ensure!(value.is_finite(), "{name} must be finite");
    let raw = (value * 1024.0).round();
    ensure!(
        (Q710::RAW_MIN as f64..=Q710::RAW_MAX as f64).contains(&raw),
        "{name} = {value} is outside the representable range"
    );
    Ok(Q710::from_f64(value))
}

/// Loads a network description. Matrix paths are relative to the file.
pub fn load_config(path: &Path) -> Result<NetworkConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ConfigFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    check_format(file.format, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let (n, n_in) = (file.n, file.n_in);
    let mut cfg = NetworkConfig::new(n, n_in);
    if let Some(p) = &file.w_aa {
        cfg.w_aa = read_weights(&base.join(p), n, n)?;
    }
    if let Some(p) = &file.w_in {
        cfg.w_in = read_weights(&base.join(p), n, n_in)?;
    }
    if let Some(p) = &file.mask_aa {
        cfg.enable_stdp_aa = read_mask(&base.join(p), n, n)?;
    }
    if let Some(p) = &file.mask_in {
        cfg.enable_stdp_in = read_mask(&base.join(p), n, n_in)?;
    }
    let nrn = &file.neuron;
    cfg.neuron_params = NeuronParams {
        v_th: q(nrn.v_th, "v_th")?,
        leak: q(nrn.leak, "leak")?,
        refractory_steps: nrn.refractory,
        v_reset: q(nrn.v_reset, "v_reset")?,
        syn_leak: q(nrn.syn_leak, "syn_leak")?,
        membrane_floor: nrn.membrane_floor,
    };
    if let Some(s) = &file.stdp {
        cfg.stdp_params = StdpParams { dw_pos: s.dw_pos, dw_neg: s.dw_neg, t_pre: s.t_pre, t_post: s.t_post, enabled: s.enabled };
    }
    cfg.weight_shift = file.weight_shift;
    cfg.monitored_neuron = file.monitor;
    if let Some(n_max) = file.n_max {
        cfg.n_max = n_max;
    }
    cfg.validate().with_context(|| format!("{}", path.display()))?;
    Ok(cfg)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    format: u32,
    config: PathBuf,
    input: Option<PathBuf>,
    t_end: u32,
    output: PathBuf,
    #[serde(default)]
    seed: u64,
    stdp: Option<bool>,
    monitor: Option<usize>,
}

/// A resolved run manifest.
#[derive(Debug)]
pub struct RunManifest {
    pub config: NetworkConfig,
    pub stream: Vec<SpikeEvent>,
    pub t_end: u32,
    pub output: PathBuf,
    pub seed: u64,
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ManifestFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    check_format(file.format, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut config = load_config(&base.join(&file.config))?;
    if let Some(on) = file.stdp {
        config.stdp_params.enabled = on;
    }
    if let Some(m) = file.monitor {
        config.monitored_neuron = m;
    }
    config.validate().with_context(|| format!("{}", path.display()))?;
    let stream = match &file.input {
        Some(p) => read_spikes(&base.join(p))?,
        None => Vec::new(),
    };
    Ok(RunManifest { config, stream, t_end: file.t_end, output: base.join(file.output), seed: file.seed })
}

fn is_bin(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("bin"))
}

fn read_int_grid(path: &Path, rows: usize, cols: usize) -> Result<Vec<i64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split(',')
            .map(|f| f.trim().parse::<i64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{} line {}: not a list of integers", path.display(), i + 1))?;
        ensure!(vals.len() == cols, "{} line {}: {} columns, expected {cols}", path.display(), i + 1, vals.len());
        out.extend(vals);
        seen_rows += 1;
    }
    ensure!(seen_rows == rows, "{}: {seen_rows} rows, expected {rows}", path.display());
    Ok(out)
}

/// Signed weights from a CSV grid or raw signed bytes (`.bin`), row-major.
pub fn read_weights(path: &Path, rows: usize, cols: usize) -> Result<Matrix<Weight8>> {
    let data: Vec<Weight8> = if is_bin(path) {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        ensure!(bytes.len() == rows * cols, "{}: {} bytes, expected {}", path.display(), bytes.len(), rows * cols);
        bytes.into_iter().map(|b| Weight8(b as i8)).collect()
    } else {
        read_int_grid(path, rows, cols)?
            .into_iter()
            .map(|v| {
                ensure!((-128..=127).contains(&v), "{}: weight {v} outside -128..=127", path.display());
                Ok(Weight8(v as i8))
            })
            .collect::<Result<_>>()?
    };
    Ok(Matrix::from_vec(rows, cols, data).expect("length checked"))
}

/// 0/1 entries from a CSV grid or one byte per entry (`.bin`).
pub fn read_mask(path: &Path, rows: usize, cols: usize) -> Result<Matrix<bool>> {
    let values: Vec<i64> = if is_bin(path) {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        ensure!(bytes.len() == rows * cols, "{}: {} bytes, expected {}", path.display(), bytes.len(), rows * cols);
        bytes.into_iter().map(i64::from).collect()
    } else {
        read_int_grid(path, rows, cols)?
    };
    let data = values
        .into_iter()
        .map(|v| match v {
            0 => Ok(false),
            1 => Ok(true),
            _ => bail!("{}: mask entry {v} is not 0 or 1", path.display()),
        })
        .collect::<Result<_>>()?;
    Ok(Matrix::from_vec(rows, cols, data).expect("length checked"))
}

pub fn weights_grid_csv(m: &Matrix<Weight8>) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|w| w.0.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// `t,address` CSV (header optional) or wire-format words (`.bin`).
pub fn read_spikes(path: &Path) -> Result<Vec<SpikeEvent>> {
    if is_bin(path) {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        return decode_spikes(&bytes).map_err(|e| crate::protocol_error(anyhow::anyhow!("{}: {e}", path.display())));
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_spike_csv(&text).with_context(|| format!("{}", path.display()))
}

pub fn parse_spike_csv(text: &str) -> Result<Vec<SpikeEvent>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.eq_ignore_ascii_case("t,address")) {
            continue;
        }
        let (t, a) = line.split_once(',').with_context(|| format!("line {}: expected `t,address`", i + 1))?;
        let time: u32 = t.trim().parse().with_context(|| format!("line {}: bad time {t:?}", i + 1))?;
        let address: u16 = a.trim().parse().with_context(|| format!("line {}: bad address {a:?}", i + 1))?;
        ensure!(address != u16::MAX, "line {}: address 65535 is reserved", i + 1);
        if let Some(prev) = out.last().map(|e: &SpikeEvent| e.time) {
            ensure!(time >= prev, "line {}: time {time} goes backwards", i + 1);
        }
        out.push(SpikeEvent::new(time, address));
    }
    Ok(out)
}

pub fn spikes_csv(events: &[SpikeEvent]) -> String {
    let mut out = String::from("t,address\n");
    for e in events {
        writeln!(out, "{},{}", e.time, e.address).unwrap();
    }
    out
}

pub fn write_spikes(path: &Path, events: &[SpikeEvent]) -> Result<()> {
    if is_bin(path) {
        let bytes = encode_spikes(events).map_err(|e| crate::protocol_error(anyhow::anyhow!("{e}")))?;
        write(path, &bytes)
    } else {
        write(path, spikes_csv(events).as_bytes())
    }
}

pub fn raster_csv(trace: &RunTrace) -> String {
    let mut out = String::from("t,neuron\n");
    for s in &trace.raster {
        writeln!(out, "{},{}", s.time, s.neuron).unwrap();
    }
    out
}

/// Row `i` is the membrane at time `i + 1`.
pub fn membrane_csv(trace: &RunTrace) -> String {
    let mut out = String::from("t,raw,real\n");
    for (i, v) in trace.membrane.iter().enumerate() {
        writeln!(out, "{},{},{}", i + 1, v.raw(), v.to_f64()).unwrap();
    }
    out
}

pub fn weights_long_csv(w_aa: &Matrix<Weight8>, w_in: &Matrix<Weight8>) -> String {
    let mut out = String::from("matrix,row,col,weight\n");
    for (name, m) in [("w_aa", w_aa), ("w_in", w_in)] {
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                writeln!(out, "{name},{r},{c},{}", m[(r, c)].0).unwrap();
            }
        }
    }
    out
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
