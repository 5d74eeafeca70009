//! Frame layer of the host link and the payload layouts carried inside it.
//!
//! ```text
//! +--------+-----------------+-------------------+
//! | opcode | length (u32 LE) | payload (length)  |
//! +--------+-----------------+-------------------+
//! ```
//!
//! Multi-byte integers inside payloads are little-endian. Q7.10 values travel
//! as sign-extended 32-bit integers holding the raw 18-bit value.

use crate::dynamics::NeuronParams;
use crate::fixed::{Weight8, Q710};
use crate::matrix::Matrix;
use crate::network::Spike;
use crate::plasticity::StdpParams;
use std::io::{self, Read, Write};
use thiserror::Error;

pub const HEADER_LEN: usize = 5;

/// Payloads above this size are refused before any allocation.
pub const MAX_PAYLOAD: u32 = 1 << 24;

/// Host-to-device and device-to-host opcodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Opcode {
    LoadWaa = 0x01,
    LoadWin = 0x02,
    NeuronParams = 0x03,
    StdpParams = 0x04,
    LoadMaskAa = 0x05,
    LoadMaskIn = 0x06,
    Spikes = 0x07,
    Run = 0x08,
    ReadWeights = 0x09,
    SetMonitor = 0x0A,
    // Device to host.
    Raster = 0x0B,
    Membrane = 0x0C,
    Weights = 0x0D,
    Error = 0x0E,
    Ack = 0x0F,
    RunDone = 0x10,
    // Host to device: network dimensions and arithmetic options.
    Configure = 0x20,
}

impl Opcode {
    pub fn from_u8(b: u8) -> Option<Self> {
        use Opcode::*;
        Some(match b {
            0x01 => LoadWaa,
            0x02 => LoadWin,
            0x03 => NeuronParams,
            0x04 => StdpParams,
            0x05 => LoadMaskAa,
            0x06 => LoadMaskIn,
            0x07 => Spikes,
            0x08 => Run,
            0x09 => ReadWeights,
            0x0A => SetMonitor,
            0x0B => Raster,
            0x0C => Membrane,
            0x0D => Weights,
            0x0E => Error,
            0x0F => Ack,
            0x10 => RunDone,
            0x20 => Configure,
            _ => return None,
        })
    }
}

/// Error codes carried in [`Opcode::Error`] frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ErrorCode {
    UnknownOpcode = 0x01,
    Length = 0x02,
    OutOfRange = 0x03,
    NotConfigured = 0x04,
    SpikeStream = 0x05,
    FrameTooLarge = 0x06,
    Truncated = 0x07,
}

impl ErrorCode {
    pub fn from_u8(b: u8) -> Option<Self> {
        use ErrorCode::*;
        Some(match b {
            0x01 => UnknownOpcode,
            0x02 => Length,
            0x03 => OutOfRange,
            0x04 => NotConfigured,
            0x05 => SpikeStream,
            0x06 => FrameTooLarge,
            0x07 => Truncated,
            _ => return None,
        })
    }
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame header truncated ({0} of 5 bytes)")]
    TruncatedHeader(usize),
    #[error("frame payload truncated ({got} of {declared} bytes)")]
    TruncatedPayload { declared: u32, got: usize },
    #[error("declared payload length {0} exceeds the 16 MiB limit")]
    TooLarge(u32),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Payload-level decoding failure, mapped onto an [`ErrorCode`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PayloadError {
    #[error("payload is {got} bytes, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("{0}")]
    OutOfRange(String),
}

impl PayloadError {
    pub fn code(&self) -> ErrorCode {
        match self {
            PayloadError::Length { .. } => ErrorCode::Length,
            PayloadError::OutOfRange(_) => ErrorCode::OutOfRange,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub opcode: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(opcode: Opcode, payload: Vec<u8>) -> Self {
        Frame { opcode: opcode as u8, payload }
    }

    pub fn kind(&self) -> Option<Opcode> {
        Opcode::from_u8(self.opcode)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        frame(self.opcode, &self.payload)
    }

    pub fn error(code: ErrorCode, offending: u8, message: &str) -> Self {
        let mut payload = vec![code as u8, offending];
        payload.extend_from_slice(message.as_bytes());
        Frame::new(Opcode::Error, payload)
    }

    pub fn ack(opcode: u8) -> Self {
        Frame::new(Opcode::Ack, vec![opcode])
    }
}

/// Serializes one frame.
pub fn frame(opcode: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.push(opcode);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Parses one frame from the front of `bytes`, returning it and the number of
/// bytes consumed.
pub fn unframe(bytes: &[u8]) -> Result<(Frame, usize), FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::TruncatedHeader(bytes.len()));
    }
    let declared = u32::from_le_bytes([bytes[1], bytes[2], bytes[3], bytes[4]]);
    if declared > MAX_PAYLOAD {
        return Err(FrameError::TooLarge(declared));
    }
    let end = HEADER_LEN + declared as usize;
    if bytes.len() < end {
        return Err(FrameError::TruncatedPayload { declared, got: bytes.len() - HEADER_LEN });
    }
    Ok((Frame { opcode: bytes[0], payload: bytes[HEADER_LEN..end].to_vec() }, end))
}

/// Reads one frame. `Ok(None)` on a clean end of stream before any header byte.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(FrameError::TruncatedHeader(filled)),
            Ok(k) => filled += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let declared = u32::from_le_bytes([header[1], header[2], header[3], header[4]]);
    if declared > MAX_PAYLOAD {
        return Err(FrameError::TooLarge(declared));
    }
    let mut payload = Vec::new();
    let got = r.take(declared as u64).read_to_end(&mut payload)?;
    if got < declared as usize {
        return Err(FrameError::TruncatedPayload { declared, got });
    }
    Ok(Some(Frame { opcode: header[0], payload }))
}

pub fn write_frame<W: Write>(w: &mut W, f: &Frame) -> io::Result<()> {
    w.write_all(&f.to_bytes())
}

fn expect_len(p: &[u8], expected: usize) -> Result<(), PayloadError> {
    if p.len() == expected {
        Ok(())
    } else {
        Err(PayloadError::Length { got: p.len(), expected })
    }
}

fn le_u16(p: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([p[at], p[at + 1]])
}

fn le_u32(p: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([p[at], p[at + 1], p[at + 2], p[at + 3]])
}

fn le_i32(p: &[u8], at: usize) -> i32 {
    i32::from_le_bytes([p[at], p[at + 1], p[at + 2], p[at + 3]])
}

fn q_field(p: &[u8], at: usize, name: &str) -> Result<Q710, PayloadError> {
    let raw = le_i32(p, at);
    Q710::from_raw(raw).ok_or_else(|| PayloadError::OutOfRange(format!("{name} raw value {raw} does not fit 18 bits")))
}

/// Dimensions and arithmetic options sent with [`Opcode::Configure`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoreSetup {
    pub n: u16,
    pub n_in: u16,
    pub weight_shift: u8,
    pub membrane_floor: bool,
}

pub const CONFIGURE_LEN: usize = 6;

impl CoreSetup {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CONFIGURE_LEN);
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.n_in.to_le_bytes());
        out.push(self.weight_shift);
        out.push(self.membrane_floor as u8);
        out
    }

    pub fn decode(p: &[u8]) -> Result<Self, PayloadError> {
        expect_len(p, CONFIGURE_LEN)?;
        if p[5] > 1 {
            return Err(PayloadError::OutOfRange(format!("unknown configure flags {:#04x}", p[5])));
        }
        Ok(CoreSetup { n: le_u16(p, 0), n_in: le_u16(p, 2), weight_shift: p[4], membrane_floor: p[5] == 1 })
    }
}

pub const NEURON_PARAMS_LEN: usize = 18;

/// Threshold, leak, reset and synaptic leak as sign-extended raw values, then
/// the refractory period. The membrane floor travels in [`CoreSetup`].
pub fn encode_neuron_params(p: &NeuronParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(NEURON_PARAMS_LEN);
    for q in [p.v_th, p.leak, p.v_reset, p.syn_leak] {
        out.extend_from_slice(&q.raw().to_le_bytes());
    }
    out.extend_from_slice(&p.refractory_steps.to_le_bytes());
    out
}

pub fn decode_neuron_params(p: &[u8], membrane_floor: bool) -> Result<NeuronParams, PayloadError> {
    expect_len(p, NEURON_PARAMS_LEN)?;
    let params = NeuronParams {
        v_th: q_field(p, 0, "v_th")?,
        leak: q_field(p, 4, "leak")?,
        v_reset: q_field(p, 8, "v_reset")?,
        syn_leak: q_field(p, 12, "syn_leak")?,
        refractory_steps: le_u16(p, 16),
        membrane_floor,
    };
    params.validate().map_err(|e| PayloadError::OutOfRange(e.to_string()))?;
    Ok(params)
}

pub const STDP_PARAMS_LEN: usize = 5;

pub fn encode_stdp_params(p: &StdpParams) -> Vec<u8> {
    vec![p.dw_pos, p.dw_neg, p.t_pre, p.t_post, p.enabled as u8]
}

pub fn decode_stdp_params(p: &[u8]) -> Result<StdpParams, PayloadError> {
    expect_len(p, STDP_PARAMS_LEN)?;
    if p[4] > 1 {
        return Err(PayloadError::OutOfRange(format!("STDP enable byte {} is not 0 or 1", p[4])));
    }
    let params = StdpParams { dw_pos: p[0], dw_neg: p[1], t_pre: p[2], t_post: p[3], enabled: p[4] == 1 };
    params.validate().map_err(|e| PayloadError::OutOfRange(e.to_string()))?;
    Ok(params)
}

pub fn encode_weights(m: &Matrix<Weight8>) -> Vec<u8> {
    m.as_slice().iter().map(|w| w.0 as u8).collect()
}

pub fn decode_weights(p: &[u8], rows: usize, cols: usize) -> Result<Matrix<Weight8>, PayloadError> {
    expect_len(p, rows * cols)?;
    Ok(Matrix::from_vec(rows, cols, p.iter().map(|&b| Weight8(b as i8)).collect()).expect("length checked"))
}

/// Row-major bits, least significant bit first within each byte.
pub fn encode_mask(m: &Matrix<bool>) -> Vec<u8> {
    let mut out = vec![0u8; m.as_slice().len().div_ceil(8)];
    for (i, &bit) in m.as_slice().iter().enumerate() {
        if bit {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

pub fn decode_mask(p: &[u8], rows: usize, cols: usize) -> Result<Matrix<bool>, PayloadError> {
    let bits = rows * cols;
    expect_len(p, bits.div_ceil(8))?;
    if !bits.is_multiple_of(8) && p[p.len() - 1] >> (bits % 8) != 0 {
        return Err(PayloadError::OutOfRange("mask padding bits must be zero".into()));
    }
    Ok(Matrix::from_fn(rows, cols, |r, c| {
        let i = r * cols + c;
        p[i / 8] >> (i % 8) & 1 == 1
    }))
}

/// Flags in a [`Opcode::Run`] payload.
pub mod run_flags {
    /// Put the weights back to their loaded values before running.
    pub const RESTORE_WEIGHTS: u8 = 0x01;
    /// Follow the run with a weight dump.
    pub const DUMP_WEIGHTS: u8 = 0x02;
    pub const ALL: u8 = RESTORE_WEIGHTS | DUMP_WEIGHTS;
}

pub const RUN_LEN: usize = 5;

pub fn encode_run(t_end: u32, flags: u8) -> Vec<u8> {
    let mut out = t_end.to_le_bytes().to_vec();
    out.push(flags);
    out
}

pub fn decode_run(p: &[u8]) -> Result<(u32, u8), PayloadError> {
    expect_len(p, RUN_LEN)?;
    if p[4] & !run_flags::ALL != 0 {
        return Err(PayloadError::OutOfRange(format!("unknown run flags {:#04x}", p[4])));
    }
    Ok((le_u32(p, 0), p[4]))
}

pub fn encode_u16(v: u16) -> Vec<u8> {
    v.to_le_bytes().to_vec()
}

pub fn decode_u16(p: &[u8]) -> Result<u16, PayloadError> {
    expect_len(p, 2)?;
    Ok(le_u16(p, 0))
}

pub const RASTER_ENTRY_LEN: usize = 6;

/// `(time u32, neuron u16)` per spike.
pub fn encode_raster(spikes: &[Spike]) -> Vec<u8> {
    let mut out = Vec::with_capacity(spikes.len() * RASTER_ENTRY_LEN);
    for s in spikes {
        out.extend_from_slice(&s.time.to_le_bytes());
        out.extend_from_slice(&s.neuron.to_le_bytes());
    }
    out
}

pub fn decode_raster(p: &[u8]) -> Result<Vec<Spike>, PayloadError> {
    if !p.len().is_multiple_of(RASTER_ENTRY_LEN) {
        return Err(PayloadError::Length { got: p.len(), expected: p.len() / RASTER_ENTRY_LEN * RASTER_ENTRY_LEN });
    }
    Ok(p.chunks_exact(RASTER_ENTRY_LEN).map(|c| Spike { time: le_u32(c, 0), neuron: le_u16(c, 4) }).collect())
}

/// Index of the first sample (sample `i` is `V(i + 1)`), then one raw value per step.
pub fn encode_membrane(first_index: u32, samples: &[Q710]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + samples.len() * 4);
    out.extend_from_slice(&first_index.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.raw().to_le_bytes());
    }
    out
}

pub fn decode_membrane(p: &[u8]) -> Result<(u32, Vec<Q710>), PayloadError> {
    if p.len() < 4 || !(p.len() - 4).is_multiple_of(4) {
        return Err(PayloadError::Length { got: p.len(), expected: 4 + p.len().saturating_sub(4) / 4 * 4 });
    }
    let first = le_u32(p, 0);
    let samples = p[4..]
        .chunks_exact(4)
        .map(|c| {
            let raw = le_i32(c, 0);
            Q710::from_raw(raw).ok_or_else(|| PayloadError::OutOfRange(format!("membrane sample {raw} does not fit 18 bits")))
        })
        .collect::<Result<_, _>>()?;
    Ok((first, samples))
}

/// `n u16, n_in u16`, then `w_aa` and `w_in` row-major.
pub fn encode_weight_dump(w_aa: &Matrix<Weight8>, w_in: &Matrix<Weight8>) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + w_aa.as_slice().len() + w_in.as_slice().len());
    out.extend_from_slice(&(w_aa.rows() as u16).to_le_bytes());
    out.extend_from_slice(&(w_in.cols() as u16).to_le_bytes());
    out.extend(encode_weights(w_aa));
    out.extend(encode_weights(w_in));
    out
}

pub fn decode_weight_dump(p: &[u8]) -> Result<(Matrix<Weight8>, Matrix<Weight8>), PayloadError> {
    if p.len() < 4 {
        return Err(PayloadError::Length { got: p.len(), expected: 4 });
    }
    let n = le_u16(p, 0) as usize;
    let n_in = le_u16(p, 2) as usize;
    expect_len(&p[4..], n * n + n * n_in)?;
    let w_aa = decode_weights(&p[4..4 + n * n], n, n)?;
    let w_in = decode_weights(&p[4 + n * n..], n, n_in)?;
    Ok((w_aa, w_in))
}

pub fn encode_run_done(t_end: u32, spikes: u32) -> Vec<u8> {
    let mut out = t_end.to_le_bytes().to_vec();
    out.extend_from_slice(&spikes.to_le_bytes());
    out
}

pub fn decode_run_done(p: &[u8]) -> Result<(u32, u32), PayloadError> {
    expect_len(p, 8)?;
    Ok((le_u32(p, 0), le_u32(p, 4)))
}

/// `(code, offending opcode, message)` from an error frame payload.
pub fn decode_error(p: &[u8]) -> Option<(u8, u8, String)> {
    if p.len() < 2 {
        return None;
    }
    Some((p[0], p[1], String::from_utf8_lossy(&p[2..]).into_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn frame_size_law() {
        let bytes = frame(Opcode::StdpParams as u8, &[1, 2, 3, 4, 5]);
        assert_eq!(bytes.len(), 10);
        assert_eq!(&bytes[..5], &[0x04, 5, 0, 0, 0]);
    }

    #[test]
    fn unframe_errors() {
        assert!(matches!(unframe(&[1, 2]), Err(FrameError::TruncatedHeader(2))));
        assert!(matches!(unframe(&[1, 4, 0, 0, 0, 9]), Err(FrameError::TruncatedPayload { declared: 4, got: 1 })));
        assert!(matches!(unframe(&[1, 0xFF, 0xFF, 0xFF, 0xFF]), Err(FrameError::TooLarge(_))));
    }

    #[test]
    fn read_frame_handles_eof() {
        let mut empty: &[u8] = &[];
        assert!(read_frame(&mut empty).unwrap().is_none());
        let mut partial: &[u8] = &[0x07, 3, 0];
        assert!(matches!(read_frame(&mut partial), Err(FrameError::TruncatedHeader(3))));
        let mut short: &[u8] = &[0x07, 3, 0, 0, 0, 1];
        assert!(matches!(read_frame(&mut short), Err(FrameError::TruncatedPayload { declared: 3, got: 1 })));
    }

    #[test]
    fn neuron_params_layout() {
        let p = NeuronParams {
            v_th: Q710::from_raw(1843).unwrap(),
            leak: Q710::from_raw(128).unwrap(),
            refractory_steps: 0x0102,
            v_reset: Q710::from_raw(-1024).unwrap(),
            syn_leak: Q710::from_raw(205).unwrap(),
            membrane_floor: false,
        };
        let bytes = encode_neuron_params(&p);
        assert_eq!(bytes.len(), NEURON_PARAMS_LEN);
        assert_eq!(&bytes[8..12], &[0x00, 0xFC, 0xFF, 0xFF]);
        assert_eq!(&bytes[16..], &[0x02, 0x01]);
        assert_eq!(decode_neuron_params(&bytes, false).unwrap(), p);
        let mut wide = bytes.clone();
        wide[0..4].copy_from_slice(&200_000i32.to_le_bytes());
        assert_eq!(decode_neuron_params(&wide, false).unwrap_err().code(), ErrorCode::OutOfRange);
        assert_eq!(decode_neuron_params(&bytes[..17], false).unwrap_err().code(), ErrorCode::Length);
    }

    #[test]
    fn stdp_params_checked() {
        let p = StdpParams { dw_pos: 4, dw_neg: 3, t_pre: 10, t_post: 12, enabled: true };
        assert_eq!(decode_stdp_params(&encode_stdp_params(&p)).unwrap(), p);
        assert!(decode_stdp_params(&[4, 3, 255, 12, 1]).is_err());
        assert!(decode_stdp_params(&[4, 3, 10, 12, 2]).is_err());
    }

    #[test]
    fn mask_packing() {
        let m = Matrix::from_fn(3, 3, |r, c| r == c);
        let bytes = encode_mask(&m);
        assert_eq!(bytes, vec![0b0001_0001, 0b0000_0001]);
        assert_eq!(decode_mask(&bytes, 3, 3).unwrap(), m);
        assert!(decode_mask(&[0x11, 0x03], 3, 3).is_err());
        assert_eq!(decode_mask(&[0x11], 3, 3).unwrap_err().code(), ErrorCode::Length);
    }

    #[test]
    fn weight_dump_round_trip() {
        let w_aa = Matrix::from_fn(2, 2, |r, c| Weight8((r as i8 - c as i8) * 50));
        let w_in = Matrix::from_fn(2, 3, |r, c| Weight8(-(r as i8) * 3 + c as i8));
        let (a, b) = decode_weight_dump(&encode_weight_dump(&w_aa, &w_in)).unwrap();
        assert_eq!(a, w_aa);
        assert_eq!(b, w_in);
        assert!(decode_weight_dump(&[2, 0, 3, 0, 1]).is_err());
    }

    #[test]
    fn run_flags_checked() {
        assert_eq!(decode_run(&encode_run(77, 3)).unwrap(), (77, 3));
        assert!(decode_run(&encode_run(77, 4)).is_err());
    }

    proptest! {
        #[test]
        fn frame_round_trip(op in any::<u8>(), payload in prop::collection::vec(any::<u8>(), 0..512)) {
            let bytes = frame(op, &payload);
            let (f, used) = unframe(&bytes).unwrap();
            prop_assert_eq!(used, bytes.len());
            prop_assert_eq!(f.opcode, op);
            prop_assert_eq!(&f.payload, &payload);
            let mut reader: &[u8] = &bytes;
            prop_assert_eq!(read_frame(&mut reader).unwrap().unwrap(), f);
        }

        #[test]
        fn unframe_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
            if let Ok((f, used)) = unframe(&bytes) {
                prop_assert_eq!(used, HEADER_LEN + f.payload.len());
            }
        }

        #[test]
        fn payload_decoders_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64), rows in 0usize..6, cols in 0usize..6) {
            let _ = decode_neuron_params(&bytes, true);
            let _ = decode_stdp_params(&bytes);
            let _ = decode_mask(&bytes, rows, cols);
            let _ = decode_weights(&bytes, rows, cols);
            let _ = decode_raster(&bytes);
            let _ = decode_membrane(&bytes);
            let _ = decode_weight_dump(&bytes);
            let _ = decode_run(&bytes);
            let _ = CoreSetup::decode(&bytes);
            let _ = decode_error(&bytes);
        }
    }
}
