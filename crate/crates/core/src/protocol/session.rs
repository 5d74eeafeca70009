//! Device side of the host link: holds what the host has loaded, owns the
//! network between runs and answers frames.
//!
//! Every host frame gets exactly one reply, except `RUN`, which streams
//! raster and membrane chunks, then `RUN_DONE`, then an optional weight dump.
//! A rejected frame is answered with an error frame and leaves the state as
//! it was.

use super::frame::{
    self, decode_mask, decode_neuron_params, decode_run, decode_stdp_params, decode_u16, decode_weights,
    encode_membrane, encode_raster, encode_run_done, encode_weight_dump, read_frame, run_flags, write_frame,
    CoreSetup, ErrorCode, Frame, FrameError, Opcode, PayloadError,
};
use super::spikes::SpikeDecoder;
use crate::dynamics::NeuronParams;
use crate::fixed::Weight8;
use crate::matrix::Matrix;
use crate::network::{Network, NetworkConfig, Spike, SpikeEvent, DEFAULT_N_MAX};
use crate::plasticity::StdpParams;
use std::io::{self, Read, Write};

/// Steps per raster/membrane chunk while a run is streaming.
pub const CHUNK_STEPS: u32 = 256;

struct Rejection {
    code: ErrorCode,
    message: String,
}

impl Rejection {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Rejection { code, message: message.into() }
    }
}

impl From<PayloadError> for Rejection {
    fn from(e: PayloadError) -> Self {
        Rejection::new(e.code(), e.to_string())
    }
}

/// How a served connection ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionEnd {
    /// The host closed the stream between frames.
    Closed,
    /// The framing broke (truncated or oversized frame); an error frame was
    /// sent if the link still allowed it.
    FramingError,
}

/// State of one emulated core as seen over the wire.
#[derive(Debug, Clone)]
pub struct Device {
    n_max: usize,
    setup: Option<CoreSetup>,
    neuron_params: Option<NeuronParams>,
    stdp: StdpParams,
    w_aa: Option<Matrix<Weight8>>,
    w_in: Option<Matrix<Weight8>>,
    mask_aa: Option<Matrix<bool>>,
    mask_in: Option<Matrix<bool>>,
    monitor: u16,
    pending: Vec<SpikeEvent>,
    decoder: SpikeDecoder,
    network: Option<Network>,
}

impl Default for Device {
    fn default() -> Self {
        Device::new(DEFAULT_N_MAX)
    }
}

impl Device {
    pub fn new(n_max: usize) -> Self {
        Device {
            n_max,
            setup: None,
            neuron_params: None,
            stdp: StdpParams::default(),
            w_aa: None,
            w_in: None,
            mask_aa: None,
            mask_in: None,
            monitor: 0,
            pending: Vec::new(),
            decoder: SpikeDecoder::new(),
            network: None,
        }
    }

    /// Input events buffered for the next run.
    pub fn pending_events(&self) -> &[SpikeEvent] {
        &self.pending
    }

    pub fn network(&self) -> Option<&Network> {
        self.network.as_ref()
    }

    /// Answers one host frame, passing every reply to `emit` in order.
    pub fn handle<F>(&mut self, f: &Frame, mut emit: F) -> io::Result<()>
    where
        F: FnMut(Frame) -> io::Result<()>,
    {
        let Some(op) = f.kind() else {
            return emit(Frame::error(ErrorCode::UnknownOpcode, f.opcode, &format!("unknown opcode {:#04x}", f.opcode)));
        };
        let outcome = match op {
            Opcode::Run => return self.run(f, &mut emit),
            Opcode::ReadWeights => self.read_weights(f),
            _ => self.apply(op, &f.payload).map(|()| Frame::ack(f.opcode)),
        };
        match outcome {
            Ok(reply) => emit(reply),
            Err(r) => emit(Frame::error(r.code, f.opcode, &r.message)),
        }
    }

    fn dims(&self) -> Result<(usize, usize), Rejection> {
        self.setup
            .map(|s| (s.n as usize, s.n_in as usize))
            .ok_or_else(|| Rejection::new(ErrorCode::NotConfigured, "CONFIGURE has not been sent"))
    }

    fn apply(&mut self, op: Opcode, p: &[u8]) -> Result<(), Rejection> {
        match op {
            Opcode::Configure => {
                let setup = CoreSetup::decode(p)?;
                if setup.n == 0 || setup.n as usize > self.n_max {
                    return Err(Rejection::new(ErrorCode::OutOfRange, format!("neuron count {} outside 1..={}", setup.n, self.n_max)));
                }
                if setup.n_in == 0 || setup.n_in == u16::MAX {
                    return Err(Rejection::new(ErrorCode::OutOfRange, format!("input count {} outside 1..=65534", setup.n_in)));
                }
                if setup.weight_shift > crate::fixed::MAX_WEIGHT_SHIFT {
                    return Err(Rejection::new(ErrorCode::OutOfRange, format!("weight shift {} exceeds 10", setup.weight_shift)));
                }
                if self.setup.map(|s| (s.n, s.n_in)) != Some((setup.n, setup.n_in)) {
                    self.w_aa = None;
                    self.w_in = None;
                    self.mask_aa = None;
                    self.mask_in = None;
                    self.monitor = 0;
                    self.pending.clear();
                    self.decoder = SpikeDecoder::new();
                }
                if let Some(params) = self.neuron_params.as_mut() {
                    params.membrane_floor = setup.membrane_floor;
                }
                self.setup = Some(setup);
                self.network = None;
            }
            Opcode::NeuronParams => {
                let setup = self.setup.ok_or_else(|| Rejection::new(ErrorCode::NotConfigured, "CONFIGURE has not been sent"))?;
                self.neuron_params = Some(decode_neuron_params(p, setup.membrane_floor)?);
                self.network = None;
            }
            Opcode::StdpParams => {
                let params = decode_stdp_params(p)?;
                self.stdp = params;
                if let Some(net) = self.network.as_mut() {
                    net.set_stdp_params(params).expect("validated on decode");
                }
            }
            Opcode::LoadWaa => {
                let (n, _) = self.dims()?;
                self.w_aa = Some(decode_weights(p, n, n)?);
                self.network = None;
            }
            Opcode::LoadWin => {
                let (n, n_in) = self.dims()?;
                self.w_in = Some(decode_weights(p, n, n_in)?);
                self.network = None;
            }
            Opcode::LoadMaskAa => {
                let (n, _) = self.dims()?;
                self.mask_aa = Some(decode_mask(p, n, n)?);
                self.network = None;
            }
            Opcode::LoadMaskIn => {
                let (n, n_in) = self.dims()?;
                self.mask_in = Some(decode_mask(p, n, n_in)?);
                self.network = None;
            }
            Opcode::SetMonitor => {
                let (n, _) = self.dims()?;
                let m = decode_u16(p)?;
                if m as usize >= n {
                    return Err(Rejection::new(ErrorCode::OutOfRange, format!("monitor {m} out of range for {n} neurons")));
                }
                self.monitor = m;
                if let Some(net) = self.network.as_mut() {
                    net.set_monitor(m as usize).expect("checked above");
                }
            }
            Opcode::Spikes => {
                let (_, n_in) = self.dims()?;
                let mut decoder = self.decoder.clone();
                let mut events = Vec::new();
                decoder
                    .decode_into(p, &mut events)
                    .map_err(|e| Rejection::new(ErrorCode::SpikeStream, e.to_string()))?;
                if let Some(e) = events.iter().find(|e| e.address as usize >= n_in) {
                    return Err(Rejection::new(
                        ErrorCode::SpikeStream,
                        format!("input address {} out of range for {n_in} channels", e.address),
                    ));
                }
                self.decoder = decoder;
                self.pending.extend(events);
            }
            Opcode::Raster | Opcode::Membrane | Opcode::Weights | Opcode::Error | Opcode::Ack | Opcode::RunDone => {
                return Err(Rejection::new(ErrorCode::UnknownOpcode, format!("{op:?} is a device-to-host opcode")));
            }
            Opcode::Run | Opcode::ReadWeights => unreachable!("dispatched separately"),
        }
        Ok(())
    }

    fn read_weights(&self, f: &Frame) -> Result<Frame, Rejection> {
        if !f.payload.is_empty() {
            return Err(PayloadError::Length { got: f.payload.len(), expected: 0 }.into());
        }
        let payload = match &self.network {
            Some(net) => {
                let (w_aa, w_in) = net.weights();
                encode_weight_dump(w_aa, w_in)
            }
            None => match (&self.w_aa, &self.w_in) {
                (Some(w_aa), Some(w_in)) => encode_weight_dump(w_aa, w_in),
                _ => return Err(Rejection::new(ErrorCode::NotConfigured, "weights have not been loaded")),
            },
        };
        Ok(Frame::new(Opcode::Weights, payload))
    }

    fn build_network(&mut self) -> Result<(), Rejection> {
        if self.network.is_some() {
            return Ok(());
        }
        let (n, n_in) = self.dims()?;
        let setup = self.setup.expect("dims checked");
        let missing = |what: &str| Rejection::new(ErrorCode::NotConfigured, format!("{what} has not been loaded"));
        let neuron_params = self.neuron_params.ok_or_else(|| missing("NEURON_PARAMS"))?;
        let w_aa = self.w_aa.clone().ok_or_else(|| missing("LOAD_WAA"))?;
        let w_in = self.w_in.clone().ok_or_else(|| missing("LOAD_WIN"))?;
        let config = NetworkConfig {
            n,
            n_in,
            w_aa,
            w_in,
            enable_stdp_aa: self.mask_aa.clone().unwrap_or_else(|| Matrix::filled(n, n, false)),
            enable_stdp_in: self.mask_in.clone().unwrap_or_else(|| Matrix::filled(n, n_in, false)),
            neuron_params,
            stdp_params: self.stdp,
            weight_shift: setup.weight_shift,
            monitored_neuron: self.monitor as usize,
            n_max: self.n_max,
        };
        self.network = Some(Network::new(config).map_err(|e| Rejection::new(ErrorCode::OutOfRange, e.to_string()))?);
        Ok(())
    }

    fn run<F>(&mut self, f: &Frame, emit: &mut F) -> io::Result<()>
    where
        F: FnMut(Frame) -> io::Result<()>,
    {
        let prepared = decode_run(&f.payload).map_err(Rejection::from).and_then(|(t_end, flags)| {
            self.build_network()?;
            Ok((t_end, flags))
        });
        let (t_end, flags) = match prepared {
            Ok(v) => v,
            Err(r) => return emit(Frame::error(r.code, f.opcode, &r.message)),
        };
        let events = std::mem::take(&mut self.pending);
        self.decoder = SpikeDecoder::new();
        let net = self.network.as_mut().expect("built above");
        if flags & run_flags::RESTORE_WEIGHTS != 0 {
            net.restore_weights();
        }
        net.reset();

        let mut head = 0;
        let mut raster: Vec<Spike> = Vec::new();
        let mut membrane = Vec::with_capacity(CHUNK_STEPS as usize);
        let mut chunk_start = 0u32;
        let mut total: u32 = 0;
        for t in 0..t_end {
            let start = head;
            while head < events.len() && events[head].time == t {
                head += 1;
            }
            let out = net.step(&events[start..head]).expect("events validated on arrival");
            total = total.saturating_add(out.fired.len() as u32);
            raster.extend(out.fired.iter().map(|&k| Spike { time: out.time, neuron: k as u16 }));
            membrane.push(out.membrane);
            if membrane.len() == CHUNK_STEPS as usize || t + 1 == t_end {
                if !raster.is_empty() {
                    emit(Frame::new(Opcode::Raster, encode_raster(&raster)))?;
                }
                emit(Frame::new(Opcode::Membrane, encode_membrane(chunk_start, &membrane)))?;
                raster.clear();
                membrane.clear();
                chunk_start = t + 1;
            }
        }
        emit(Frame::new(Opcode::RunDone, encode_run_done(t_end, total)))?;
        if flags & run_flags::DUMP_WEIGHTS != 0 {
            let (w_aa, w_in) = net.weights();
            emit(Frame::new(Opcode::Weights, encode_weight_dump(w_aa, w_in)))?;
        }
        Ok(())
    }

    /// Serves frames from `link` until the host hangs up or the framing breaks.
    pub fn serve<S: Read + Write>(&mut self, link: &mut S) -> io::Result<SessionEnd> {
        loop {
            let f = match read_frame(link) {
                Ok(Some(f)) => f,
                Ok(None) => return Ok(SessionEnd::Closed),
                Err(FrameError::Io(e)) => return Err(e),
                Err(e) => {
                    let (code, opcode) = match &e {
                        FrameError::TooLarge(_) => (ErrorCode::FrameTooLarge, 0),
                        _ => (ErrorCode::Truncated, 0),
                    };
                    // The host may already be gone; nothing more to do then.
                    let _ = write_frame(link, &Frame::error(code, opcode, &e.to_string())).and_then(|()| link.flush());
                    return Ok(SessionEnd::FramingError);
                }
            };
            let mut out = Vec::new();
            self.handle(&f, |reply| {
                out.extend(frame::frame(reply.opcode, &reply.payload));
                if out.len() >= 1 << 16 {
                    link.write_all(&out)?;
                    out.clear();
                }
                Ok(())
            })?;
            link.write_all(&out)?;
            link.flush()?;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::frame::{decode_error, encode_run, encode_stdp_params};

    fn replies(dev: &mut Device, op: Opcode, payload: Vec<u8>) -> Vec<Frame> {
        let mut out = Vec::new();
        dev.handle(&Frame::new(op, payload), |f| {
            out.push(f);
            Ok(())
        })
        .unwrap();
        out
    }

    fn error_code(f: &Frame) -> u8 {
        assert_eq!(f.kind(), Some(Opcode::Error));
        decode_error(&f.payload).unwrap().0
    }

    #[test]
    fn run_before_configure_is_rejected() {
        let mut dev = Device::default();
        let r = replies(&mut dev, Opcode::Run, encode_run(10, 0));
        assert_eq!(r.len(), 1);
        assert_eq!(error_code(&r[0]), ErrorCode::NotConfigured as u8);
        let r = replies(&mut dev, Opcode::LoadWaa, vec![0; 4]);
        assert_eq!(error_code(&r[0]), ErrorCode::NotConfigured as u8);
    }

    #[test]
    fn unknown_opcode_reported() {
        let mut dev = Device::default();
        let mut out = Vec::new();
        dev.handle(&Frame { opcode: 0x55, payload: vec![] }, |f| {
            out.push(f);
            Ok(())
        })
        .unwrap();
        let (code, opcode, _) = decode_error(&out[0].payload).unwrap();
        assert_eq!((code, opcode), (ErrorCode::UnknownOpcode as u8, 0x55));
    }

    #[test]
    fn stdp_params_ack() {
        let mut dev = Device::default();
        let p = StdpParams { dw_pos: 2, dw_neg: 1, t_pre: 5, t_post: 5, enabled: true };
        let r = replies(&mut dev, Opcode::StdpParams, encode_stdp_params(&p));
        assert_eq!(r, vec![Frame::ack(Opcode::StdpParams as u8)]);
        let r = replies(&mut dev, Opcode::StdpParams, vec![0, 1, 5, 5, 1]);
        assert_eq!(error_code(&r[0]), ErrorCode::OutOfRange as u8);
    }

    #[test]
    fn configure_limits() {
        let mut dev = Device::new(8);
        let setup = |n| CoreSetup { n, n_in: 2, weight_shift: 10, membrane_floor: true }.encode();
        assert_eq!(error_code(&replies(&mut dev, Opcode::Configure, setup(9))[0]), ErrorCode::OutOfRange as u8);
        assert_eq!(replies(&mut dev, Opcode::Configure, setup(8)), vec![Frame::ack(Opcode::Configure as u8)]);
        assert_eq!(error_code(&replies(&mut dev, Opcode::Configure, vec![1])[0]), ErrorCode::Length as u8);
    }
}
