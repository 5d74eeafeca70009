//! Host side of the link: loads a [`NetworkConfig`], streams spikes and
//! collects run output.

use super::frame::{
    decode_error, decode_membrane, decode_raster, decode_run_done, decode_weight_dump, encode_mask,
    encode_neuron_params, encode_run, encode_stdp_params, encode_u16, encode_weights, read_frame, write_frame,
    CoreSetup, Frame, FrameError, Opcode, PayloadError,
};
use super::spikes::{CodecError, SpikeEncoder, WORD_BYTES};
use crate::network::{NetworkConfig, RunTrace, SpikeEvent, WeightSnapshot};
use crate::plasticity::StdpParams;
use std::io::{self, Read, Write};
use thiserror::Error;

/// Spike words per `SPIKES` frame sent by the client.
pub const WORDS_PER_FRAME: usize = 4096;

#[derive(Debug, Error)]
pub enum HostError {
    #[error("device rejected opcode {opcode:#04x} with code {code}: {message}")]
    Device { code: u8, opcode: u8, message: String },
    #[error("unexpected reply opcode {0:#04x}")]
    Unexpected(u8),
    #[error("device closed the link")]
    Closed,
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("malformed reply: {0}")]
    Payload(#[from] PayloadError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Output of one remote run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteRun {
    pub trace: RunTrace,
    pub spike_count: u32,
}

pub struct HostClient<S> {
    link: S,
}

impl<S: Read + Write> HostClient<S> {
    pub fn new(link: S) -> Self {
        HostClient { link }
    }

    pub fn into_inner(self) -> S {
        self.link
    }

    fn send(&mut self, op: Opcode, payload: Vec<u8>) -> Result<(), HostError> {
        write_frame(&mut self.link, &Frame::new(op, payload))?;
        self.link.flush()?;
        Ok(())
    }

    fn receive(&mut self) -> Result<Frame, HostError> {
        let f = read_frame(&mut self.link)?.ok_or(HostError::Closed)?;
        if f.kind() == Some(Opcode::Error) {
            let (code, opcode, message) =
                decode_error(&f.payload).ok_or(PayloadError::Length { got: f.payload.len(), expected: 2 })?;
            return Err(HostError::Device { code, opcode, message });
        }
        Ok(f)
    }

    fn command(&mut self, op: Opcode, payload: Vec<u8>) -> Result<(), HostError> {
        self.send(op, payload)?;
        let f = self.receive()?;
        if f.kind() == Some(Opcode::Ack) && f.payload == [op as u8] {
            Ok(())
        } else {
            Err(HostError::Unexpected(f.opcode))
        }
    }

    /// Loads everything in `config` onto the device.
    pub fn load(&mut self, config: &NetworkConfig) -> Result<(), HostError> {
        let setup = CoreSetup {
            n: config.n as u16,
            n_in: config.n_in as u16,
            weight_shift: config.weight_shift,
            membrane_floor: config.neuron_params.membrane_floor,
        };
        self.command(Opcode::Configure, setup.encode())?;
        self.command(Opcode::NeuronParams, encode_neuron_params(&config.neuron_params))?;
        self.set_stdp(&config.stdp_params)?;
        self.command(Opcode::LoadWaa, encode_weights(&config.w_aa))?;
        self.command(Opcode::LoadWin, encode_weights(&config.w_in))?;
        self.command(Opcode::LoadMaskAa, encode_mask(&config.enable_stdp_aa))?;
        self.command(Opcode::LoadMaskIn, encode_mask(&config.enable_stdp_in))?;
        self.set_monitor(config.monitored_neuron as u16)
    }

    pub fn set_stdp(&mut self, params: &StdpParams) -> Result<(), HostError> {
        self.command(Opcode::StdpParams, encode_stdp_params(params))
    }

    pub fn set_monitor(&mut self, neuron: u16) -> Result<(), HostError> {
        self.command(Opcode::SetMonitor, encode_u16(neuron))
    }

    /// Queues a time-sorted stream for the next run, split over several frames.
    pub fn send_spikes(&mut self, events: &[SpikeEvent]) -> Result<(), HostError> {
        let mut encoder = SpikeEncoder::new();
        let mut words = Vec::new();
        encoder.encode_into(events, &mut words)?;
        for chunk in words.chunks(WORDS_PER_FRAME * WORD_BYTES) {
            self.command(Opcode::Spikes, chunk.to_vec())?;
        }
        Ok(())
    }

    /// Starts a run and collects its output. `flags` are [`super::frame::run_flags`].
    pub fn run(&mut self, t_end: u32, flags: u8) -> Result<RemoteRun, HostError> {
        self.send(Opcode::Run, encode_run(t_end, flags))?;
        let mut trace = RunTrace::default();
        let spike_count = loop {
            let f = self.receive()?;
            match f.kind() {
                Some(Opcode::Raster) => trace.raster.extend(decode_raster(&f.payload)?),
                Some(Opcode::Membrane) => {
                    let (first, samples) = decode_membrane(&f.payload)?;
                    if first as usize != trace.membrane.len() {
                        return Err(HostError::Unexpected(f.opcode));
                    }
                    trace.membrane.extend(samples);
                }
                Some(Opcode::RunDone) => break decode_run_done(&f.payload)?.1,
                _ => return Err(HostError::Unexpected(f.opcode)),
            }
        };
        if flags & super::frame::run_flags::DUMP_WEIGHTS != 0 {
            trace.final_weights = Some(self.expect_weights()?);
        }
        Ok(RemoteRun { trace, spike_count })
    }

    pub fn read_weights(&mut self) -> Result<WeightSnapshot, HostError> {
        self.send(Opcode::ReadWeights, Vec::new())?;
        self.expect_weights()
    }

    fn expect_weights(&mut self) -> Result<WeightSnapshot, HostError> {
        let f = self.receive()?;
        if f.kind() != Some(Opcode::Weights) {
            return Err(HostError::Unexpected(f.opcode));
        }
        let (w_aa, w_in) = decode_weight_dump(&f.payload)?;
        Ok(WeightSnapshot { w_aa, w_in })
    }

    /// Loads, streams and runs in one go, returning the trace with final weights.
    pub fn run_config(&mut self, config: &NetworkConfig, stream: &[SpikeEvent], t_end: u32) -> Result<RunTrace, HostError> {
        self.load(config)?;
        self.send_spikes(stream)?;
        Ok(self.run(t_end, super::frame::run_flags::DUMP_WEIGHTS)?.trace)
    }
}
