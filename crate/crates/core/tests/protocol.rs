mod common;

use common::{random_config, random_stream};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikecore::protocol::frame::{self, encode_run, encode_weights, decode_error};
use spikecore::protocol::*;
use spikecore::{Network, NetworkConfig, SpikeEvent, Weight8};
use std::io::{Cursor, Read, Write};
use std::net::TcpListener;
use std::os::unix::net::UnixStream;
use std::thread;

fn with_device<T>(body: impl FnOnce(&mut HostClient<UnixStream>) -> T) -> T {
    let (host, mut dev) = UnixStream::pair().unwrap();
    let server = thread::spawn(move || Device::default().serve(&mut dev).unwrap());
    let mut client = HostClient::new(host);
    let out = body(&mut client);
    drop(client);
    assert_eq!(server.join().unwrap(), SessionEnd::Closed);
    out
}

#[test]
fn session_run_equals_in_process_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases: Vec<(NetworkConfig, Vec<SpikeEvent>, u32)> = (0..40)
        .map(|i| {
            let cfg = random_config(&mut rng, 16, 16, i % 2 == 0);
            // Long enough to cross several chunks and heartbeat gaps.
            let t_end = 700;
            let stream = random_stream(&mut rng, cfg.n_in, t_end);
            (cfg, stream, t_end)
        })
        .collect();
    with_device(|client| {
        for (cfg, stream, t_end) in &cases {
            let local = Network::new(cfg.clone()).unwrap().run(stream, *t_end).unwrap();
            let remote = client.run_config(cfg, stream, *t_end).unwrap();
            assert_eq!(remote, local);
        }
    });
}

#[test]
fn learned_weights_persist_across_runs_unless_restored() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cfg = random_config(&mut rng, 8, 4, true);
    cfg.enable_stdp_aa.fill(true);
    cfg.enable_stdp_in.fill(true);
    let stream = random_stream(&mut rng, cfg.n_in, 300);
    let mut local = Network::new(cfg.clone()).unwrap();
    let first = local.run(&stream, 300).unwrap();
    let second = local.run(&stream, 300).unwrap();
    with_device(|client| {
        client.load(&cfg).unwrap();
        client.send_spikes(&stream).unwrap();
        assert_eq!(client.run(300, run_flags::DUMP_WEIGHTS).unwrap().trace, first);
        client.send_spikes(&stream).unwrap();
        assert_eq!(client.run(300, run_flags::DUMP_WEIGHTS).unwrap().trace, second);
        client.send_spikes(&stream).unwrap();
        let restored = client.run(300, run_flags::DUMP_WEIGHTS | run_flags::RESTORE_WEIGHTS).unwrap().trace;
        assert_eq!(restored, first);
    });
}

#[test]
fn read_weights_before_run_echoes_load() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = random_config(&mut rng, 12, 9, false);
    with_device(|client| {
        client.load(&cfg).unwrap();
        let w = client.read_weights().unwrap();
        assert_eq!(w.w_aa, cfg.w_aa);
        assert_eq!(w.w_in, cfg.w_in);
    });
}

#[test]
fn zero_length_run_returns_empty_raster() {
    let cfg = NetworkConfig::new(3, 2);
    with_device(|client| {
        client.load(&cfg).unwrap();
        let run = client.run(0, 0).unwrap();
        assert!(run.trace.raster.is_empty());
        assert!(run.trace.membrane.is_empty());
        assert_eq!(run.spike_count, 0);
    });
}

#[test]
fn ordering_and_length_errors_are_reported() {
    with_device(|client| {
        match client.run(10, 0) {
            Err(HostError::Device { code, opcode, .. }) => {
                assert_eq!(code, ErrorCode::NotConfigured as u8);
                assert_eq!(opcode, Opcode::Run as u8);
            }
            other => panic!("{other:?}"),
        }
        let mut cfg = NetworkConfig::new(4, 2);
        cfg.w_aa[(0, 1)] = Weight8(3);
        client.load(&cfg).unwrap();
        // The session survives errors.
        client.load(&cfg).unwrap();
    });

    // Raw frames: a LOAD_WAA of the wrong size.
    let (mut host, mut dev) = UnixStream::pair().unwrap();
    let server = thread::spawn(move || Device::default().serve(&mut dev).unwrap());
    let setup = CoreSetup { n: 3, n_in: 1, weight_shift: 10, membrane_floor: true };
    host.write_all(&frame::frame(Opcode::Configure as u8, &setup.encode())).unwrap();
    host.write_all(&frame::frame(Opcode::LoadWaa as u8, &[0; 8])).unwrap();
    host.write_all(&frame::frame(0x42, &[])).unwrap();
    host.write_all(&frame::frame(Opcode::Run as u8, &[1, 2])).unwrap();
    host.shutdown(std::net::Shutdown::Write).unwrap();
    let mut replies = Vec::new();
    host.read_to_end(&mut replies).unwrap();
    server.join().unwrap();
    let mut frames = Vec::new();
    let mut at = 0;
    while at < replies.len() {
        let (f, used) = frame::unframe(&replies[at..]).unwrap();
        frames.push(f);
        at += used;
    }
    assert_eq!(frames[0], Frame::ack(Opcode::Configure as u8));
    let codes: Vec<(u8, u8)> = frames[1..].iter().map(|f| {
        let (code, op, _) = decode_error(&f.payload).unwrap();
        (code, op)
    }).collect();
    assert_eq!(codes, vec![
        (ErrorCode::Length as u8, Opcode::LoadWaa as u8),
        (ErrorCode::UnknownOpcode as u8, 0x42),
        (ErrorCode::Length as u8, Opcode::Run as u8),
    ]);
}

#[test]
fn spike_frames_continue_deltas_and_reject_bad_addresses() {
    let mut cfg = NetworkConfig::new(1, 2);
    cfg.w_in[(0, 1)] = Weight8(2);
    let stream = vec![SpikeEvent::new(3, 1), SpikeEvent::new(600, 1), SpikeEvent::new(601, 0)];
    let words = encode_spikes(&stream).unwrap();
    let mut dev = Device::default();
    let mut sink = |_f: Frame| Ok(());
    let mut client_frames = Vec::new();
    let setup = CoreSetup { n: 1, n_in: 2, weight_shift: 10, membrane_floor: true };
    client_frames.push(Frame::new(Opcode::Configure, setup.encode()));
    client_frames.push(Frame::new(Opcode::NeuronParams, frame::encode_neuron_params(&cfg.neuron_params)));
    client_frames.push(Frame::new(Opcode::LoadWaa, encode_weights(&cfg.w_aa)));
    client_frames.push(Frame::new(Opcode::LoadWin, encode_weights(&cfg.w_in)));
    // Split mid-stream on a word boundary.
    client_frames.push(Frame::new(Opcode::Spikes, words[..6].to_vec()));
    client_frames.push(Frame::new(Opcode::Spikes, words[6..].to_vec()));
    for f in &client_frames {
        dev.handle(f, &mut sink).unwrap();
    }
    assert_eq!(dev.pending_events(), &stream[..]);
    let mut replies = Vec::new();
    dev.handle(&Frame::new(Opcode::Spikes, vec![0x00, 0x07, 0x01]), |f| {
        replies.push(f);
        Ok(())
    })
    .unwrap();
    assert_eq!(decode_error(&replies[0].payload).unwrap().0, ErrorCode::SpikeStream as u8);
    assert_eq!(dev.pending_events(), &stream[..]);
    let mut out = Vec::new();
    dev.handle(&Frame::new(Opcode::Run, encode_run(700, 0)), |f| {
        out.push(f);
        Ok(())
    })
    .unwrap();
    assert_eq!(out.last().unwrap().kind(), Some(Opcode::RunDone));
    assert!(dev.pending_events().is_empty());
}

#[test]
fn tcp_transport_matches_pipe() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = thread::spawn(move || serve_listener(&listener, 100, Some(2)).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cfg = random_config(&mut rng, 10, 10, true);
    let stream = random_stream(&mut rng, cfg.n_in, 500);
    let local = Network::new(cfg.clone()).unwrap().run(&stream, 500).unwrap();
    for _ in 0..2 {
        let mut client = HostClient::new(std::net::TcpStream::connect(addr).unwrap());
        assert_eq!(client.run_config(&cfg, &stream, 500).unwrap(), local);
    }
    server.join().unwrap();
}

#[test]
fn serial_transport_reports_missing_device() {
    let err = serve_serial(std::path::Path::new("/nonexistent/ttyFAKE0"), 100).unwrap_err();
    assert_eq!(err.kind(), std::io::ErrorKind::NotFound);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn fuzzed_byte_streams_only_produce_frames(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let mut link = Duplex { input: Cursor::new(bytes), output: Vec::new() };
        let end = Device::new(8).serve(&mut link).unwrap();
        prop_assert!(matches!(end, SessionEnd::Closed | SessionEnd::FramingError));
        let mut at = 0;
        while at < link.output.len() {
            let (f, used) = frame::unframe(&link.output[at..]).unwrap();
            prop_assert!(f.kind().is_some());
            at += used;
        }
    }

    #[test]
    fn fuzzed_frames_with_valid_headers(ops in prop::collection::vec((any::<u8>(), prop::collection::vec(any::<u8>(), 0..40)), 0..30)) {
        let mut bytes = Vec::new();
        for (op, payload) in &ops {
            // Bias towards real opcodes, and keep runs short.
            let op = if *op < 200 { op % 0x11 } else { *op };
            let payload = if op == Opcode::Run as u8 && payload.len() == 5 {
                let mut p = payload.clone();
                p[1] = 0; p[2] = 0; p[3] = 0;
                p
            } else {
                payload.clone()
            };
            bytes.extend(frame::frame(op, &payload));
        }
        let mut link = Duplex { input: Cursor::new(bytes), output: Vec::new() };
        prop_assert_eq!(Device::new(8).serve(&mut link).unwrap(), SessionEnd::Closed);
    }
}

struct Duplex {
    input: Cursor<Vec<u8>>,
    output: Vec<u8>,
}

impl Read for Duplex {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        self.input.read(buf)
    }
}

impl Write for Duplex {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.output.write(buf)
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}
