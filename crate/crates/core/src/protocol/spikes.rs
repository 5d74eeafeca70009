//! 24-bit spike words with delta-time compression.
//!
//! Each word is three bytes: a big-endian 16-bit input address followed by
//! the number of timesteps since the previous word. The first word's delta is
//! counted from time 0. Gaps longer than 255 steps are bridged with heartbeat
//! words (address `0xFFFF`, delta 255) that advance time without injecting
//! anything.

use crate::network::SpikeEvent;
use thiserror::Error;

pub const WORD_BYTES: usize = 3;
pub const HEARTBEAT_ADDRESS: u16 = 0xFFFF;
pub const MAX_DELTA: u8 = u8::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("spike stream not time-sorted at index {index}")]
    Unsorted { index: usize },
    #[error("event {index} uses reserved address 0xFFFF")]
    ReservedAddress { index: usize },
    #[error("{len} bytes is not a whole number of 3-byte spike words")]
    PartialWord { len: usize },
    #[error("decoded time exceeds the 32-bit clock")]
    TimeOverflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpikeWord {
    pub address: u16,
    pub delta: u8,
}

impl SpikeWord {
    pub const HEARTBEAT: SpikeWord = SpikeWord { address: HEARTBEAT_ADDRESS, delta: MAX_DELTA };

    pub fn to_bytes(self) -> [u8; WORD_BYTES] {
        let [hi, lo] = self.address.to_be_bytes();
        [hi, lo, self.delta]
    }

    pub fn from_bytes(b: [u8; WORD_BYTES]) -> Self {
        SpikeWord { address: u16::from_be_bytes([b[0], b[1]]), delta: b[2] }
    }

    pub fn is_heartbeat(self) -> bool {
        self.address == HEARTBEAT_ADDRESS
    }
}

/// Incremental encoder; keeps the time of the last emitted word so a long
/// stream can be split across several buffers.
#[derive(Debug, Clone, Default)]
pub struct SpikeEncoder {
    last: u32,
    emitted: usize,
}

impl SpikeEncoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn encode_into(&mut self, events: &[SpikeEvent], out: &mut Vec<u8>) -> Result<(), CodecError> {
        let mut prev = self.last;
        for (i, e) in events.iter().enumerate() {
            let index = self.emitted + i;
            if e.time < prev {
                return Err(CodecError::Unsorted { index });
            }
            if e.address == HEARTBEAT_ADDRESS {
                return Err(CodecError::ReservedAddress { index });
            }
            prev = e.time;
        }
        for e in events {
            let mut gap = e.time - self.last;
            if gap > MAX_DELTA as u32 {
                for _ in 0..gap / MAX_DELTA as u32 {
                    out.extend_from_slice(&SpikeWord::HEARTBEAT.to_bytes());
                }
                gap %= MAX_DELTA as u32;
            }
            out.extend_from_slice(&SpikeWord { address: e.address, delta: gap as u8 }.to_bytes());
            self.last = e.time;
        }
        self.emitted += events.len();
        Ok(())
    }
}

/// Encodes a time-sorted stream.
pub fn encode_spikes(events: &[SpikeEvent]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(events.len() * WORD_BYTES);
    SpikeEncoder::new().encode_into(events, &mut out)?;
    Ok(out)
}

/// Incremental decoder; absolute time carries across buffers.
#[derive(Debug, Clone, Default)]
pub struct SpikeDecoder {
    time: u64,
}

impl SpikeDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Time of the most recently decoded word.
    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn decode_into(&mut self, bytes: &[u8], out: &mut Vec<SpikeEvent>) -> Result<(), CodecError> {
        if !bytes.len().is_multiple_of(WORD_BYTES) {
            return Err(CodecError::PartialWord { len: bytes.len() });
        }
        let mut time = self.time;
        let start = out.len();
        for chunk in bytes.chunks_exact(WORD_BYTES) {
            let word = SpikeWord::from_bytes([chunk[0], chunk[1], chunk[2]]);
            time += word.delta as u64;
            if time > u32::MAX as u64 {
                out.truncate(start);
                return Err(CodecError::TimeOverflow);
            }
            if !word.is_heartbeat() {
                out.push(SpikeEvent { time: time as u32, address: word.address });
            }
        }
        self.time = time;
        Ok(())
    }
}

/// Decodes a complete buffer of spike words.
pub fn decode_spikes(bytes: &[u8]) -> Result<Vec<SpikeEvent>, CodecError> {
    let mut out = Vec::with_capacity(bytes.len() / WORD_BYTES);
    SpikeDecoder::new().decode_into(bytes, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_examples() {
        assert!(encode_spikes(&[]).unwrap().is_empty());
        assert_eq!(encode_spikes(&[SpikeEvent::new(7, 0x0012)]).unwrap(), vec![0x00, 0x12, 0x07]);
        assert_eq!(
            encode_spikes(&[SpikeEvent::new(0, 1), SpikeEvent::new(300, 2)]).unwrap(),
            vec![0x00, 0x01, 0x00, 0xFF, 0xFF, 0xFF, 0x00, 0x02, 0x2D]
        );
    }

    #[test]
    fn exact_multiple_of_255() {
        let bytes = encode_spikes(&[SpikeEvent::new(255, 3)]).unwrap();
        assert_eq!(bytes, vec![0x00, 0x03, 0xFF]);
        assert_eq!(decode_spikes(&bytes).unwrap(), vec![SpikeEvent::new(255, 3)]);
        let bytes = encode_spikes(&[SpikeEvent::new(510, 3)]).unwrap();
        assert_eq!(bytes, vec![0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0x00, 0x03, 0x00]);
        assert_eq!(decode_spikes(&bytes).unwrap(), vec![SpikeEvent::new(510, 3)]);
    }

    #[test]
    fn decode_examples() {
        let bytes = [0xFF, 0xFF, 0xFF, 0x00, 0x02, 0x2D];
        assert_eq!(decode_spikes(&bytes).unwrap(), vec![SpikeEvent::new(300, 2)]);
        assert_eq!(decode_spikes(&[0x00, 0x01]), Err(CodecError::PartialWord { len: 2 }));
    }

    #[test]
    fn encode_rejects_bad_streams() {
        let unsorted = [SpikeEvent::new(5, 0), SpikeEvent::new(4, 0)];
        assert_eq!(encode_spikes(&unsorted), Err(CodecError::Unsorted { index: 1 }));
        assert_eq!(encode_spikes(&[SpikeEvent::new(5, 0xFFFF)]), Err(CodecError::ReservedAddress { index: 0 }));
    }

    #[test]
    fn decoder_overflow_is_an_error() {
        let mut dec = SpikeDecoder { time: u32::MAX as u64 - 3 };
        let mut out = Vec::new();
        assert_eq!(dec.decode_into(&[0, 0, 9], &mut out), Err(CodecError::TimeOverflow));
        assert!(out.is_empty());
    }

    #[test]
    fn split_encoding_matches_whole() {
        let events: Vec<_> = [0u32, 3, 3, 700, 701, 2000].iter().enumerate().map(|(i, &t)| SpikeEvent::new(t, i as u16)).collect();
        let whole = encode_spikes(&events).unwrap();
        let mut enc = SpikeEncoder::new();
        let mut parts = Vec::new();
        enc.encode_into(&events[..3], &mut parts).unwrap();
        enc.encode_into(&events[3..], &mut parts).unwrap();
        assert_eq!(parts, whole);
        let mut dec = SpikeDecoder::new();
        let mut back = Vec::new();
        dec.decode_into(&whole[..whole.len() / 2 / 3 * 3], &mut back).unwrap();
        dec.decode_into(&whole[whole.len() / 2 / 3 * 3..], &mut back).unwrap();
        assert_eq!(back, events);
    }

    fn sorted_stream() -> impl Strategy<Value = Vec<SpikeEvent>> {
        prop::collection::vec((0u32..2000, 0u16..0xFFFF), 0..200).prop_map(|gaps| {
            let mut t = 0u32;
            gaps.into_iter()
                .map(|(gap, address)| {
                    // Mostly short gaps with the odd long one.
                    t += if gap > 1900 { gap * 3 } else { gap % 40 };
                    SpikeEvent::new(t, address)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn round_trip(events in sorted_stream()) {
            let bytes = encode_spikes(&events).unwrap();
            prop_assert_eq!(bytes.len() % WORD_BYTES, 0);
            prop_assert_eq!(decode_spikes(&bytes).unwrap(), events);
        }

        #[test]
        fn decoder_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..600)) {
            let _ = decode_spikes(&bytes);
        }
    }
}
