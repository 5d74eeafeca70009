//! Wire protocol between a host and the core: spike-word codec, framing,
//! the device session and a host client.

pub mod frame;
pub mod host;
pub mod session;
pub mod spikes;
pub mod transport;

pub use frame::{run_flags, CoreSetup, ErrorCode, Frame, FrameError, Opcode, PayloadError, MAX_PAYLOAD};
pub use host::{HostClient, HostError, RemoteRun};
pub use session::{Device, SessionEnd, CHUNK_STEPS};
pub use spikes::{decode_spikes, encode_spikes, CodecError, SpikeDecoder, SpikeEncoder, SpikeWord};
pub use transport::{serve_listener, serve_serial, serve_tcp};
