//! Serve mode: a [`Device`] behind a TCP listener or a serial device node.

use super::session::{Device, SessionEnd};
use std::fs::OpenOptions;
use std::io;
use std::net::{TcpListener, ToSocketAddrs};
use std::path::Path;

/// Accepts connections one at a time; each gets a fresh device. Returns after
/// `max_sessions` connections, or never when `None`.
pub fn serve_listener(listener: &TcpListener, n_max: usize, max_sessions: Option<usize>) -> io::Result<()> {
    let mut served = 0;
    while max_sessions.is_none_or(|m| served < m) {
        let (mut stream, _) = listener.accept()?;
        stream.set_nodelay(true)?;
        // A broken connection ends that session only.
        let _ = Device::new(n_max).serve(&mut stream);
        served += 1;
    }
    Ok(())
}

pub fn serve_tcp(addr: impl ToSocketAddrs, n_max: usize) -> io::Result<()> {
    let listener = TcpListener::bind(addr)?;
    serve_listener(&listener, n_max, None)
}

/// Serves a single session over a character device (or any read/write file).
/// Line settings such as baud rate are left to the operating system.
pub fn serve_serial(path: &Path, n_max: usize) -> io::Result<SessionEnd> {
    let mut port = OpenOptions::new().read(true).write(true).open(path)?;
    Device::new(n_max).serve(&mut port)
}
