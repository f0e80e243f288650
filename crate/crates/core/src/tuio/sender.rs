use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};

use super::osc::{encode_bundle, OscBundle};
use super::TuioError;

/// Fire-and-forget UDP transport, one datagram per bundle.
#[derive(Debug)]
pub struct UdpSender {
    socket: UdpSocket,
    dest: SocketAddr,
}

impl UdpSender {
    pub fn new(host: &str, port: u16) -> io::Result<Self> {
        let dest = (host, port)
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("no address for {host}")))?;
        let bind: SocketAddr = if dest.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" }.parse().expect("literal address");
        let socket = UdpSocket::bind(bind)?;
        socket.set_nonblocking(true)?;
        Ok(UdpSender { socket, dest })
    }

    pub fn destination(&self) -> SocketAddr {
        self.dest
    }

    /// Sends one bundle. Socket failures are logged and returned; callers
    /// are expected to carry on.
    pub fn send(&self, bundle: &OscBundle) -> Result<(), TuioError> {
        let bytes = encode_bundle(bundle)?;
        if let Err(e) = self.socket.send_to(&bytes, self.dest) {
            log::warn!("tuio send to {} failed: {e}", self.dest);
        }
        Ok(())
    }
}
