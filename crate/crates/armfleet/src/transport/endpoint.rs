//! Blocking message endpoints: the same framed codec over a TCP socket or an
//! in-memory byte channel, so in-process clusters exercise the full wire
//! path.

use std::fmt;
use std::io::{ErrorKind, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use super::frame::{encode_frame, FrameDecoder};
use super::message::Message;
use super::TransportError;

const TCP_READ_CHUNK: usize = 1 << 14;

pub enum Endpoint {
    Tcp {
        stream: TcpStream,
        decoder: FrameDecoder,
    },
    Channel {
        tx: Sender<Vec<u8>>,
        rx: Receiver<Vec<u8>>,
        decoder: FrameDecoder,
    },
}

/// Two endpoints wired back to back through in-memory byte channels.
pub fn channel_pair() -> (Endpoint, Endpoint) {
    let (tx_a, rx_b) = mpsc::channel();
    let (tx_b, rx_a) = mpsc::channel();
    (
        Endpoint::Channel {
            tx: tx_a,
            rx: rx_a,
            decoder: FrameDecoder::new(),
        },
        Endpoint::Channel {
            tx: tx_b,
            rx: rx_b,
            decoder: FrameDecoder::new(),
        },
    )
}

impl fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Tcp { stream, .. } => f
                .debug_struct("Endpoint::Tcp")
                .field("peer", &stream.peer_addr().ok())
                .finish(),
            Endpoint::Channel { .. } => f.write_str("Endpoint::Channel"),
        }
    }
}

impl Endpoint {
    pub fn tcp(stream: TcpStream) -> Self {
        Endpoint::Tcp {
            stream,
            decoder: FrameDecoder::new(),
        }
    }

    pub fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        self.send_bytes(&encode_frame(msg))
    }

    /// Writes one pre-encoded frame; lets a broadcast encode once for many
    /// endpoints.
    pub fn send_bytes(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        match self {
            Endpoint::Tcp { stream, .. } => {
                stream.write_all(frame)?;
                stream.flush()?;
                Ok(())
            }
            Endpoint::Channel { tx, .. } => tx
                .send(frame.to_vec())
                .map_err(|_| TransportError::Closed),
        }
    }

    /// Blocks until one full message arrives; `timeout` of None waits
    /// indefinitely. A timeout leaves partially received bytes buffered, so
    /// a later call resumes the same frame.
    pub fn recv(&mut self, timeout: Option<Duration>) -> Result<Message, TransportError> {
        let deadline = timeout.map(|t| Instant::now() + t);
        loop {
            if let Some(msg) = self.decoder_mut().try_next()? {
                return Ok(msg);
            }
            let remaining = match deadline {
                None => None,
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return Err(TransportError::Timeout(timeout.unwrap()));
                    }
                    Some(d - now)
                }
            };
            match self {
                Endpoint::Tcp { stream, decoder } => {
                    stream.set_read_timeout(remaining)?;
                    let mut chunk = [0u8; TCP_READ_CHUNK];
                    match stream.read(&mut chunk) {
                        Ok(0) => return Err(TransportError::Closed),
                        Ok(n) => decoder.push(&chunk[..n]),
                        Err(e)
                            if e.kind() == ErrorKind::WouldBlock
                                || e.kind() == ErrorKind::TimedOut =>
                        {
                            return Err(TransportError::Timeout(timeout.unwrap()))
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                Endpoint::Channel { rx, decoder, .. } => {
                    let bytes = match remaining {
                        None => rx.recv().map_err(|_| TransportError::Closed)?,
                        Some(left) => rx.recv_timeout(left).map_err(|e| match e {
                            RecvTimeoutError::Timeout => {
                                TransportError::Timeout(timeout.unwrap())
                            }
                            RecvTimeoutError::Disconnected => TransportError::Closed,
                        })?,
                    };
                    decoder.push(&bytes);
                }
            }
        }
    }

    fn decoder_mut(&mut self) -> &mut FrameDecoder {
        match self {
            Endpoint::Tcp { decoder, .. } => decoder,
            Endpoint::Channel { decoder, .. } => decoder,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    #[test]
    fn channel_endpoints_exchange_messages() {
        let (mut a, mut b) = channel_pair();
        a.send(&Message::Ack { round: 4 }).unwrap();
        assert_eq!(
            b.recv(Some(Duration::from_secs(1))).unwrap(),
            Message::Ack { round: 4 }
        );
        b.send(&Message::Shutdown).unwrap();
        assert_eq!(a.recv(None).unwrap(), Message::Shutdown);
    }

    #[test]
    fn channel_recv_times_out_and_reports_closure() {
        let (mut a, b) = channel_pair();
        assert!(matches!(
            a.recv(Some(Duration::from_millis(20))),
            Err(TransportError::Timeout(_))
        ));
        drop(b);
        assert!(matches!(a.recv(None), Err(TransportError::Closed)));
    }

    #[test]
    fn tcp_endpoints_exchange_messages() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let client = std::thread::spawn(move || {
            let mut ep = Endpoint::tcp(TcpStream::connect(addr).unwrap());
            ep.send(&Message::Hello { requested_id: 1 }).unwrap();
            ep.recv(Some(Duration::from_secs(5))).unwrap()
        });
        let (stream, _) = listener.accept().unwrap();
        let mut server = Endpoint::tcp(stream);
        assert_eq!(
            server.recv(Some(Duration::from_secs(5))).unwrap(),
            Message::Hello { requested_id: 1 }
        );
        server.send(&Message::Ack { round: 0 }).unwrap();
        assert_eq!(client.join().unwrap(), Message::Ack { round: 0 });
    }
}
