//! Client for external predictors: a line transport (subprocess stdio or
//! TCP) plus the protocol session logic. Strict request/response with one
//! in-flight request; any protocol violation poisons the session so later
//! calls fail fast instead of desynchronizing.

use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use super::protocol::{
    decode_f32_b64, encode_f32_b64, parse_server_line, to_line, ClientMessage, ServerMessage,
};
use super::{check_request, softmax, Predictor, PredictorDescriptor, PredictorOutput};
use crate::error::{Error, Result, TransportKind};
use crate::imaging::Image;

/// One attempt to read a line within a deadline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecvOutcome {
    Line(String),
    Eof,
    TimedOut,
}

/// Byte-stream-agnostic line channel. Implementations must deliver lines in
/// order and report end-of-stream exactly once.
pub trait LineTransport: Send {
    fn send_line(&mut self, line: &str) -> Result<()>;
    fn recv_line(&mut self, timeout: Duration) -> Result<RecvOutcome>;
}

/// Transport over any reader/writer pair: a background thread pumps lines
/// into a channel so receives can time out without tearing down the stream.
pub struct ChannelTransport {
    writer: Box<dyn Write + Send>,
    lines: mpsc::Receiver<std::io::Result<String>>,
    child: Option<Child>,
    /// Extra handle to force-close a socket on drop; the reader thread's
    /// clone would otherwise hold the connection open past the writer.
    socket: Option<TcpStream>,
}

impl ChannelTransport {
    pub fn new<R, W>(reader: R, writer: W) -> Self
    where
        R: std::io::Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut lines = BufReader::new(reader).lines();
            loop {
                match lines.next() {
                    Some(Ok(line)) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Some(Err(e)) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                    None => break,
                }
            }
            // Dropping tx signals EOF to the receiver.
        });
        Self { writer: Box::new(writer), lines: rx, child: None, socket: None }
    }

    /// Spawns `argv[0]` with the remaining arguments, speaking the protocol
    /// over its standard streams. No shell interpretation. The child's
    /// stderr passes through for diagnostics.
    pub fn spawn_subprocess(argv: &[String]) -> Result<Self> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| Error::invalid("empty predictor command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| {
                Error::transport(
                    TransportKind::ConnectionLost,
                    format!("failed to spawn {program:?}: {e}"),
                )
            })?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let mut transport = Self::new(stdout, stdin);
        transport.child = Some(child);
        Ok(transport)
    }

    /// Dials a TCP endpoint, e.g. `127.0.0.1:7878`.
    pub fn connect_tcp(addr: &str, connect_timeout: Duration) -> Result<Self> {
        let resolved = addr
            .to_socket_addrs()
            .map_err(|e| {
                Error::transport(
                    TransportKind::ConnectionLost,
                    format!("cannot resolve {addr:?}: {e}"),
                )
            })?
            .next()
            .ok_or_else(|| {
                Error::transport(TransportKind::ConnectionLost, format!("no address for {addr:?}"))
            })?;
        let stream = TcpStream::connect_timeout(&resolved, connect_timeout).map_err(|e| {
            Error::transport(
                TransportKind::ConnectionLost,
                format!("cannot connect to {addr}: {e}"),
            )
        })?;
        stream.set_nodelay(true).ok();
        let read_half = stream.try_clone().map_err(Error::Io)?;
        let shutdown_handle = stream.try_clone().map_err(Error::Io)?;
        let mut transport = Self::new(read_half, stream);
        transport.socket = Some(shutdown_handle);
        Ok(transport)
    }
}

impl Drop for ChannelTransport {
    fn drop(&mut self) {
        if let Some(socket) = &self.socket {
            let _ = socket.shutdown(Shutdown::Both);
        }
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl LineTransport for ChannelTransport {
    fn send_line(&mut self, line: &str) -> Result<()> {
        let write = (|| {
            self.writer.write_all(line.as_bytes())?;
            self.writer.write_all(b"\n")?;
            self.writer.flush()
        })();
        write.map_err(|e| {
            Error::transport(TransportKind::ConnectionLost, format!("write failed: {e}"))
        })
    }

    fn recv_line(&mut self, timeout: Duration) -> Result<RecvOutcome> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(RecvOutcome::Line(line)),
            Ok(Err(e)) => Err(Error::transport(
                TransportKind::ConnectionLost,
                format!("read failed: {e}"),
            )),
            Err(mpsc::RecvTimeoutError::Timeout) => Ok(RecvOutcome::TimedOut),
            Err(mpsc::RecvTimeoutError::Disconnected) => Ok(RecvOutcome::Eof),
        }
    }
}

/// Session timeouts.
#[derive(Debug, Clone, Copy)]
pub struct ExternalOptions {
    pub handshake_timeout: Duration,
    pub response_timeout: Duration,
}

impl Default for ExternalOptions {
    fn default() -> Self {
        Self {
            handshake_timeout: Duration::from_secs(10),
            response_timeout: Duration::from_secs(120),
        }
    }
}

/// Predictor backed by a protocol session. The descriptor comes from the
/// server's `hello`; every `predict` is one `forward`/`scores` round trip
/// with ids echoed. Logits are passed through bit-faithfully.
pub struct ExternalPredictor {
    transport: Box<dyn LineTransport>,
    descriptor: PredictorDescriptor,
    response_timeout: Duration,
    next_id: u64,
    poisoned: bool,
}

impl ExternalPredictor {
    /// Reads the `hello` handshake and builds the client.
    pub fn connect(
        mut transport: Box<dyn LineTransport>,
        options: &ExternalOptions,
    ) -> Result<Self> {
        let line = match transport.recv_line(options.handshake_timeout)? {
            RecvOutcome::Line(line) => line,
            RecvOutcome::Eof => {
                return Err(Error::transport(
                    TransportKind::ConnectionLost,
                    "endpoint closed before hello",
                ))
            }
            RecvOutcome::TimedOut => {
                return Err(Error::transport(
                    TransportKind::HandshakeTimeout,
                    format!("no hello within {:?}", options.handshake_timeout),
                ))
            }
        };
        let descriptor = match parse_server_line(&line)? {
            ServerMessage::Hello { name, num_classes, input, supports_gradient } => {
                PredictorDescriptor {
                    name,
                    num_classes,
                    input_height: input.h,
                    input_width: input.w,
                    input_channels: input.c,
                    supports_gradient,
                }
            }
            other => {
                return Err(Error::transport(
                    TransportKind::MalformedMessage,
                    format!("expected hello, got {other:?}"),
                ))
            }
        };
        descriptor.validate()?;
        Ok(Self {
            transport,
            descriptor,
            response_timeout: options.response_timeout,
            next_id: 0,
            poisoned: false,
        })
    }

    pub fn spawn_subprocess(argv: &[String], options: &ExternalOptions) -> Result<Self> {
        let transport = ChannelTransport::spawn_subprocess(argv)?;
        Self::connect(Box::new(transport), options)
    }

    pub fn dial_tcp(addr: &str, options: &ExternalOptions) -> Result<Self> {
        let transport = ChannelTransport::connect_tcp(addr, options.handshake_timeout)?;
        Self::connect(Box::new(transport), options)
    }

    fn poison<T>(&mut self, err: Error) -> Result<T> {
        self.poisoned = true;
        Err(err)
    }
}

impl Predictor for ExternalPredictor {
    fn descriptor(&self) -> &PredictorDescriptor {
        &self.descriptor
    }

    fn predict(
        &mut self,
        image: &Image,
        target: Option<usize>,
        want_gradient: bool,
    ) -> Result<PredictorOutput> {
        if self.poisoned {
            return Err(Error::transport(
                TransportKind::ConnectionLost,
                "session aborted by an earlier protocol violation",
            ));
        }
        check_request(&self.descriptor, image, target, want_gradient)?;

        let id = self.next_id;
        self.next_id += 1;
        let request = ClientMessage::Forward {
            id,
            image_f32_b64: encode_f32_b64(image.data()),
            target: target.map(|t| t as u64),
            want_gradient,
        };
        if let Err(e) = self.transport.send_line(&to_line(&request)?) {
            return self.poison(e);
        }

        let line = match self.transport.recv_line(self.response_timeout) {
            Ok(RecvOutcome::Line(line)) => line,
            Ok(RecvOutcome::Eof) => {
                return self.poison(Error::transport(
                    TransportKind::ConnectionLost,
                    "endpoint closed mid-session",
                ))
            }
            Ok(RecvOutcome::TimedOut) => {
                return self.poison(Error::transport(
                    TransportKind::ResponseTimeout,
                    format!("no reply to request {id} within {:?}", self.response_timeout),
                ))
            }
            Err(e) => return self.poison(e),
        };

        let message = match parse_server_line(&line) {
            Ok(m) => m,
            Err(e) => return self.poison(e),
        };
        match message {
            ServerMessage::Error { id: reply_id, message } => {
                if reply_id != id {
                    return self.poison(Error::transport(
                        TransportKind::MalformedMessage,
                        format!("error reply for id {reply_id}, expected {id}"),
                    ));
                }
                // A well-formed error reply is a legitimate answer; the
                // session stays usable.
                Err(Error::transport(TransportKind::RemoteError, message))
            }
            ServerMessage::Scores { id: reply_id, scores, gradient_f32_b64 } => {
                if reply_id != id {
                    return self.poison(Error::transport(
                        TransportKind::MalformedMessage,
                        format!("scores reply for id {reply_id}, expected {id}"),
                    ));
                }
                if scores.len() != self.descriptor.num_classes {
                    return self.poison(Error::transport(
                        TransportKind::ScoreLengthMismatch,
                        format!(
                            "got {} scores, descriptor declares {}",
                            scores.len(),
                            self.descriptor.num_classes
                        ),
                    ));
                }
                if scores.iter().any(|s| !s.is_finite()) {
                    return self.poison(Error::transport(
                        TransportKind::MalformedMessage,
                        "non-finite score",
                    ));
                }
                let input_gradient = match (want_gradient, gradient_f32_b64) {
                    (true, Some(payload)) => {
                        let grad = match decode_f32_b64(&payload) {
                            Ok(g) => g,
                            Err(e) => return self.poison(e),
                        };
                        if grad.len() != self.descriptor.input_len() {
                            return self.poison(Error::transport(
                                TransportKind::MalformedMessage,
                                format!(
                                    "gradient length {} does not match input {}",
                                    grad.len(),
                                    self.descriptor.input_len()
                                ),
                            ));
                        }
                        Some(grad)
                    }
                    (true, None) => {
                        return self.poison(Error::transport(
                            TransportKind::MalformedMessage,
                            "gradient requested but absent from reply",
                        ))
                    }
                    // An unrequested gradient is surplus data; drop it.
                    (false, _) => None,
                };
                let probabilities = softmax(&scores);
                Ok(PredictorOutput { scores, probabilities, input_gradient })
            }
            ServerMessage::Hello { .. } => self.poison(Error::transport(
                TransportKind::MalformedMessage,
                "unexpected second hello",
            )),
        }
    }
}
