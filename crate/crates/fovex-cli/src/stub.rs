//! The stub-predictor command: serves a builtin predictor over the wire
//! protocol on stdio or TCP, as a conformance target and demo endpoint.
//!
//! Semantic violations (bad payload, bad target) get an `error` reply and
//! the session continues; an unparseable line ends the session.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};

use fovex::imaging::Image;
use fovex::predictor::protocol::{
    decode_f32_b64, encode_f32_b64, parse_client_line, to_line, ClientMessage, InputShape,
    ServerMessage,
};
use fovex::predictor::{BuiltinOptions, Predictor, PredictorRegistry};
use fovex::{Error, Result};

pub struct StubParams {
    pub kind: String,
    pub listen: String,
    pub options: BuiltinOptions,
}

fn build(kind: &str, options: &BuiltinOptions) -> Result<Box<dyn Predictor>> {
    PredictorRegistry::with_builtins().build(kind, options)
}

fn hello(predictor: &dyn Predictor) -> ServerMessage {
    let d = predictor.descriptor();
    ServerMessage::Hello {
        name: d.name.clone(),
        num_classes: d.num_classes,
        input: InputShape { h: d.input_height, w: d.input_width, c: d.input_channels },
        supports_gradient: d.supports_gradient,
    }
}

fn answer(predictor: &mut dyn Predictor, message: ClientMessage) -> ServerMessage {
    let ClientMessage::Forward { id, image_f32_b64, target, want_gradient } = message;
    let d = predictor.descriptor().clone();
    let reply = (|| -> Result<ServerMessage> {
        let values = decode_f32_b64(&image_f32_b64)?;
        let expected = d.input_height * d.input_width * d.input_channels;
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "payload has {} values, input shape wants {expected}",
                values.len()
            )));
        }
        let image = Image::new(d.input_height, d.input_width, d.input_channels, values)?;
        let out = predictor.predict(&image, target.map(|t| t as usize), want_gradient)?;
        Ok(ServerMessage::Scores {
            id,
            scores: out.scores,
            gradient_f32_b64: out.input_gradient.map(|g| encode_f32_b64(&g)),
        })
    })();
    reply.unwrap_or_else(|e| ServerMessage::Error { id, message: e.to_string() })
}

/// Runs one session: hello first, then one reply per parseable line.
/// Returns when the peer closes the stream or sends a malformed line.
pub fn serve_session(
    predictor: &mut dyn Predictor,
    reader: impl BufRead,
    mut writer: impl Write,
) -> Result<()> {
    let mut send = |msg: &ServerMessage| -> Result<()> {
        let line = to_line(msg)?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(())
    };
    send(&hello(predictor))?;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let message = match parse_client_line(&line) {
            Ok(m) => m,
            // Malformed line: the session is over, by contract.
            Err(_) => return Ok(()),
        };
        send(&answer(predictor, message))?;
    }
    Ok(())
}

pub fn cmd_stub(p: &StubParams) -> Result<()> {
    if p.listen == "stdio" {
        let mut predictor = build(&p.kind, &p.options)?;
        let stdin = std::io::stdin();
        let stdout = std::io::stdout();
        return serve_session(predictor.as_mut(), stdin.lock(), stdout.lock());
    }
    let addr = p.listen.strip_prefix("tcp:").ok_or_else(|| {
        Error::invalid(format!("--listen wants stdio or tcp:<host:port>, got {:?}", p.listen))
    })?;
    let listener = TcpListener::bind(addr)?;
    // Announce the bound address so callers using port 0 can find it.
    println!("listening {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(_) => continue,
        };
        let kind = p.kind.clone();
        let options = p.options;
        std::thread::spawn(move || {
            if let Ok(mut predictor) = build(&kind, &options) {
                let _ = serve_conn(predictor.as_mut(), stream);
            }
        });
    }
    Ok(())
}

fn serve_conn(predictor: &mut dyn Predictor, stream: TcpStream) -> Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    serve_session(predictor, reader, stream)
}
