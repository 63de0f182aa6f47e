//! External classifier oracle over a byte-stream protocol.
//!
//! Request frame: 4-byte big-endian length `N`, then `N` bytes of PNG
//! (8-bit RGB). Reply frame: 4-byte big-endian class count `C`, then `C`
//! little-endian `f64` logits. One reply per request, in order.
//!
//! A reply that does not arrive within the timeout, a short read, a zero or
//! oversized count, a count that differs from the configured class count, or
//! a non-finite logit is a protocol error. After any protocol error the
//! subprocess is killed and the oracle refuses further queries.
//!
//! Calls on one [`ExternalOracle`] are serialized; run several oracle
//! instances to evaluate batches in parallel.

use std::io::{BufReader, BufWriter, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use crate::classifier::{ImageClassifier, Logits};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Upper bound on frame sizes accepted from either side.
pub const MAX_CLASSES: u32 = 1 << 16;
pub const MAX_REQUEST_BYTES: u32 = 1 << 28;

pub fn write_request<W: Write>(w: &mut W, png: &[u8]) -> std::io::Result<()> {
    w.write_all(&(png.len() as u32).to_be_bytes())?;
    w.write_all(png)?;
    w.flush()
}

/// Reads one request; `Ok(None)` on a clean end of stream.
pub fn read_request<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    if !read_exact_or_eof(r, &mut len)? {
        return Ok(None);
    }
    let n = u32::from_be_bytes(len);
    if n == 0 || n > MAX_REQUEST_BYTES {
        return Err(Error::OracleProtocol(format!("request length {n} out of range")));
    }
    let mut buf = vec![0u8; n as usize];
    r.read_exact(&mut buf)
        .map_err(|e| Error::OracleProtocol(format!("short request body: {e}")))?;
    Ok(Some(buf))
}

pub fn write_reply<W: Write>(w: &mut W, logits: &[f64]) -> std::io::Result<()> {
    w.write_all(&(logits.len() as u32).to_be_bytes())?;
    for l in logits {
        w.write_all(&l.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_reply<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let mut head = [0u8; 4];
    r.read_exact(&mut head)
        .map_err(|e| Error::OracleProtocol(format!("missing reply header: {e}")))?;
    let c = u32::from_be_bytes(head);
    if c == 0 || c > MAX_CLASSES {
        return Err(Error::OracleProtocol(format!("reply class count {c} out of range")));
    }
    let mut body = vec![0u8; c as usize * 8];
    r.read_exact(&mut body)
        .map_err(|e| Error::OracleProtocol(format!("short reply body: {e}")))?;
    let logits: Vec<f64> = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::OracleProtocol("reply contains non-finite logits".into()));
    }
    Ok(logits)
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(Error::OracleProtocol("stream ended inside a frame header".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}

/// Answers requests from `input` with `classifier` until end of stream.
pub fn serve<R: Read, W: Write>(classifier: &dyn ImageClassifier, input: R, output: W) -> Result<()> {
    let mut input = BufReader::new(input);
    let mut output = BufWriter::new(output);
    while let Some(png) = read_request(&mut input)? {
        let image = ImageBuffer::from_png(&png)?;
        let logits = classifier.predict(&image)?;
        write_reply(&mut output, logits.values())?;
    }
    Ok(())
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    replies: Receiver<Result<Vec<f64>>>,
}

impl Session {
    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Subprocess classifier speaking the oracle protocol on stdin/stdout.
pub struct ExternalOracle {
    session: Mutex<Option<Session>>,
    class_count: usize,
    input_size: (usize, usize),
    timeout: Duration,
}

impl ExternalOracle {
    pub fn spawn(
        program: &str,
        args: &[String],
        class_count: usize,
        input_size: (usize, usize),
        timeout: Duration,
    ) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::OracleProtocol(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let reply = read_reply(&mut reader);
                let failed = reply.is_err();
                if tx.send(reply).is_err() || failed {
                    break;
                }
            }
        });
        Ok(ExternalOracle {
            session: Mutex::new(Some(Session {
                child,
                stdin,
                replies: rx,
            })),
            class_count,
            input_size,
            timeout,
        })
    }

    fn exchange(&self, session: &mut Session, png: &[u8]) -> Result<Vec<f64>> {
        write_request(&mut session.stdin, png)
            .map_err(|e| Error::OracleProtocol(format!("cannot send request: {e}")))?;
        let logits = match session.replies.recv_timeout(self.timeout) {
            Ok(reply) => reply?,
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::OracleProtocol(format!("no reply within {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::OracleProtocol("oracle closed its output".into()))
            }
        };
        if logits.len() != self.class_count {
            return Err(Error::OracleProtocol(format!(
                "expected {} logits, got {}",
                self.class_count,
                logits.len()
            )));
        }
        Ok(logits)
    }
}

impl ImageClassifier for ExternalOracle {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict(&self, image: &ImageBuffer) -> Result<Logits> {
        let png = image.resize_and_crop(self.input_size.0, self.input_size.1)?.to_png()?;
        let mut guard = self
            .session
            .lock()
            .map_err(|_| Error::Internal("oracle lock poisoned".into()))?;
        let session = guard
            .as_mut()
            .ok_or_else(|| Error::OracleProtocol("oracle is unusable after an earlier failure".into()))?;
        match self.exchange(session, &png) {
            Ok(logits) => Logits::new(logits),
            Err(e) => {
                if let Some(s) = guard.take() {
                    s.kill();
                }
                Err(e)
            }
        }
    }
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        if let Ok(mut guard) = self.session.lock() {
            if let Some(s) = guard.take() {
                drop(s.stdin);
                let mut child = s.child;
                let _ = child.kill();
                let _ = child.wait();
            }
        }
    }
}
