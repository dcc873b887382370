//! Newline-delimited JSON predictor protocol over stdin/stdout.
//!
//! Requests (one per line):
//!   {"op":"info"}
//!   {"op":"predict","images":[{"width":W,"height":H,"pixels_b64":"..."}]}
//!
//! Responses (one per line, in request order):
//!   {"class_count":C,"concurrency":"serial_only"|"concurrent_ok"}
//!   {"probs":[[...C floats...],...]}
//!
//! `pixels_b64` is base64 of row-major 8-bit gray values. Malformed requests
//! receive {"error":"..."} and the server keeps reading.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use anyhow::{bail, Context};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use tunescope_core::data::GrayImage;
use tunescope_core::predictors::{Concurrency, Predictor, ReferenceNet};

#[derive(Debug, Serialize, Deserialize)]
pub struct WireImage {
    pub width: usize,
    pub height: usize,
    pub pixels_b64: String,
}

impl WireImage {
    pub fn from_image(img: &GrayImage) -> Self {
        WireImage {
            width: img.width,
            height: img.height,
            pixels_b64: BASE64.encode(&img.pixels),
        }
    }

    pub fn to_image(&self) -> anyhow::Result<GrayImage> {
        let pixels = BASE64
            .decode(&self.pixels_b64)
            .context("pixels_b64 is not valid base64")?;
        GrayImage::new(self.width, self.height, pixels)
            .map_err(|e| anyhow::anyhow!("bad wire image: {e}"))
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Request {
    Info,
    Predict { images: Vec<WireImage> },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InfoResponse {
    pub class_count: usize,
    pub concurrency: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictResponse {
    probs: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ErrorResponse {
    error: String,
}

/// Serves a reference network over the protocol until stdin closes.
pub fn serve(net: &ReferenceNet) -> anyhow::Result<()> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Ok(Request::Info) => serde_json::to_string(&InfoResponse {
                class_count: net.class_count(),
                concurrency: "concurrent_ok".into(),
            })?,
            Ok(Request::Predict { images }) => match handle_predict(net, &images) {
                Ok(probs) => serde_json::to_string(&PredictResponse { probs })?,
                Err(e) => serde_json::to_string(&ErrorResponse {
                    error: e.to_string(),
                })?,
            },
            Err(e) => serde_json::to_string(&ErrorResponse {
                error: format!("bad request: {e}"),
            })?,
        };
        writeln!(out, "{reply}")?;
        out.flush()?;
    }
    Ok(())
}

fn handle_predict(net: &ReferenceNet, images: &[WireImage]) -> anyhow::Result<Vec<Vec<f64>>> {
    let imgs: Vec<GrayImage> = images
        .iter()
        .map(|w| w.to_image())
        .collect::<anyhow::Result<_>>()?;
    Ok(net.predict(&imgs)?)
}

struct ChildIo {
    child: Child,
    stdin: std::process::ChildStdin,
    stdout: BufReader<std::process::ChildStdout>,
}

/// A black-box predictor living in a child process, attached over the
/// protocol. Requests are serialized through a mutex, honoring serial_only
/// backends.
pub struct SubprocessPredictor {
    io: Mutex<ChildIo>,
    class_count: usize,
    concurrency: Concurrency,
}

impl SubprocessPredictor {
    /// Spawns `command` through `sh -c` and performs the info handshake.
    pub fn spawn(command: &str) -> anyhow::Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .with_context(|| format!("failed to spawn predictor command: {command}"))?;
        let stdin = child.stdin.take().context("predictor stdin unavailable")?;
        let stdout = BufReader::new(child.stdout.take().context("predictor stdout unavailable")?);
        let mut io = ChildIo {
            child,
            stdin,
            stdout,
        };

        let info: InfoResponse = round_trip(&mut io, &serde_json::json!({"op": "info"}))
            .context("info handshake failed")?;
        let concurrency = match info.concurrency.as_str() {
            "concurrent_ok" => Concurrency::ConcurrentOk,
            "serial_only" => Concurrency::SerialOnly,
            other => bail!("unknown concurrency mode '{other}'"),
        };
        Ok(SubprocessPredictor {
            io: Mutex::new(io),
            class_count: info.class_count,
            concurrency,
        })
    }
}

fn round_trip<T: for<'de> Deserialize<'de>>(
    io: &mut ChildIo,
    request: &impl Serialize,
) -> anyhow::Result<T> {
    let line = serde_json::to_string(request)?;
    writeln!(io.stdin, "{line}")?;
    io.stdin.flush()?;
    let mut reply = String::new();
    let n = io.stdout.read_line(&mut reply)?;
    if n == 0 {
        bail!("predictor closed its output");
    }
    if let Ok(err) = serde_json::from_str::<ErrorResponse>(&reply) {
        bail!("predictor error: {}", err.error);
    }
    Ok(serde_json::from_str(&reply)?)
}

impl Predictor for SubprocessPredictor {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn concurrency(&self) -> Concurrency {
        self.concurrency
    }

    fn predict(&self, images: &[GrayImage]) -> tunescope_core::Result<Vec<Vec<f64>>> {
        let wire: Vec<WireImage> = images.iter().map(WireImage::from_image).collect();
        let request = serde_json::json!({"op": "predict", "images": wire});
        let mut io = self.io.lock().expect("predictor mutex poisoned");
        let response: PredictResponse = round_trip(&mut io, &request)
            .map_err(|e| tunescope_core::Error::invalid(format!("subprocess predictor: {e}")))?;
        Ok(response.probs)
    }
}

impl Drop for SubprocessPredictor {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}
