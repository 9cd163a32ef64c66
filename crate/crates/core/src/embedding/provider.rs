//! External embedding runners over stdio.
//!
//! A runner is any program started as `sh -c <command>` that speaks the
//! following little-endian protocol on stdin/stdout:
//!
//! ```text
//! handshake   core → "PFMP\x01" u32 dim_requested
//!             runner → "PFMP\x01" u32 dim_granted
//! batch       core → u8 1, u32 count, count × (u32 len, len bytes of PNG)
//!             runner → u32 count, count·dim × f32
//! text        core → u8 2, u32 len, len bytes of UTF-8
//!             runner → u32 1, dim × f32
//! ```
//!
//! The embedding kind is passed in the `PFM_EMBED_KIND` environment variable
//! (`task` or `aligned`); a provider keeps one runner per kind. Aligned rows
//! are L2-normalised on receipt. After any error the offending runner is
//! killed and a fresh one is spawned on next use.

use std::io::{BufReader, BufWriter, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use sha2::{Digest, Sha256};

use super::{EmbedError, EmbeddingKind, PatchEmbedder, Result};
use crate::raster::RgbRaster;

pub const PROTOCOL_MAGIC: &[u8; 5] = b"PFMP\x01";
const TAG_BATCH: u8 = 1;
const TAG_TEXT: u8 = 2;

/// The echo runner's embedding of `data`: the first `dim` bytes of the
/// stream `sha256(data ‖ 0u32) ‖ sha256(data ‖ 1u32) ‖ …`, each as a float.
pub fn echo_digest(data: &[u8], dim: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(dim);
    let mut block = 0u32;
    while out.len() < dim {
        let mut h = Sha256::new();
        h.update(data);
        h.update(block.to_le_bytes());
        let d = h.finalize();
        out.extend(d.iter().take(dim - out.len()).map(|&b| b as f32));
        block += 1;
    }
    out
}

struct Runner {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl Runner {
    fn spawn(command: &str, kind: EmbeddingKind, dim: usize) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .env("PFM_EMBED_KIND", kind.as_str())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut r = Runner { child, stdin, stdout };
        match r.handshake(dim) {
            Ok(()) => Ok(r),
            Err(e) => {
                r.kill();
                Err(e)
            }
        }
    }

    fn handshake(&mut self, dim: usize) -> Result<()> {
        self.send(|w| {
            w.write_all(PROTOCOL_MAGIC)?;
            w.write_all(&(dim as u32).to_le_bytes())
        })?;
        let mut magic = [0u8; 5];
        self.read_exact(&mut magic)?;
        if &magic != PROTOCOL_MAGIC {
            return Err(EmbedError::ProtocolViolation(format!("bad handshake magic {magic:?}")));
        }
        let granted = self.read_u32()? as usize;
        if granted != dim {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                got: granted,
            });
        }
        Ok(())
    }

    fn send(&mut self, f: impl FnOnce(&mut BufWriter<ChildStdin>) -> std::io::Result<()>) -> Result<()> {
        f(&mut self.stdin)
            .and_then(|_| self.stdin.flush())
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::BrokenPipe => EmbedError::RunnerCrashed("runner closed its input".into()),
                _ => EmbedError::Io(e),
            })
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.stdout.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => EmbedError::RunnerCrashed("runner output ended early".into()),
            _ => EmbedError::Io(e),
        })
    }

    fn read_u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_rows(&mut self, expected: usize, dim: usize) -> Result<Vec<Vec<f32>>> {
        let count = self.read_u32()? as usize;
        if count != expected {
            return Err(EmbedError::ProtocolViolation(format!(
                "runner returned {count} rows for {expected} inputs"
            )));
        }
        let mut buf = vec![0u8; 4 * count * dim];
        self.read_exact(&mut buf)?;
        let floats: Vec<f32> = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")))
            .collect();
        if let Some(i) = floats.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::ProtocolViolation(format!(
                "non-finite value at row {}, column {}",
                i / dim,
                i % dim
            )));
        }
        Ok(floats.chunks_exact(dim).map(<[f32]>::to_vec).collect())
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Runner {
    fn drop(&mut self) {
        self.kill();
    }
}

/// Embeds through an external runner process.
pub struct ExternalProvider {
    command: String,
    dim: usize,
    runners: [Option<Runner>; 2],
}

impl ExternalProvider {
    /// Creates a provider; runners are spawned lazily on first use.
    pub fn new(command: impl Into<String>, dim: usize) -> Self {
        Self {
            command: command.into(),
            dim,
            runners: [None, None],
        }
    }

    /// Spawns the runner for `kind` now, surfacing handshake errors early.
    pub fn connect(&mut self, kind: EmbeddingKind) -> Result<()> {
        self.runner(kind).map(|_| ())
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn runner(&mut self, kind: EmbeddingKind) -> Result<&mut Runner> {
        let slot = &mut self.runners[kind.as_byte() as usize];
        if slot.is_none() {
            *slot = Some(Runner::spawn(&self.command, kind, self.dim)?);
        }
        Ok(slot.as_mut().expect("runner just spawned"))
    }

    /// Runs `f` against the runner for `kind`, discarding the runner on error.
    fn with_runner<T>(&mut self, kind: EmbeddingKind, f: impl FnOnce(&mut Runner, usize) -> Result<T>) -> Result<T> {
        let dim = self.dim;
        let out = f(self.runner(kind)?, dim);
        if out.is_err() {
            self.runners[kind.as_byte() as usize] = None;
        }
        out
    }
}

fn normalize_f32(v: &mut [f32]) -> Result<()> {
    let w: Vec<f64> = v.iter().map(|&x| x as f64).collect();
    let n = super::l2_normalize(&w)?;
    v.iter_mut().zip(n).for_each(|(d, s)| *d = s as f32);
    Ok(())
}

impl PatchEmbedder for ExternalProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&mut self, patches: &[RgbRaster], kind: EmbeddingKind) -> Result<Vec<Vec<f32>>> {
        let encoded: Vec<Vec<u8>> = patches.iter().map(RgbRaster::to_png).collect();
        let mut rows = self.with_runner(kind, |r, dim| {
            r.send(|w| {
                w.write_all(&[TAG_BATCH])?;
                w.write_all(&(encoded.len() as u32).to_le_bytes())?;
                for png in &encoded {
                    w.write_all(&(png.len() as u32).to_le_bytes())?;
                    w.write_all(png)?;
                }
                Ok(())
            })?;
            r.read_rows(encoded.len(), dim)
        })?;
        if kind == EmbeddingKind::Aligned {
            for row in &mut rows {
                normalize_f32(row)?;
            }
        }
        Ok(rows)
    }

    fn embed_text(&mut self, prompt: &str) -> Result<Vec<f32>> {
        let bytes = prompt.as_bytes();
        let mut rows = self.with_runner(EmbeddingKind::Aligned, |r, dim| {
            r.send(|w| {
                w.write_all(&[TAG_TEXT])?;
                w.write_all(&(bytes.len() as u32).to_le_bytes())?;
                w.write_all(bytes)
            })?;
            r.read_rows(1, dim)
        })?;
        let mut v = rows.pop().expect("one row");
        normalize_f32(&mut v)?;
        Ok(v)
    }
}
