//! `PFME` embedding files.
//!
//! Layout (little-endian):
//!
//! ```text
//! 0   4  magic "PFME"
//! 4   4  format_version (u32)
//! 8   4  dim (u32)
//! 12  4  n (u32)
//! 16  1  kind (0 = task, 1 = aligned)
//! 17  ..  n·dim f32 row-major payload
//! ```
//!
//! A JSON sidecar `<file>.json` carries `slide_id`, `model_id` and `coords`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingKind, EmbeddingMatrix, Result};

pub const EMBEDDING_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"PFME";
const HEADER_LEN: usize = 17;

#[derive(Serialize, Deserialize)]
struct Sidecar {
    slide_id: String,
    model_id: String,
    coords: Vec<[u32; 2]>,
}

/// Path of the JSON sidecar belonging to an embedding file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_embeddings(m: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let n = m.n_rows();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * n * m.dim);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&EMBEDDING_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(m.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.push(m.kind.as_byte());
    for v in m.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let sidecar = Sidecar {
        slide_id: m.slide_id.clone(),
        model_id: m.model_id.clone(),
        coords: m.coords.iter().map(|&(x, y)| [x, y]).collect(),
    };
    std::fs::write(path, buf)?;
    std::fs::write(sidecar_path(path), serde_json::to_vec(&sidecar)?)?;
    Ok(())
}

fn u32_at(buf: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(buf[off..off + 4].try_into().expect("4-byte slice"))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let buf = std::fs::read(path)?;
    if buf.len() < 4 || &buf[..4] != MAGIC {
        return Err(EmbedError::BadMagic);
    }
    if buf.len() < HEADER_LEN {
        return Err(EmbedError::TruncatedPayload {
            expected: HEADER_LEN,
            found: buf.len(),
        });
    }
    let version = u32_at(&buf, 4);
    if version != EMBEDDING_FORMAT_VERSION {
        return Err(EmbedError::InvalidHeader(format!("unsupported format version {version}")));
    }
    let dim = u32_at(&buf, 8) as usize;
    let n = u32_at(&buf, 12) as usize;
    let kind = EmbeddingKind::from_byte(buf[16])
        .ok_or_else(|| EmbedError::InvalidHeader(format!("unknown kind byte {}", buf[16])))?;
    let payload = &buf[HEADER_LEN..];
    let expected = 4 * n * dim;
    if payload.len() < expected {
        return Err(EmbedError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(EmbedError::InvalidHeader(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let sidecar: Sidecar = serde_json::from_slice(&std::fs::read(sidecar_path(path))?)?;
    if sidecar.coords.len() != n {
        return Err(EmbedError::SidecarMismatch {
            coords: sidecar.coords.len(),
            rows: n,
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")))
        .collect();
    EmbeddingMatrix::new(
        sidecar.slide_id,
        sidecar.model_id,
        kind,
        dim,
        data,
        sidecar.coords.into_iter().map(|[x, y]| (x, y)).collect(),
    )
}
