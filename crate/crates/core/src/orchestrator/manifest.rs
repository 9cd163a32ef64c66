//! Cohort manifests.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{OrchestratorError, Result};
use crate::slide_io::{Grade, SlideRecord};

#[derive(Debug, Deserialize)]
struct Row {
    slide_id: String,
    patient_id: String,
    grade: String,
    image_path: String,
    magnification: String,
}

/// Validated manifest rows; relative image paths are resolved against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub path: PathBuf,
    pub records: Vec<SlideRecord>,
    /// SHA-256 of the manifest bytes, hex encoded.
    pub sha256: String,
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_magnification(s: &str) -> Option<f64> {
    let s = s.trim().trim_end_matches(['x', 'X']);
    let v = match s.split_once('/') {
        Some((n, d)) => n.trim().parse::<f64>().ok()? / d.trim().parse::<f64>().ok()?,
        None => s.parse().ok()?,
    };
    (v.is_finite() && v > 0.0).then_some(v)
}

/// Reads `slide_id,patient_id,grade,image_path,magnification`.
///
/// Rejects a missing header, an empty manifest, duplicate slide ids, empty
/// patient ids, unknown grades and non-positive magnifications.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    use sha2::Digest;
    let bytes = std::fs::read(path).map_err(|e| OrchestratorError::Manifest(format!("{}: {e}", path.display())))?;
    let bad = |line: usize, msg: String| OrchestratorError::Manifest(format!("{}:{line}: {msg}", path.display()));
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let headers = reader.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    for required in ["slide_id", "patient_id", "grade", "image_path", "magnification"] {
        if !headers.iter().any(|h| h == required) {
            return Err(bad(1, format!("missing column '{required}'")));
        }
    }
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| bad(line, e.to_string()))?;
        if row.slide_id.is_empty() {
            return Err(bad(line, "empty slide_id".into()));
        }
        if !seen.insert(row.slide_id.clone()) {
            return Err(bad(line, format!("duplicate slide_id '{}'", row.slide_id)));
        }
        if row.patient_id.is_empty() {
            return Err(bad(line, "empty patient_id".into()));
        }
        let grade: Grade = row.grade.parse().map_err(|e: String| bad(line, e))?;
        let base_magnification = parse_magnification(&row.magnification)
            .ok_or_else(|| bad(line, format!("invalid magnification '{}'", row.magnification)))?;
        let image = PathBuf::from(&row.image_path);
        records.push(SlideRecord {
            slide_id: row.slide_id,
            patient_id: row.patient_id,
            grade,
            image_path: if image.is_absolute() { image } else { base.join(image) },
            base_magnification,
        });
    }
    if records.is_empty() {
        return Err(OrchestratorError::Usage(format!("manifest {} lists no slides", path.display())));
    }
    Ok(Manifest {
        path: path.to_path_buf(),
        records,
        sha256: hex(&sha2::Sha256::digest(&bytes)),
    })
}
