//! Stdio provider protocol against the `pfm-echo-runner` test double.

use pfm_core::embedding::{echo_digest, EmbedError, EmbeddingKind, ExternalProvider, PatchEmbedder};
use pfm_core::synth::{texture_patch, CellKind};
use pfm_core::RgbRaster;

const RUNNER: &str = env!("CARGO_BIN_EXE_pfm-echo-runner");

fn patches(n: usize) -> Vec<RgbRaster> {
    let kinds = [CellKind::Stroma, CellKind::Nuclei, CellKind::Signature, CellKind::Background];
    (0..n).map(|i| texture_patch(kinds[i % 4], 16, 3, 16 * i as u32, 0)).collect()
}

fn provider(flags: &str, dim: usize) -> ExternalProvider {
    ExternalProvider::new(format!("'{RUNNER}' {flags}"), dim)
}

fn unit(v: &[f32]) -> Vec<f32> {
    let n = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    v.iter().map(|&x| (x as f64 / n) as f32).collect()
}

#[test]
fn task_rows_are_the_runner_rows_in_order() {
    let ps = patches(5);
    let mut p = provider("", 40);
    let rows = p.embed_batch(&ps, EmbeddingKind::Task).unwrap();
    assert_eq!(rows.len(), 5);
    for (row, patch) in rows.iter().zip(&ps) {
        assert_eq!(row, &echo_digest(&patch.to_png(), 40));
    }
    // a second batch over the same connection
    let again = p.embed_batch(&ps[..2], EmbeddingKind::Task).unwrap();
    assert_eq!(again, rows[..2].to_vec());
}

#[test]
fn aligned_rows_and_text_are_unit_normalised() {
    let ps = patches(3);
    let mut p = provider("", 33);
    let rows = p.embed_batch(&ps, EmbeddingKind::Aligned).unwrap();
    for (row, patch) in rows.iter().zip(&ps) {
        let want = unit(&echo_digest(&patch.to_png(), 33));
        for (a, b) in row.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }
    let t = p.embed_text("poorly differentiated carcinoma").unwrap();
    let want = unit(&echo_digest(b"poorly differentiated carcinoma", 33));
    for (a, b) in t.iter().zip(&want) {
        assert!((a - b).abs() <= 1e-6);
    }
}

#[test]
fn empty_batch_is_empty() {
    let mut p = provider("", 8);
    assert!(p.embed_batch(&[], EmbeddingKind::Task).unwrap().is_empty());
}

#[test]
fn granted_dimension_must_match() {
    let mut p = provider("--grant-dim 12", 16);
    match p.embed_batch(&patches(2), EmbeddingKind::Task) {
        Err(EmbedError::DimensionMismatch { expected: 16, got: 12 }) => {}
        other => panic!("expected DimensionMismatch, got {other:?}"),
    }
}

#[test]
fn short_reply_is_a_protocol_violation() {
    let mut p = provider("--wrong-count", 8);
    match p.embed_batch(&patches(3), EmbeddingKind::Task) {
        Err(EmbedError::ProtocolViolation(msg)) => assert!(msg.contains('3'), "{msg}"),
        other => panic!("expected ProtocolViolation, got {other:?}"),
    }
}

#[test]
fn corrupted_handshake_is_a_protocol_violation() {
    let mut p = provider("--bad-magic", 8);
    assert!(matches!(
        p.embed_batch(&patches(1), EmbeddingKind::Task),
        Err(EmbedError::ProtocolViolation(_))
    ));
}

#[test]
fn runner_exit_mid_stream_is_reported_as_crash() {
    let mut p = provider("--crash-after 1", 8);
    p.embed_batch(&patches(2), EmbeddingKind::Task).unwrap();
    assert!(matches!(
        p.embed_batch(&patches(2), EmbeddingKind::Task),
        Err(EmbedError::RunnerCrashed(_))
    ));
}
