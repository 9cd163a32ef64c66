//! Slide-level stages: preprocess, embed and zero-shot scoring.

use serde::{Deserialize, Serialize};

use super::layout::ensure_parent;
use super::{
    parallel_map, parallel_map_with, require_any, write_failures, write_json, Command, OrchestratorError, Pipeline,
    Result, StageReport,
};
use crate::embedding::{read_embeddings, write_embeddings, EmbeddingKind, EmbeddingMatrix, PatchEmbedder, TextEmbedding};
use crate::slide_io::{compute_patch_grid, extract_patch, open_slide_with_budget, segment_tissue, SlideRecord, TissueMask};
use crate::zeroshot::{score_slide, write_scores_csv, ClassVectors, SlideScore};

/// Records failures and turns "every slide failed" into an error.
pub(super) fn finish<T>(p: &Pipeline, command: Command, results: &[Result<T>]) -> Result<StageReport> {
    let failures: Vec<(String, String)> = p
        .manifest
        .records
        .iter()
        .zip(results)
        .filter_map(|(r, res)| res.as_ref().err().map(|e| (r.slide_id.clone(), e.to_string())))
        .collect();
    for (id, e) in &failures {
        log::warn!("{}: slide {id} failed: {e}", command.as_str());
    }
    write_failures(&p.layout.failures(command.as_str()), &failures)?;
    if !results.is_empty() && failures.len() == results.len() {
        return Err(OrchestratorError::AllFailed {
            stage: command.as_str().into(),
            failed: failures.len(),
        });
    }
    Ok(StageReport {
        command,
        items: results.len(),
        failed: failures.len(),
    })
}

fn preprocess_slide(p: &Pipeline, r: &SlideRecord) -> Result<TissueMask> {
    let cfg = &p.config;
    let mut handle = open_slide_with_budget(&r.image_path, cfg.chunk_budget)?;
    let grid = compute_patch_grid(&handle, cfg.patch_size, cfg.target_size)?;
    let mask = segment_tissue(&mut handle, &grid)?.with_slide_id(&r.slide_id);
    mask.write_json(&p.layout.mask(&r.slide_id))?;
    log::debug!(
        "{}: kept {} of {} patches (peak chunk cache {} bytes)",
        r.slide_id,
        mask.kept_count(),
        grid.len(),
        handle.peak_cached_bytes()
    );
    Ok(mask)
}

/// Tissue masks for every slide plus `masks/status.csv`.
pub(super) fn preprocess(p: &Pipeline) -> Result<StageReport> {
    std::fs::create_dir_all(p.layout.masks_dir())?;
    let results = parallel_map(&p.manifest.records, p.workers(), |_, r| preprocess_slide(p, r));
    let mut w = csv::Writer::from_path(p.layout.masks_dir().join("status.csv"))?;
    w.write_record(["slide_id", "status", "patches", "kept", "threshold", "degenerate", "error"])?;
    for (r, res) in p.manifest.records.iter().zip(&results) {
        match res {
            Ok(m) => w.write_record([
                r.slide_id.clone(),
                "ok".into(),
                m.keep.len().to_string(),
                m.kept_count().to_string(),
                m.threshold.to_string(),
                m.degenerate.to_string(),
                String::new(),
            ])?,
            Err(e) => w.write_record([
                r.slide_id.as_str(),
                "failed",
                "",
                "",
                "",
                "",
                e.to_string().as_str(),
            ])?,
        }
    }
    w.flush()?;
    p.write_run_meta(Command::Preprocess, &p.layout.masks_dir())?;
    finish(p, Command::Preprocess, &results)
}

pub(super) fn read_mask(p: &Pipeline, slide: &str) -> Result<TissueMask> {
    let path = p.layout.mask(slide);
    if !path.exists() {
        return Err(OrchestratorError::MissingUpstreamArtifact { path });
    }
    let mask = TissueMask::read_json(&path)?;
    if mask.patch_size != p.config.patch_size || mask.target_size != p.config.target_size {
        return Err(OrchestratorError::Usage(format!(
            "{} was computed with patch {}/{}, config asks for {}/{}",
            path.display(),
            mask.patch_size,
            mask.target_size,
            p.config.patch_size,
            p.config.target_size
        )));
    }
    Ok(mask)
}

fn embed_slide(p: &Pipeline, embedder: &mut dyn PatchEmbedder, r: &SlideRecord) -> Result<usize> {
    let cfg = &p.config;
    let mask = read_mask(p, &r.slide_id)?;
    let coords = mask.kept_coords();
    let mut handle = open_slide_with_budget(&r.image_path, cfg.chunk_budget)?;
    let mut rows: Vec<Vec<Vec<f32>>> = vec![Vec::with_capacity(coords.len()); cfg.kinds.len()];
    for batch in coords.chunks(cfg.embed_batch) {
        let patches = batch
            .iter()
            .map(|&c| extract_patch(&mut handle, c, cfg.patch_size, cfg.target_size))
            .collect::<Result<Vec<_>, _>>()?;
        for (k, &kind) in cfg.kinds.iter().enumerate() {
            let got = embedder.embed_batch(&patches, kind)?;
            rows[k].extend(got);
        }
    }
    for (k, &kind) in cfg.kinds.iter().enumerate() {
        let m = EmbeddingMatrix::from_rows(&r.slide_id, &cfg.model_id, kind, cfg.embedding_dim, &rows[k], coords.clone())?;
        let path = p.layout.embedding(kind, &r.slide_id);
        ensure_parent(&path)?;
        write_embeddings(&m, &path)?;
    }
    Ok(coords.len())
}

/// One embedding file per slide and configured kind.
pub(super) fn embed(p: &Pipeline) -> Result<StageReport> {
    require_any(p.manifest.records.iter().map(|r| p.layout.mask(&r.slide_id)))?;
    let dim = p.config.embedding_dim;
    p.provider.build(dim)?;
    let results = parallel_map_with(
        &p.manifest.records,
        p.workers(),
        |_| p.provider.build(dim).expect("provider validated above"),
        |embedder, _, r| embed_slide(p, embedder.as_mut(), r),
    );
    p.write_run_meta(Command::Embed, &p.layout.embeddings_dir())?;
    finish(p, Command::Embed, &results)
}

/// Prompt embeddings used for zero-shot scoring, per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredPrompts {
    pub cancer: Vec<TextEmbedding>,
    pub non_neoplastic: Vec<TextEmbedding>,
    pub poor: Vec<TextEmbedding>,
    pub well: Vec<TextEmbedding>,
}

impl StoredPrompts {
    pub fn class_vectors(&self) -> ClassVectors {
        let f = |v: &[TextEmbedding]| v.iter().map(TextEmbedding::to_f64).collect();
        ClassVectors {
            cancer: f(&self.cancer),
            non_neoplastic: f(&self.non_neoplastic),
            poor: f(&self.poor),
            well: f(&self.well),
        }
    }
}

fn embed_prompts(p: &Pipeline, embedder: &mut dyn PatchEmbedder) -> Result<StoredPrompts> {
    let zs = &p.config.zeroshot;
    zs.prompts.validate()?;
    let mut embed = |list: &[String]| -> Result<Vec<TextEmbedding>> {
        let used = if zs.ensemble { list } else { &list[..1] };
        used.iter()
            .map(|prompt| {
                Ok(TextEmbedding {
                    prompt: prompt.clone(),
                    model_id: p.config.model_id.clone(),
                    vector: embedder.embed_text(prompt)?,
                })
            })
            .collect()
    };
    Ok(StoredPrompts {
        cancer: embed(&zs.prompts.cancer)?,
        non_neoplastic: embed(&zs.prompts.non_neoplastic)?,
        poor: embed(&zs.prompts.poor)?,
        well: embed(&zs.prompts.well)?,
    })
}

pub(super) fn read_aligned(p: &Pipeline, slide: &str) -> Result<EmbeddingMatrix> {
    let path = p.layout.embedding(EmbeddingKind::Aligned, slide);
    if !path.exists() {
        return Err(OrchestratorError::MissingUpstreamArtifact { path });
    }
    let m = read_embeddings(&path)?;
    m.expect_kind(EmbeddingKind::Aligned)?;
    Ok(m)
}

/// Slide scores from aligned embeddings and embedded prompts.
pub(super) fn zeroshot(p: &Pipeline) -> Result<StageReport> {
    if !p.config.has_kind(EmbeddingKind::Aligned) {
        return Err(OrchestratorError::Usage("zero-shot scoring needs the aligned embedding kind".into()));
    }
    require_any(p.manifest.records.iter().map(|r| p.layout.mask(&r.slide_id)))?;
    require_any(
        p.manifest
            .records
            .iter()
            .map(|r| p.layout.embedding(EmbeddingKind::Aligned, &r.slide_id)),
    )?;
    let mut embedder = p.provider.build(p.config.embedding_dim)?;
    let prompts = embed_prompts(p, embedder.as_mut())?;
    drop(embedder);
    write_json(&p.layout.text_embeddings(), &prompts)?;
    let vectors = prompts.class_vectors();
    let aggregation = p.config.zeroshot.aggregation;
    let results: Vec<Result<SlideScore>> = parallel_map(&p.manifest.records, p.workers(), |_, r| {
        let e = read_aligned(p, &r.slide_id)?;
        Ok(score_slide(&e, &vectors, aggregation)?)
    });
    let scores: Vec<SlideScore> = results.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    write_scores_csv(&p.layout.zeroshot_scores(), &scores)?;
    p.write_run_meta(Command::Zeroshot, &p.layout.zeroshot_dir())?;
    finish(p, Command::Zeroshot, &results)
}

/// Reads `scores.csv` back into `(slide_id, score)` pairs.
pub(super) fn read_zeroshot_scores(p: &Pipeline) -> Result<Vec<(String, f64)>> {
    let path = p.layout.zeroshot_scores();
    if !path.exists() {
        return Err(OrchestratorError::MissingUpstreamArtifact { path });
    }
    let mut r = csv::Reader::from_path(&path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let score: f64 = rec[2]
            .parse()
            .map_err(|_| OrchestratorError::Usage(format!("{}: bad score '{}'", path.display(), &rec[2])))?;
        out.push((rec[0].to_string(), score));
    }
    Ok(out)
}
