//! Per-slide figures and cluster exemplar grids.

use std::path::Path;

use super::analysis::{read_plans, read_task_bag, FoldPlans};
use super::config::Method;
use super::slides::{finish, read_aligned, read_mask, StoredPrompts};
use super::{parallel_map, read_json, require_any, Command, Pipeline, Result, StageReport};
use crate::clustering::{assign, nearest_patches, read_model, ClusterModel};
use crate::embedding::EmbeddingKind;
use crate::learners::{read_mil_model, MilModel};
use crate::raster::RgbRaster;
use crate::render::{render_cluster_map, render_heatmap, render_patch_grid, render_thumbnail, OverlayStyle};
use crate::slide_io::{extract_patch, open_slide_with_budget, SlideRecord};
use crate::zeroshot::{patch_scores, ClassVectors};

/// Upstream artifacts that are drawn when present.
struct Inputs {
    prompts: Option<ClassVectors>,
    pooled: Option<(ClusterModel, Vec<usize>)>,
    plans: Option<FoldPlans>,
    /// One model per fold, indexed by fold.
    abmil: Vec<Option<MilModel>>,
}

/// Indices of the `n` largest values, ties to the lower index.
fn top_indices(values: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

fn load_inputs(p: &Pipeline) -> Result<Inputs> {
    let prompts = if p.layout.text_embeddings().exists() {
        Some(read_json::<StoredPrompts>(&p.layout.text_embeddings())?.class_vectors())
    } else {
        None
    };
    let pooled_dir = p.layout.cluster_pooled();
    let pooled = if pooled_dir.join("model.bin").exists() {
        let model = read_model(&pooled_dir.join("model.bin"))?;
        let aurocs: Vec<f64> = read_json(&pooled_dir.join("univariate_auroc.json"))?;
        let highlight = top_indices(&aurocs, p.config.render.highlight_clusters);
        Some((model, highlight))
    } else {
        None
    };
    let plans = if p.layout.fold_plans().exists() {
        Some(read_plans(p)?)
    } else {
        None
    };
    let abmil = match &plans {
        Some(pl) => (0..pl.cv_val.n_folds)
            .map(|f| {
                let path = p.layout.train_fold(Method::Abmil, f).join("model.bin");
                if path.exists() {
                    Ok(Some(read_mil_model(&path)?))
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Ok(Inputs {
        prompts,
        pooled,
        plans,
        abmil,
    })
}

fn write_png(img: &RgbRaster, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    img.write_png(f).map_err(std::io::Error::other)?;
    Ok(())
}

/// Draws every figure the available artifacts allow; returns how many.
fn render_slide(p: &Pipeline, inp: &Inputs, r: &SlideRecord) -> Result<usize> {
    let rc = &p.config.render;
    let mask = read_mask(p, &r.slide_id)?;
    let dir = p.layout.render_slide(&r.slide_id);
    std::fs::create_dir_all(&dir)?;
    let mut handle = open_slide_with_budget(&r.image_path, p.config.chunk_budget)?;
    write_png(&render_thumbnail(&mut handle, rc.thumbnail_max_dim)?, &dir.join("thumbnail.png"))?;
    let mut drawn = 1;

    let aligned = p.layout.embedding(EmbeddingKind::Aligned, &r.slide_id);
    if let (Some(vectors), true) = (&inp.prompts, aligned.exists()) {
        let ps = patch_scores(&read_aligned(p, &r.slide_id)?, vectors)?;
        let mut values = vec![None; ps.grade_score.len()];
        for &j in &ps.cancer_set {
            values[j] = Some(ps.grade_score[j]);
        }
        let style = OverlayStyle {
            normalization: rc.zeroshot,
        };
        write_png(&render_heatmap(&mask, &values, &style, rc.scale)?, &dir.join("zeroshot.png"))?;
        drawn += 1;
    }

    if !p.layout.embedding(EmbeddingKind::Task, &r.slide_id).exists() {
        return Ok(drawn);
    }
    let bag = read_task_bag(p, &r.slide_id)?;
    if let Some((model, highlight)) = &inp.pooled {
        let labels = assign(model, &bag.rows)?;
        write_png(&render_cluster_map(&mask, &labels, highlight, rc.scale)?, &dir.join("clusters.png"))?;
        drawn += 1;
    }
    let test_fold = inp.plans.as_ref().and_then(|pl| {
        let i = pl.cv_val.slide_ids.iter().position(|s| *s == r.slide_id)?;
        Some(pl.cv_val.group[i])
    });
    if let Some(Some(model)) = test_fold.and_then(|f| inp.abmil.get(f)) {
        let (alpha, _) = model.attention_forward(&bag.rows)?;
        let values: Vec<Option<f64>> = alpha.into_iter().map(Some).collect();
        let style = OverlayStyle {
            normalization: rc.attention,
        };
        write_png(&render_heatmap(&mask, &values, &style, rc.scale)?, &dir.join("attention.png"))?;
        drawn += 1;
    }
    Ok(drawn)
}

/// Grids of the patches nearest each pooled centroid, over every slide of
/// the fold plans.
fn render_cluster_grids(p: &Pipeline, model: &ClusterModel, plans: &FoldPlans) -> Result<()> {
    let ids = &plans.cv.slide_ids;
    let mut rows = Vec::new();
    let mut coords = Vec::new();
    for (s, id) in ids.iter().enumerate() {
        let bag = read_task_bag(p, id)?;
        coords.extend(bag.coords.iter().map(|&c| (s, c)));
        rows.extend(bag.rows);
    }
    let dir = p.layout.render_dir().join("clusters");
    std::fs::create_dir_all(&dir)?;
    let by_id: std::collections::HashMap<&str, &SlideRecord> =
        p.manifest.records.iter().map(|r| (r.slide_id.as_str(), r)).collect();
    let clusters: Vec<usize> = (0..model.k).collect();
    let results = parallel_map(&clusters, p.workers(), |_, &j| -> Result<()> {
        let near = nearest_patches(model, j, &rows, &coords, p.config.render.nearest_patches)?;
        let mut patches = Vec::with_capacity(near.len());
        for ((s, c), _) in near {
            let r = by_id[ids[s].as_str()];
            let mut handle = open_slide_with_budget(&r.image_path, p.config.chunk_budget)?;
            patches.push(extract_patch(&mut handle, c, p.config.patch_size, p.config.target_size)?);
        }
        if !patches.is_empty() {
            let grid = render_patch_grid(&patches, p.config.render.grid_cols)?;
            write_png(&grid, &dir.join(format!("cluster_{j}.png")))?;
        }
        Ok(())
    });
    results.into_iter().collect()
}

/// Thumbnails, zero-shot and attention heatmaps, cluster maps and cluster
/// exemplar grids.
pub(super) fn render(p: &Pipeline) -> Result<StageReport> {
    require_any(p.manifest.records.iter().map(|r| p.layout.mask(&r.slide_id)))?;
    let inp = load_inputs(p)?;
    let results = parallel_map(&p.manifest.records, p.workers(), |_, r| render_slide(p, &inp, r));
    if let (Some((model, _)), Some(plans)) = (&inp.pooled, &inp.plans) {
        render_cluster_grids(p, model, plans)?;
    }
    p.write_run_meta(Command::Render, &p.layout.render_dir())?;
    finish(p, Command::Render, &results)
}
