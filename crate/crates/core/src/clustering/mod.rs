//! K-means over patch embeddings, silhouette-based k selection, per-slide
//! cluster histograms, univariate cluster screening and centroid retrieval.
//!
//! Distances are Euclidean on raw (unnormalised) task embeddings. All
//! reductions run sequentially in row order, so results do not depend on
//! how the caller parallelises the surrounding work.

mod kmeans;

use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::evaluation::{auroc, EvalError};
use crate::rng::stream;

pub use kmeans::{assign, kmeans_fit, kmeans_fit_restarts, ClusterModel};
use kmeans::sq_dist;

pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_SILHOUETTE_CAP: usize = 10_000;
/// k-means++ starts per fit.
pub const DEFAULT_N_INIT: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum ClusterError {
    #[error("{points} points cannot form {k} clusters")]
    TooFewPoints { points: usize, k: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("silhouette needs at least two non-empty clusters")]
    SingleCluster,
    #[error("cluster {index} out of range for k = {k}")]
    ClusterIndexOutOfRange { index: usize, k: usize },
    #[error("no candidate values of k")]
    NoCandidates,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ClusterError> = std::result::Result<T, E>;

/// Mean silhouette coefficient.
///
/// When `x` has more than `sample_cap` rows, a uniform sample of that size
/// (drawn from `seed`) is scored against itself. Points in singleton
/// clusters score 0, as do points with `a = b = 0`.
pub fn silhouette(x: &[Vec<f64>], labels: &[usize], sample_cap: usize, seed: u64) -> Result<f64> {
    assert_eq!(x.len(), labels.len(), "one label per point");
    let idx: Vec<usize> = if x.len() > sample_cap {
        let mut v = sample(&mut stream(seed, &[0x51]), x.len(), sample_cap).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..x.len()).collect()
    };
    let k = idx.iter().map(|&i| labels[i]).max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &i in &idx {
        sizes[labels[i]] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(ClusterError::SingleCluster);
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for &i in &idx {
        let li = labels[i];
        if sizes[li] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for &j in &idx {
            if i != j {
                sums[labels[j]] += sq_dist(&x[i], &x[j]).sqrt();
            }
        }
        let a = sums[li] / (sizes[li] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != li && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / idx.len() as f64)
}

/// Result of a silhouette sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: usize,
    /// `(k, silhouette)` in ascending `k`.
    pub scores: Vec<(usize, f64)>,
}

/// Fits every candidate with the same seed and returns the best silhouette;
/// ties go to the smaller `k`.
pub fn select_k(x: &[Vec<f64>], candidates: &[usize], seed: u64, sample_cap: usize) -> Result<KSelection> {
    let mut ks = candidates.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(ClusterError::NoCandidates);
    }
    let mut scores = Vec::with_capacity(ks.len());
    for &k in &ks {
        let m = kmeans_fit(x, k, seed, DEFAULT_MAX_ITER)?;
        let labels = assign(&m, x)?;
        scores.push((k, silhouette(x, &labels, sample_cap, seed)?));
    }
    Ok(KSelection {
        k: best_k(&scores),
        scores,
    })
}

/// Argmax over `(k, score)` pairs sorted by `k`; the first maximum wins.
fn best_k(scores: &[(usize, f64)]) -> usize {
    let mut best = scores[0];
    for &s in &scores[1..] {
        if s.1 > best.1 {
            best = s;
        }
    }
    best.0
}

/// Normalised cluster counts of one slide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideHistogram {
    pub slide_id: String,
    pub freq: Vec<f64>,
    /// The slide had no patches; `freq` is all zero.
    pub empty: bool,
}

pub fn slide_histogram(slide_id: &str, labels: &[usize], k: usize) -> SlideHistogram {
    let mut counts = vec![0usize; k];
    for &l in labels {
        assert!(l < k, "label {l} out of range for k = {k}");
        counts[l] += 1;
    }
    let n = labels.len();
    SlideHistogram {
        slide_id: slide_id.to_string(),
        freq: counts
            .iter()
            .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
            .collect(),
        empty: n == 0,
    }
}

/// The `m` rows closest to centroid `j`, over all of `x`, nearest first;
/// ties keep row order.
pub fn nearest_patches<C: Clone>(
    model: &ClusterModel,
    j: usize,
    x: &[Vec<f64>],
    coords: &[C],
    m: usize,
) -> Result<Vec<(C, f64)>> {
    if j >= model.k {
        return Err(ClusterError::ClusterIndexOutOfRange { index: j, k: model.k });
    }
    assert_eq!(x.len(), coords.len(), "one coordinate per row");
    let mut d: Vec<(usize, f64)> = x
        .iter()
        .enumerate()
        .map(|(i, p)| (i, sq_dist(p, &model.centroids[j]).sqrt()))
        .collect();
    d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(d.into_iter().take(m).map(|(i, dist)| (coords[i].clone(), dist)).collect())
}

/// AUROC of each histogram component used alone as a score.
pub fn univariate_cluster_auroc(histograms: &[SlideHistogram], labels: &[bool]) -> Result<Vec<f64>> {
    let k = histograms.first().map_or(0, |h| h.freq.len());
    (0..k)
        .map(|j| {
            let s: Vec<f64> = histograms.iter().map(|h| h.freq[j]).collect();
            Ok(auroc(&s, labels)?)
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    k: usize,
    dim: usize,
    seed: u64,
    inertia: f64,
    iterations_run: usize,
}

/// Writes a one-line JSON header followed by `k·dim` little-endian `f32`
/// centroid values.
pub fn write_model(model: &ClusterModel, path: &Path) -> Result<()> {
    let mut buf = serde_json::to_vec(&ModelHeader {
        k: model.k,
        dim: model.dim,
        seed: model.seed,
        inertia: model.inertia,
        iterations_run: model.iterations_run,
    })?;
    buf.push(b'\n');
    for c in &model.centroids {
        for &v in c {
            buf.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads a model written by [`write_model`]; centroids come back at `f32`
/// precision.
pub fn read_model(path: &Path) -> Result<ClusterModel> {
    let buf = std::fs::read(path)?;
    let nl = buf
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "missing model header"))?;
    let h: ModelHeader = serde_json::from_slice(&buf[..nl])?;
    let payload = &buf[nl + 1..];
    if payload.len() != 4 * h.k * h.dim {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "centroid payload length mismatch").into());
    }
    let vals: Vec<f64> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")) as f64)
        .collect();
    Ok(ClusterModel {
        k: h.k,
        dim: h.dim,
        seed: h.seed,
        centroids: vals.chunks(h.dim.max(1)).map(<[f64]>::to_vec).collect(),
        inertia: h.inertia,
        iterations_run: h.iterations_run,
        inertia_history: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silhouette_distant_blobs_by_hand() {
        // 5 points near 0 and 5 near 1000 on a line
        let x: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![if i < 5 { i as f64 } else { 1000.0 + i as f64 }])
            .collect();
        let labels: Vec<usize> = (0..10).map(|i| (i >= 5) as usize).collect();
        let mut expected = 0.0;
        for i in 0..10 {
            let (mut a, mut b) = (0.0, 0.0);
            for j in 0..10 {
                let d = (x[i][0] - x[j][0]).abs();
                if labels[j] == labels[i] {
                    a += d / 4.0;
                } else {
                    b += d / 5.0;
                }
            }
            expected += (b - a) / f64::max(a, b) / 10.0;
        }
        let s = silhouette(&x, &labels, DEFAULT_SILHOUETTE_CAP, 0).unwrap();
        assert!((s - expected).abs() < 1e-12);
        assert!(s > 0.9);
    }

    #[test]
    fn silhouette_conventions() {
        let x = vec![vec![1.0]; 4];
        assert_eq!(silhouette(&x, &[0, 0, 1, 1], 100, 0).unwrap(), 0.0);
        assert!(matches!(
            silhouette(&x, &[0, 0, 0, 0], 100, 0),
            Err(ClusterError::SingleCluster)
        ));
        // singleton cluster contributes 0
        let y = vec![vec![0.0], vec![1.0], vec![10.0]];
        let s = silhouette(&y, &[0, 0, 1], 100, 0).unwrap();
        let per = (10.0 - 1.0) / 10.0;
        let per2 = (9.0 - 1.0) / 9.0;
        assert!((s - (per + per2) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn select_k_finds_three_blobs() {
        let mut x = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (50.0, 0.0), (0.0, 50.0)] {
            for i in 0..15 {
                let t = i as f64;
                x.push(vec![cx + (t * 0.37).sin(), cy + (t * 0.71).cos()]);
            }
        }
        assert_eq!(select_k(&x, &[2, 3, 4, 8], 7, 10_000).unwrap().k, 3);
        assert_eq!(select_k(&x, &[4], 7, 10_000).unwrap().k, 4);
    }

    #[test]
    fn select_k_tie_prefers_smaller() {
        assert_eq!(best_k(&[(2, 0.5), (3, 0.5), (4, 0.1)]), 2);
        // mirror-symmetric data: splitting the 4 left or 4 right points
        // gives the same silhouette for k = 3 either way
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![(i / 4) as f64 * 10.0, (i % 4) as f64 * 0.1]).collect();
        let sel = select_k(&x, &[3, 2, 2], 1, 100).unwrap();
        assert_eq!(sel.scores.iter().map(|s| s.0).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(select_k(&x, &[2], 1, 100).unwrap().k, 2);
    }

    #[test]
    fn histogram_examples() {
        let h = slide_histogram("s", &[0, 0, 1, 3], 4);
        assert_eq!(h.freq, vec![0.5, 0.25, 0.0, 0.25]);
        let e = slide_histogram("s", &[], 3);
        assert!(e.empty && e.freq == vec![0.0; 3]);
        assert_eq!(slide_histogram("s", &[2, 2], 3).freq, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn nearest_patch_examples() {
        let model = ClusterModel {
            k: 2,
            dim: 1,
            seed: 0,
            centroids: vec![vec![0.0], vec![5.0]],
            inertia: 0.0,
            iterations_run: 1,
            inertia_history: vec![],
        };
        let x = vec![vec![4.0], vec![6.0], vec![5.0], vec![0.5]];
        let coords = ["a", "b", "c", "d"];
        let r = nearest_patches(&model, 1, &x, &coords, 3).unwrap();
        assert_eq!(r, vec![("c", 0.0), ("a", 1.0), ("b", 1.0)]);
        let all = nearest_patches(&model, 0, &x, &coords, 10).unwrap();
        assert_eq!(all.len(), 4);
        assert!(matches!(
            nearest_patches(&model, 2, &x, &coords, 1),
            Err(ClusterError::ClusterIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn univariate_auroc_examples() {
        let h = |f: f64| SlideHistogram {
            slide_id: String::new(),
            freq: vec![f, 0.3],
            empty: false,
        };
        let hs = [h(0.1), h(0.2), h(0.3), h(0.4)];
        let a = univariate_cluster_auroc(&hs, &[false, false, true, true]).unwrap();
        assert_eq!(a, vec![1.0, 0.5]);
    }

    #[test]
    fn model_file_roundtrip() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.5, (i % 3) as f64]).collect();
        let m = kmeans_fit(&x, 3, 4, 300).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.bin");
        write_model(&m, &p).unwrap();
        let back = read_model(&p).unwrap();
        assert_eq!(back.k, 3);
        for (a, b) in back.centroids.iter().flatten().zip(m.centroids.iter().flatten()) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
