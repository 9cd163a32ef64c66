//! Lloyd's k-means with restarted k-means++ seeding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClusterError, Result, DEFAULT_N_INIT};
use crate::rng::stream;

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A fitted k-means model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub dim: usize,
    pub seed: u64,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances of training points to their centroid.
    pub inertia: f64,
    pub iterations_run: usize,
    /// Inertia after each assignment step.
    #[serde(default)]
    pub inertia_history: Vec<f64>,
}

/// Index of the nearest centroid; ties go to the lowest index.
pub(crate) fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn check_dims(x: &[Vec<f64>], dim: usize) -> Result<()> {
    match x.iter().find(|r| r.len() != dim) {
        Some(r) => Err(ClusterError::DimensionMismatch {
            expected: dim,
            got: r.len(),
        }),
        None => Ok(()),
    }
}

/// k-means++: the first centre uniformly, each further one with probability
/// proportional to its squared distance from the nearest chosen centre.
fn kmeans_pp(x: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut centroids = vec![x[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = x.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            // never pick a zero-weight point through rounding at the tail
            while d2[idx] == 0.0 && idx > 0 {
                idx -= 1;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = x[pick].clone();
        for (d, p) in d2.iter_mut().zip(x) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Fits k-means from [`DEFAULT_N_INIT`] k-means++ starts; see
/// [`kmeans_fit_restarts`].
pub fn kmeans_fit(x: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<ClusterModel> {
    kmeans_fit_restarts(x, k, seed, max_iter, DEFAULT_N_INIT)
}

/// Fits k-means `n_init` times from independent k-means++ seedings drawn
/// from `seed` and keeps the fit with the lowest final inertia (ties go to
/// the earliest start).
///
/// Each start runs Lloyd iterations until the assignment no longer changes
/// or `max_iter` assignment steps have run. A cluster left empty by an
/// update is moved onto the training point farthest from its own centroid.
pub fn kmeans_fit_restarts(x: &[Vec<f64>], k: usize, seed: u64, max_iter: usize, n_init: usize) -> Result<ClusterModel> {
    let n = x.len();
    if k == 0 || n < k {
        return Err(ClusterError::TooFewPoints { points: n, k });
    }
    let dim = x[0].len();
    check_dims(x, dim)?;
    let mut best: Option<ClusterModel> = None;
    for start in 0..n_init.max(1) as u64 {
        let fit = lloyd(x, k, seed, start, max_iter);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one start"))
}

fn lloyd(x: &[Vec<f64>], k: usize, seed: u64, start: u64, max_iter: usize) -> ClusterModel {
    let n = x.len();
    let mut rng = stream(seed, &[0x4B, start]);
    let mut centroids = kmeans_pp(x, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, p) in x.iter().enumerate() {
            let (j, d) = nearest(&centroids, p);
            changed |= labels[i] != j;
            labels[i] = j;
            inertia += d;
        }
        history.push(inertia);
        if !changed || iterations >= max_iter.max(1) {
            return ClusterModel {
                k,
                dim: x[0].len(),
                seed,
                centroids,
                inertia,
                iterations_run: iterations,
                inertia_history: history,
            };
        }
        update_centroids(x, &labels, &mut centroids);
    }
}

fn update_centroids(x: &[Vec<f64>], labels: &[usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let dim = x[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in x.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    let mut taken = vec![false; x.len()];
    for j in 0..k {
        if counts[j] > 0 {
            centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
        }
    }
    for j in 0..k {
        if counts[j] == 0 {
            // farthest point from its own (updated) centroid; ties to the lowest index
            let mut best = (usize::MAX, -1.0);
            for (i, p) in x.iter().enumerate() {
                if taken[i] {
                    continue;
                }
                let d = sq_dist(p, &centroids[labels[i]]);
                if d > best.1 {
                    best = (i, d);
                }
            }
            if best.0 != usize::MAX {
                taken[best.0] = true;
                centroids[j] = x[best.0].clone();
            }
        }
    }
}

/// Nearest-centroid labels.
pub fn assign(model: &ClusterModel, x: &[Vec<f64>]) -> Result<Vec<usize>> {
    check_dims(x, model.dim)?;
    Ok(x.iter().map(|p| nearest(&model.centroids, p).0).collect())
}
