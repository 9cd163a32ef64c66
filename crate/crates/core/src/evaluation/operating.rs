//! Operating-point calibration and Adjusted Wald intervals.
//!
//! A slide is called positive when `score >= threshold`. Candidate
//! thresholds are the midpoints between consecutive distinct validation
//! scores. When no candidate meets a target the threshold falls back to an
//! extreme (`min - 1`, calling everything positive, or `max + 1`, calling
//! nothing positive) and the point is flagged unreachable.

use serde::{Deserialize, Serialize};

use super::roc::normal_quantile;
use super::{check_scores, Result};

/// Targets for the two constrained operating points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatingTargets {
    pub sensitivity: f64,
    pub specificity: f64,
}

impl Default for OperatingTargets {
    fn default() -> Self {
        Self {
            sensitivity: 0.9,
            specificity: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub threshold: f64,
    pub unreachable: bool,
}

/// Thresholds calibrated on one validation split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingThresholds {
    pub high_sens: Threshold,
    pub high_spec: Threshold,
    pub balanced: Threshold,
}

fn rates(scores: &[f64], labels: &[bool], t: f64) -> (f64, f64) {
    let (mut tp, mut p, mut tn, mut n) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        if l {
            p += 1;
            tp += (s >= t) as usize;
        } else {
            n += 1;
            tn += (s < t) as usize;
        }
    }
    (tp as f64 / p as f64, tn as f64 / n as f64)
}

/// Midpoints between consecutive distinct scores, ascending.
fn candidates(scores: &[f64]) -> Vec<f64> {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect()
}

pub fn calibrate_operating_points(
    scores: &[f64],
    labels: &[bool],
    targets: OperatingTargets,
) -> Result<OperatingThresholds> {
    check_scores(scores, labels)?;
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let cands = candidates(scores);
    let r: Vec<(f64, f64)> = cands.iter().map(|&t| rates(scores, labels, t)).collect();

    let high_sens = (0..cands.len())
        .rev()
        .find(|&i| r[i].0 >= targets.sensitivity)
        .map(|i| Threshold {
            threshold: cands[i],
            unreachable: false,
        })
        .unwrap_or(Threshold {
            threshold: lo,
            unreachable: true,
        });
    let high_spec = (0..cands.len())
        .find(|&i| r[i].1 >= targets.specificity)
        .map(|i| Threshold {
            threshold: cands[i],
            unreachable: false,
        })
        .unwrap_or(Threshold {
            threshold: hi,
            unreachable: true,
        });
    // first strict improvement in ascending threshold order keeps the
    // higher-sensitivity point among equal gaps
    let mut balanced = Threshold {
        threshold: lo,
        unreachable: true,
    };
    let mut best: Option<(f64, f64)> = None;
    for (i, &(sens, spec)) in r.iter().enumerate() {
        let gap = (sens - spec).abs();
        let better = match best {
            None => true,
            Some((g, s)) => gap < g || (gap == g && sens > s),
        };
        if better {
            best = Some((gap, sens));
            balanced = Threshold {
                threshold: cands[i],
                unreachable: false,
            };
        }
    }
    Ok(OperatingThresholds {
        high_sens,
        high_spec,
        balanced,
    })
}

/// Binomial proportion with an Adjusted Wald interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: usize,
    pub trials: usize,
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
}

/// Agresti-Coull interval: `p̃ = (x + z²/2) / (n + z²)`,
/// `p̃ ± z √(p̃(1-p̃)/(n + z²))`, clipped to `[0, 1]`.
pub fn adjusted_wald(x: usize, n: usize, z: f64) -> Proportion {
    assert!(n >= 1 && x <= n, "need 0 <= x <= n and n >= 1");
    let z2 = z * z;
    let nt = n as f64 + z2;
    let pt = (x as f64 + z2 / 2.0) / nt;
    let half = z * (pt * (1.0 - pt) / nt).sqrt();
    Proportion {
        successes: x,
        trials: n,
        estimate: x as f64 / n as f64,
        low: (pt - half).max(0.0),
        high: (pt + half).min(1.0),
    }
}

/// Center of the Adjusted Wald interval.
pub fn adjusted_wald_center(x: usize, n: usize, z: f64) -> f64 {
    (x as f64 + z * z / 2.0) / (n as f64 + z * z)
}

/// Confusion counts at a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub positives: usize,
    pub tn: usize,
    pub negatives: usize,
}

impl Confusion {
    pub fn at(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &l) in scores.iter().zip(labels) {
            if l {
                c.positives += 1;
                c.tp += (s >= threshold) as usize;
            } else {
                c.negatives += 1;
                c.tn += (s < threshold) as usize;
            }
        }
        c
    }

    pub fn add(&mut self, o: &Confusion) {
        self.tp += o.tp;
        self.positives += o.positives;
        self.tn += o.tn;
        self.negatives += o.negatives;
    }
}

/// Sensitivity and specificity with 95% Adjusted Wald intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensSpec {
    pub threshold: f64,
    pub sensitivity: Proportion,
    pub specificity: Proportion,
}

pub fn sens_spec_from_counts(c: &Confusion, threshold: f64) -> SensSpec {
    let z = normal_quantile(0.975);
    SensSpec {
        threshold,
        sensitivity: adjusted_wald(c.tp, c.positives, z),
        specificity: adjusted_wald(c.tn, c.negatives, z),
    }
}

pub fn sens_spec_wald(scores: &[f64], labels: &[bool], threshold: f64) -> Result<SensSpec> {
    check_scores(scores, labels)?;
    Ok(sens_spec_from_counts(&Confusion::at(scores, labels, threshold), threshold))
}
