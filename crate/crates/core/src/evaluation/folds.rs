//! Patient-grouped, stratified cross-validation folds.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::rng::stream;

/// Role of a slide within one fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Fold membership of every slide.
///
/// For fold `f` the test split is group `f`, the validation split (when
/// enabled) is group `(f + 1) mod n_folds`, and the rest is training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub with_val: bool,
    pub seed: u64,
    pub slide_ids: Vec<String>,
    pub patient_ids: Vec<String>,
    pub labels: Vec<bool>,
    /// Group index of each slide.
    pub group: Vec<usize>,
}

/// Slide indices of the three splits of one fold, each in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldPlan {
    pub fn split_of(&self, fold: usize, slide: usize) -> Split {
        let g = self.group[slide];
        if g == fold {
            Split::Test
        } else if self.with_val && g == (fold + 1) % self.n_folds {
            Split::Val
        } else {
            Split::Train
        }
    }

    pub fn splits(&self, fold: usize) -> FoldSplits {
        assert!(fold < self.n_folds, "fold {fold} out of range");
        let mut s = FoldSplits {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for i in 0..self.group.len() {
            match self.split_of(fold, i) {
                Split::Train => s.train.push(i),
                Split::Val => s.val.push(i),
                Split::Test => s.test.push(i),
            }
        }
        s
    }
}

struct Patient {
    id: String,
    slides: Vec<usize>,
    positives: usize,
}

/// Assigns whole patients to `n_folds` groups, balancing class counts.
///
/// Patients are visited by positive count (desc), then slide count (desc),
/// with remaining ties in seeded random order. Each goes to the group
/// holding the fewest slides of the patient's majority class, then the
/// fewest slides overall, then the lowest index.
pub fn make_folds(
    slide_ids: &[String],
    patient_ids: &[String],
    labels: &[bool],
    n_folds: usize,
    with_val: bool,
    seed: u64,
) -> Result<FoldPlan> {
    let n = slide_ids.len();
    if patient_ids.len() != n || labels.len() != n {
        return Err(EvalError::LengthMismatch);
    }
    let min_folds = if with_val { 3 } else { 2 };
    if n_folds < min_folds {
        return Err(EvalError::InvalidArgument(format!(
            "need at least {min_folds} folds, got {n_folds}"
        )));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(EvalError::SingleClass);
    }
    let mut by_patient: BTreeMap<&str, Patient> = BTreeMap::new();
    for i in 0..n {
        let p = by_patient.entry(&patient_ids[i]).or_insert_with(|| Patient {
            id: patient_ids[i].clone(),
            slides: Vec::new(),
            positives: 0,
        });
        p.slides.push(i);
        p.positives += labels[i] as usize;
    }
    if by_patient.len() < n_folds {
        return Err(EvalError::TooFewPatients {
            patients: by_patient.len(),
            folds: n_folds,
        });
    }
    let mut patients: Vec<Patient> = by_patient.into_values().collect();
    patients.shuffle(&mut stream(seed, &[0xF0]));
    patients.sort_by(|a, b| {
        b.positives
            .cmp(&a.positives)
            .then(b.slides.len().cmp(&a.slides.len()))
    });

    let mut pos = vec![0usize; n_folds];
    let mut neg = vec![0usize; n_folds];
    let mut group = vec![0usize; n];
    for p in &patients {
        let majority_positive = 2 * p.positives >= p.slides.len();
        let class_count = if majority_positive { &pos } else { &neg };
        let g = (0..n_folds)
            .min_by_key(|&f| (class_count[f], pos[f] + neg[f], f))
            .expect("at least one fold");
        for &s in &p.slides {
            group[s] = g;
        }
        pos[g] += p.positives;
        neg[g] += p.slides.len() - p.positives;
        log::trace!("patient {} -> group {g}", p.id);
    }
    Ok(FoldPlan {
        n_folds,
        with_val,
        seed,
        slide_ids: slide_ids.to_vec(),
        patient_ids: patient_ids.to_vec(),
        labels: labels.to_vec(),
        group,
    })
}
