//! Binary grading tasks and training-set subsampling.

use rand::seq::SliceRandom;

use super::{EvalError, Result};
use crate::rng::stream;
use crate::slide_io::{Grade, SlideRecord};

/// Slides taking part in a binary task, with their labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskLabels {
    /// Indices into the input records, ascending.
    pub indices: Vec<usize>,
    pub labels: Vec<bool>,
}

impl TaskLabels {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.len() - self.positives()
    }
}

/// Keeps slides whose grade is in `positive` (label 1) or `negative` (label 0).
pub fn grade_task_labels(records: &[SlideRecord], positive: &[Grade], negative: &[Grade]) -> Result<TaskLabels> {
    if positive.is_empty() || negative.is_empty() {
        return Err(EvalError::EmptyTask);
    }
    if positive.iter().any(|g| negative.contains(g)) {
        return Err(EvalError::OverlappingGrades);
    }
    let mut t = TaskLabels {
        indices: Vec::new(),
        labels: Vec::new(),
    };
    for (i, r) in records.iter().enumerate() {
        if positive.contains(&r.grade) {
            t.indices.push(i);
            t.labels.push(true);
        } else if negative.contains(&r.grade) {
            t.indices.push(i);
            t.labels.push(false);
        }
    }
    if t.indices.is_empty() {
        return Err(EvalError::EmptyTask);
    }
    Ok(t)
}

/// Fraction `1.0` in permille, the standard cross-validation setting.
pub const FULL_FRACTION_PERMILLE: u32 = 1000;

/// Stratified, nested subsample of `pool` (slide indices).
///
/// Each class is permuted once by a stream keyed on `(seed, fold)` and the
/// first `⌈permille·count/1000⌉` members are kept, so for a fixed fold a
/// smaller fraction always yields a subset of a larger one. The result keeps
/// the order of `pool`; at `1000` it is `pool` itself.
pub fn nested_subsample(pool: &[usize], labels: &[bool], permille: u32, seed: u64, fold: usize) -> Vec<usize> {
    assert!(permille <= 1000, "fraction above 1");
    let mut rng = stream(seed, &[0x5B, fold as u64]);
    let mut keep = vec![false; pool.len()];
    for class in [true, false] {
        let mut members: Vec<usize> = (0..pool.len()).filter(|&i| labels[pool[i]] == class).collect();
        members.shuffle(&mut rng);
        let take = (members.len() * permille as usize).div_ceil(1000);
        for &m in &members[..take] {
            keep[m] = true;
        }
    }
    (0..pool.len()).filter(|&i| keep[i]).map(|i| pool[i]).collect()
}
