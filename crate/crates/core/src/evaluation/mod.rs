//! Cross-validation, AUROC, DeLong intervals, operating points, learning
//! curves and grade-pair tasks.

mod folds;
mod operating;
mod report;
mod roc;
mod tasks;

pub use folds::{make_folds, FoldPlan, FoldSplits, Split};
pub use operating::{
    adjusted_wald, adjusted_wald_center, calibrate_operating_points, sens_spec_from_counts, sens_spec_wald,
    Confusion, OperatingTargets, OperatingThresholds, Proportion, SensSpec, Threshold,
};
pub use report::{build_report, write_report_csv, CurveRow, EvalReport, FoldOutcome, FoldReport, OperatingReport, PooledPoint};
pub use roc::{auroc, delong_ci, normal_quantile, pair_counts, placement_values, DelongCi, PairCounts};
pub use tasks::{grade_task_labels, nested_subsample, TaskLabels, FULL_FRACTION_PERMILLE};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("{patients} patients cannot fill {folds} folds")]
    TooFewPatients { patients: usize, folds: usize },
    #[error("need at least 2 positives and 2 negatives, got {positives} and {negatives}")]
    TooFewSamples { positives: usize, negatives: usize },
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("scores and labels differ in length")]
    LengthMismatch,
    #[error("no slides match the task's grade sets")]
    EmptyTask,
    #[error("positive and negative grade sets overlap")]
    OverlappingGrades,
    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Shared precondition: equal lengths, finite scores, both classes.
pub(crate) fn check_scores(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite(i));
    }
    if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
        return Err(EvalError::SingleClass);
    }
    Ok(())
}
