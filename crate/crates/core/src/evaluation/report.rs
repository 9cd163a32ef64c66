//! Cross-validation reports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    auroc, calibrate_operating_points, delong_ci, sens_spec_from_counts, Confusion, DelongCi, EvalError,
    OperatingTargets, OperatingThresholds, Proportion, Result, SensSpec, Split,
};

/// Predictions of one trained fold model.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test_slide_ids: Vec<String>,
    pub test_scores: Vec<f64>,
    pub test_labels: Vec<bool>,
    /// Scores used to place thresholds: the validation split when there is
    /// one, otherwise the training split.
    pub calib_scores: Vec<f64>,
    pub calib_labels: Vec<bool>,
    pub calib_split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_test: usize,
    pub auroc: f64,
    /// Absent when the test split has fewer than two slides of a class.
    pub delong: Option<DelongCi>,
    pub calib_split: Split,
    pub thresholds: Option<OperatingThresholds>,
    pub high_sens: Option<SensSpec>,
    pub high_spec: Option<SensSpec>,
    pub balanced: Option<SensSpec>,
}

/// Operating points over all test folds, each fold judged at its own
/// thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingReport {
    pub high_sens: PooledPoint,
    pub high_spec: PooledPoint,
    pub balanced: PooledPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledPoint {
    pub sensitivity: Proportion,
    pub specificity: Proportion,
    /// Number of folds whose threshold fell back to an extreme.
    pub unreachable_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub model_id: String,
    pub folds: Vec<FoldReport>,
    pub mean_auroc: f64,
    /// DeLong interval on the concatenated test predictions of all folds.
    pub pooled: DelongCi,
    /// Absent when some fold could not be calibrated.
    pub operating: Option<OperatingReport>,
    /// Test predictions in fold order: `(fold, slide_id, label, score)`.
    pub predictions: Vec<(usize, String, bool, f64)>,
}

impl EvalReport {
    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)
    }
}

/// One line of the learning-curve / report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub method: String,
    pub model_id: String,
    pub fraction: f64,
    /// Fold index, `mean` or `pooled`.
    pub fold: String,
    pub auroc: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

fn fold_report(o: &FoldOutcome, targets: OperatingTargets) -> Result<FoldReport> {
    let auc = auroc(&o.test_scores, &o.test_labels)?;
    let delong = match delong_ci(&o.test_scores, &o.test_labels, 0.05) {
        Ok(ci) => Some(ci),
        Err(EvalError::TooFewSamples { .. }) => None,
        Err(e) => return Err(e),
    };
    let thresholds = match calibrate_operating_points(&o.calib_scores, &o.calib_labels, targets) {
        Ok(t) => Some(t),
        Err(EvalError::SingleClass) => None,
        Err(e) => return Err(e),
    };
    let at = |t: f64| sens_spec_from_counts(&Confusion::at(&o.test_scores, &o.test_labels, t), t);
    Ok(FoldReport {
        fold: o.fold,
        n_test: o.test_scores.len(),
        auroc: auc,
        delong,
        calib_split: o.calib_split,
        high_sens: thresholds.map(|t| at(t.high_sens.threshold)),
        high_spec: thresholds.map(|t| at(t.high_spec.threshold)),
        balanced: thresholds.map(|t| at(t.balanced.threshold)),
        thresholds,
    })
}

/// Summarises fold outcomes: per-fold and pooled AUROC with DeLong
/// intervals, and pooled operating points.
pub fn build_report(
    method: &str,
    model_id: &str,
    outcomes: &[FoldOutcome],
    targets: OperatingTargets,
) -> Result<EvalReport> {
    if outcomes.is_empty() {
        return Err(EvalError::InvalidArgument("no folds to report".into()));
    }
    let folds = outcomes
        .iter()
        .map(|o| fold_report(o, targets))
        .collect::<Result<Vec<_>>>()?;
    let mean_auroc = folds.iter().map(|f| f.auroc).sum::<f64>() / folds.len() as f64;
    let all_scores: Vec<f64> = outcomes.iter().flat_map(|o| o.test_scores.iter().copied()).collect();
    let all_labels: Vec<bool> = outcomes.iter().flat_map(|o| o.test_labels.iter().copied()).collect();
    let pooled = delong_ci(&all_scores, &all_labels, 0.05)?;

    let operating = if folds.iter().all(|f| f.thresholds.is_some()) {
        let mut counts = [Confusion::default(); 3];
        let mut unreachable = [0usize; 3];
        for (o, f) in outcomes.iter().zip(&folds) {
            let t = f.thresholds.expect("checked above");
            for (k, th) in [t.high_sens, t.high_spec, t.balanced].into_iter().enumerate() {
                counts[k].add(&Confusion::at(&o.test_scores, &o.test_labels, th.threshold));
                unreachable[k] += th.unreachable as usize;
            }
        }
        let point = |k: usize| {
            let s = sens_spec_from_counts(&counts[k], 0.0);
            PooledPoint {
                sensitivity: s.sensitivity,
                specificity: s.specificity,
                unreachable_folds: unreachable[k],
            }
        };
        Some(OperatingReport {
            high_sens: point(0),
            high_spec: point(1),
            balanced: point(2),
        })
    } else {
        None
    };
    let predictions = outcomes
        .iter()
        .flat_map(|o| {
            (0..o.test_scores.len()).map(move |i| (o.fold, o.test_slide_ids[i].clone(), o.test_labels[i], o.test_scores[i]))
        })
        .collect();
    Ok(EvalReport {
        method: method.to_string(),
        model_id: model_id.to_string(),
        folds,
        mean_auroc,
        pooled,
        operating,
        predictions,
    })
}

impl EvalReport {
    /// Rows for each fold plus `mean` and `pooled` summaries.
    pub fn curve_rows(&self, fraction: f64) -> Vec<CurveRow> {
        let mut rows: Vec<CurveRow> = self
            .folds
            .iter()
            .map(|f| CurveRow {
                method: self.method.clone(),
                model_id: self.model_id.clone(),
                fraction,
                fold: f.fold.to_string(),
                auroc: f.auroc,
                ci_low: f.delong.map(|c| c.low),
                ci_high: f.delong.map(|c| c.high),
            })
            .collect();
        rows.push(CurveRow {
            method: self.method.clone(),
            model_id: self.model_id.clone(),
            fraction,
            fold: "mean".into(),
            auroc: self.mean_auroc,
            ci_low: None,
            ci_high: None,
        });
        rows.push(CurveRow {
            method: self.method.clone(),
            model_id: self.model_id.clone(),
            fraction,
            fold: "pooled".into(),
            auroc: self.pooled.auroc,
            ci_low: Some(self.pooled.low),
            ci_high: Some(self.pooled.high),
        });
        rows
    }
}

/// Writes `method,model_id,fraction,fold,auroc,ci_low,ci_high`.
pub fn write_report_csv(path: &Path, rows: &[CurveRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
