//! Two-stage zero-shot grading from image/text similarity.
//!
//! Stage one keeps the patches whose aligned embedding is closer (by cosine)
//! to the cancer prompt than to the non-neoplastic prompt. Comparing the two
//! cosines directly is equivalent to asking for `P(cancer) > 0.5` under a
//! two-way softmax over those logits, at any temperature. Stage two scores
//! each kept patch by `cos(poor) - cos(well)` and aggregates per slide.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbedError, EmbeddingKind, EmbeddingMatrix, PatchEmbedder};

#[derive(Debug, thiserror::Error)]
pub enum ZeroShotError {
    #[error("cannot take the cosine of a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("expected aligned embeddings, got {0}")]
    KindMismatch(EmbeddingKind),
    #[error("invalid zero-shot configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ZeroShotError> = std::result::Result<T, E>;

/// How patch grading scores are reduced to one slide score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Aggregation {
    Max,
    Mean,
    /// Mean of the `⌈q·n⌉` largest scores.
    TopFraction { q: f64 },
}

impl Aggregation {
    pub fn top_fraction_default() -> Self {
        Aggregation::TopFraction { q: 0.1 }
    }

    pub fn label(&self) -> String {
        match self {
            Aggregation::Max => "max".into(),
            Aggregation::Mean => "mean".into(),
            Aggregation::TopFraction { q } => format!("top_fraction({q})"),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Aggregation::TopFraction { q } if !(q > 0.0 && q <= 1.0) => {
                Err(ZeroShotError::InvalidConfig(format!("top_fraction q = {q} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            "top_fraction" => Ok(Aggregation::top_fraction_default()),
            _ => {
                let q = s
                    .strip_prefix("top_fraction(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|q| q.parse::<f64>().ok())
                    .ok_or_else(|| format!("unknown aggregation '{s}'"))?;
                let a = Aggregation::TopFraction { q };
                a.validate().map_err(|e| e.to_string())?;
                Ok(a)
            }
        }
    }
}

/// Prompt lists for the four classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub cancer: Vec<String>,
    pub non_neoplastic: Vec<String>,
    pub poor: Vec<String>,
    pub well: Vec<String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        let v = |s: &[&str]| s.iter().map(|p| p.to_string()).collect();
        Self {
            cancer: v(&[
                "an H&E image of carcinoma",
                "invasive carcinoma",
                "an H&E image of tumor tissue",
            ]),
            non_neoplastic: v(&[
                "an H&E image of normal tissue",
                "non-neoplastic tissue",
                "an H&E image of benign tissue",
            ]),
            poor: v(&[
                "poorly differentiated carcinoma",
                "an H&E image of high grade carcinoma",
                "poorly differentiated tumor",
            ]),
            well: v(&[
                "well differentiated carcinoma",
                "an H&E image of low grade carcinoma",
                "well differentiated tumor",
            ]),
        }
    }
}

impl PromptSet {
    pub fn validate(&self) -> Result<()> {
        for (name, list) in [
            ("cancer", &self.cancer),
            ("non_neoplastic", &self.non_neoplastic),
            ("poor", &self.poor),
            ("well", &self.well),
        ] {
            if list.is_empty() {
                return Err(ZeroShotError::InvalidConfig(format!("no {name} prompts")));
            }
        }
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let p: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        p.validate()?;
        Ok(p)
    }
}

/// Zero-shot settings. Without `ensemble` only the first prompt of each class
/// is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZeroShotConfig {
    pub prompts: PromptSet,
    pub aggregation: Aggregation,
    pub ensemble: bool,
}

impl Default for ZeroShotConfig {
    fn default() -> Self {
        Self {
            prompts: PromptSet::default(),
            aggregation: Aggregation::Max,
            ensemble: true,
        }
    }
}

/// Prompt vectors per class, already embedded.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassVectors {
    pub cancer: Vec<Vec<f64>>,
    pub non_neoplastic: Vec<Vec<f64>>,
    pub poor: Vec<Vec<f64>>,
    pub well: Vec<Vec<f64>>,
}

impl ClassVectors {
    /// One vector per class.
    pub fn single(cancer: Vec<f64>, non: Vec<f64>, poor: Vec<f64>, well: Vec<f64>) -> Self {
        Self {
            cancer: vec![cancer],
            non_neoplastic: vec![non],
            poor: vec![poor],
            well: vec![well],
        }
    }

    /// Embeds the configured prompts with `embedder`.
    pub fn embed(config: &ZeroShotConfig, embedder: &mut dyn PatchEmbedder) -> Result<Self> {
        config.prompts.validate()?;
        let take = |list: &[String]| -> Vec<String> {
            if config.ensemble {
                list.to_vec()
            } else {
                list[..1].to_vec()
            }
        };
        let mut embed = |list: &[String]| -> Result<Vec<Vec<f64>>> {
            take(list)
                .iter()
                .map(|p| Ok(embedder.embed_text(p)?.iter().map(|&x| x as f64).collect()))
                .collect()
        };
        Ok(Self {
            cancer: embed(&config.prompts.cancer)?,
            non_neoplastic: embed(&config.prompts.non_neoplastic)?,
            poor: embed(&config.prompts.poor)?,
            well: embed(&config.prompts.well)?,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a·b / (‖a‖ ‖b‖)`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ZeroShotError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(ZeroShotError::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

fn rows_of(e: &EmbeddingMatrix) -> Result<Vec<Vec<f64>>> {
    if e.kind != EmbeddingKind::Aligned {
        return Err(ZeroShotError::KindMismatch(e.kind));
    }
    Ok(e.to_f64_rows())
}

/// Per patch, the mean cosine to each prompt vector of a class.
pub fn ensemble_logits(rows: &[Vec<f64>], prompts: &[Vec<f64>]) -> Result<Vec<f64>> {
    if prompts.is_empty() {
        return Err(ZeroShotError::InvalidConfig("empty prompt list".into()));
    }
    rows.iter()
        .map(|z| {
            let mut s = 0.0;
            for p in prompts {
                s += cosine(z, p)?;
            }
            Ok(s / prompts.len() as f64)
        })
        .collect()
}

/// Indices `j` with `cos(z_j, cancer) > cos(z_j, non)`; ties are excluded.
pub fn filter_cancer_patches(e: &EmbeddingMatrix, z_cancer: &[f64], z_non: &[f64]) -> Result<Vec<usize>> {
    let rows = rows_of(e)?;
    let c = ensemble_logits(&rows, std::slice::from_ref(&z_cancer.to_vec()))?;
    let n = ensemble_logits(&rows, std::slice::from_ref(&z_non.to_vec()))?;
    Ok(cancer_set(&c, &n))
}

fn cancer_set(cancer: &[f64], non: &[f64]) -> Vec<usize> {
    (0..cancer.len()).filter(|&j| cancer[j] > non[j]).collect()
}

/// `cos(z, poor) - cos(z, well)`.
pub fn grade_score(z: &[f64], z_poor: &[f64], z_well: &[f64]) -> Result<f64> {
    Ok(cosine(z, z_poor)? - cosine(z, z_well)?)
}

/// Reduces scores to a slide score. `None` for an empty list.
pub fn aggregate(scores: &[f64], aggregation: Aggregation) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    // Rounded sums can land just outside the range that contains the exact
    // mean (three copies of 0.1 average to more than 0.1), so each mean is
    // clamped back; this keeps max >= top-fraction >= mean exact.
    let mean = (scores.iter().sum::<f64>() / n as f64).clamp(min, max);
    Some(match aggregation {
        Aggregation::Max => max,
        Aggregation::Mean => mean,
        Aggregation::TopFraction { q } => {
            let m = ((q * n as f64).ceil() as usize).clamp(1, n);
            let mut sorted = scores.to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            (sorted[..m].iter().sum::<f64>() / m as f64).clamp(mean, max)
        }
    })
}

/// Per-patch logits and scores of one slide.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchScores {
    pub cancer_logit: Vec<f64>,
    pub non_logit: Vec<f64>,
    /// All patch grading scores; only entries in `cancer_set` are used
    /// unless the set is empty.
    pub grade_score: Vec<f64>,
    pub cancer_set: Vec<usize>,
}

pub fn patch_scores(e: &EmbeddingMatrix, vectors: &ClassVectors) -> Result<PatchScores> {
    let rows = rows_of(e)?;
    let cancer_logit = ensemble_logits(&rows, &vectors.cancer)?;
    let non_logit = ensemble_logits(&rows, &vectors.non_neoplastic)?;
    let poor = ensemble_logits(&rows, &vectors.poor)?;
    let well = ensemble_logits(&rows, &vectors.well)?;
    let grade_score = poor.iter().zip(&well).map(|(p, w)| p - w).collect();
    let cancer_set = cancer_set(&cancer_logit, &non_logit);
    Ok(PatchScores {
        cancer_logit,
        non_logit,
        grade_score,
        cancer_set,
    })
}

/// Slide-level zero-shot result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideScore {
    pub slide_id: String,
    pub aggregation: String,
    pub score: f64,
    /// No patch passed the cancer filter; the score covers all tissue patches.
    pub empty_set_flag: bool,
    pub cancer_patches: usize,
}

/// Slide score over the cancer set, or over all patches when it is empty.
pub fn slide_score(ps: &PatchScores, aggregation: Aggregation) -> (f64, bool) {
    let selected: Vec<f64> = ps.cancer_set.iter().map(|&j| ps.grade_score[j]).collect();
    match aggregate(&selected, aggregation) {
        Some(s) => (s, false),
        None => (aggregate(&ps.grade_score, aggregation).unwrap_or(0.0), true),
    }
}

/// Full two-stage scoring of one slide.
pub fn score_slide(e: &EmbeddingMatrix, vectors: &ClassVectors, aggregation: Aggregation) -> Result<SlideScore> {
    aggregation.validate()?;
    let ps = patch_scores(e, vectors)?;
    let (score, empty) = slide_score(&ps, aggregation);
    Ok(SlideScore {
        slide_id: e.slide_id.clone(),
        aggregation: aggregation.label(),
        score,
        empty_set_flag: empty,
        cancer_patches: ps.cancer_set.len(),
    })
}

/// Writes `slide_id,aggregation,score,empty_set_flag,n_cancer_patches`.
pub fn write_scores_csv(path: &Path, scores: &[SlideScore]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["slide_id", "aggregation", "score", "empty_set_flag", "n_cancer_patches"])?;
    for s in scores {
        w.write_record([
            s.slide_id.clone(),
            s.aggregation.clone(),
            format!("{:.17e}", s.score),
            s.empty_set_flag.to_string(),
            s.cancer_patches.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
