//! Fold-level stages: clustering, training, evaluation and learning curves.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Method;
use super::layout::ensure_parent;
use super::slides::read_zeroshot_scores;
use super::{parallel_map, read_json, require_all, require_any, write_json, Command, OrchestratorError, Pipeline, Result, StageReport};
use crate::clustering::{
    assign, kmeans_fit_restarts, select_k, slide_histogram, univariate_cluster_auroc, write_model, ClusterModel,
    KSelection, SlideHistogram,
};
use crate::embedding::{l2_normalize, read_embeddings, EmbeddingKind};
use crate::evaluation::{
    build_report, grade_task_labels, make_folds, nested_subsample, write_report_csv, CurveRow, EvalReport, FoldOutcome,
    FoldPlan, Split, FULL_FRACTION_PERMILLE,
};
use crate::learners::{logreg_fit, train_abmil, write_history_csv, write_mil_model, Bag, TrainConfig};
use crate::rng::derive_seed;

/// Fold assignments shared by every method of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlans {
    /// Train/test folds used by clustering, logistic regression and
    /// zero-shot scoring.
    pub cv: FoldPlan,
    /// Train/validation/test folds used by ABMIL. Test splits coincide with
    /// those of `cv`.
    pub cv_val: FoldPlan,
}

/// One slide's label and score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSlide {
    pub slide_id: String,
    pub label: bool,
    pub score: f64,
}

/// Predictions of one trained (method, fold, fraction) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPredictions {
    pub method: Method,
    pub fold: usize,
    pub fraction_permille: u32,
    pub n_train: usize,
    pub test: Vec<ScoredSlide>,
    pub calib: Vec<ScoredSlide>,
    pub calib_split: Split,
}

impl FoldPredictions {
    pub fn outcome(&self) -> FoldOutcome {
        FoldOutcome {
            fold: self.fold,
            test_slide_ids: self.test.iter().map(|s| s.slide_id.clone()).collect(),
            test_scores: self.test.iter().map(|s| s.score).collect(),
            test_labels: self.test.iter().map(|s| s.label).collect(),
            calib_scores: self.calib.iter().map(|s| s.score).collect(),
            calib_labels: self.calib.iter().map(|s| s.label).collect(),
            calib_split: self.calib_split,
        }
    }
}

/// Stream tags keeping clustering and training seeds apart.
const TAG_CLUSTER: u64 = 0xC1;
const TAG_POOLED: u64 = 0xC2;
const TAG_ABMIL: u64 = 0xAB;

fn task_paths<'a>(p: &'a Pipeline, ids: impl IntoIterator<Item = &'a str> + 'a) -> impl Iterator<Item = std::path::PathBuf> + 'a {
    ids.into_iter().map(move |id| p.layout.embedding(EmbeddingKind::Task, id))
}

fn require_task_embeddings(p: &Pipeline) -> Result<()> {
    if !p.config.has_kind(EmbeddingKind::Task) {
        return Err(OrchestratorError::Usage("this stage needs the task embedding kind".into()));
    }
    require_any(p.manifest.records.iter().map(|r| p.layout.mask(&r.slide_id)))?;
    require_any(task_paths(p, p.manifest.records.iter().map(|r| r.slide_id.as_str())))
}

/// Patch rows and coordinates of one slide's task embeddings.
pub(super) struct Bag64 {
    pub rows: Vec<Vec<f64>>,
    pub coords: Vec<(u32, u32)>,
}

pub(super) fn read_task_bag(p: &Pipeline, slide: &str) -> Result<Bag64> {
    let path = p.layout.embedding(EmbeddingKind::Task, slide);
    if !path.exists() {
        return Err(OrchestratorError::MissingUpstreamArtifact { path });
    }
    let m = read_embeddings(&path)?;
    m.expect_kind(EmbeddingKind::Task)?;
    let mut rows = m.to_f64_rows();
    if p.config.normalize_task_embeddings {
        for r in &mut rows {
            *r = l2_normalize(r)?;
        }
    }
    Ok(Bag64 {
        rows,
        coords: m.coords.clone(),
    })
}

/// Loads the bags of `ids` in order.
pub(super) fn read_bags(p: &Pipeline, ids: &[String]) -> Result<Vec<Bag64>> {
    parallel_map(ids, p.workers(), |_, id| read_task_bag(p, id)).into_iter().collect()
}

pub(super) fn read_plans(p: &Pipeline) -> Result<FoldPlans> {
    read_json(&p.layout.fold_plans())
}

/// Fits the clustering for one development set: silhouette selection when
/// candidates are configured, otherwise the fixed k.
fn fit_clusters(p: &Pipeline, bags: &[Bag64], dev: &[usize], seed: u64) -> Result<(ClusterModel, Option<KSelection>)> {
    let rows: Vec<Vec<f64>> = dev.iter().flat_map(|&i| bags[i].rows.iter().cloned()).collect();
    let cc = &p.config.cluster;
    let selection = if cc.k_candidates.is_empty() {
        None
    } else {
        Some(select_k(&rows, &cc.k_candidates, seed, cc.silhouette_cap)?)
    };
    let k = selection.as_ref().map_or(cc.k, |s| s.k);
    Ok((kmeans_fit_restarts(&rows, k, seed, cc.max_iter, cc.n_init)?, selection))
}

/// Assigns every bag and returns `(labels per bag, histograms)`.
fn histograms(model: &ClusterModel, ids: &[String], bags: &[Bag64]) -> Result<(Vec<Vec<usize>>, Vec<SlideHistogram>)> {
    let mut labels = Vec::with_capacity(bags.len());
    let mut hists = Vec::with_capacity(bags.len());
    for (id, b) in ids.iter().zip(bags) {
        let l = assign(model, &b.rows)?;
        hists.push(slide_histogram(id, &l, model.k));
        labels.push(l);
    }
    Ok((labels, hists))
}

fn write_cluster_dir(
    dir: &Path,
    model: &ClusterModel,
    selection: Option<&KSelection>,
    ids: &[String],
    bags: &[Bag64],
) -> Result<Vec<SlideHistogram>> {
    std::fs::create_dir_all(dir)?;
    let (labels, hists) = histograms(model, ids, bags)?;
    write_model(model, &dir.join("model.bin"))?;
    write_json(&dir.join("histograms.json"), &hists)?;
    if let Some(s) = selection {
        write_json(&dir.join("k_selection.json"), s)?;
    }
    let mut w = csv::Writer::from_path(dir.join("assignments.csv"))?;
    w.write_record(["slide_id", "x", "y", "cluster"])?;
    for ((id, b), l) in ids.iter().zip(bags).zip(&labels) {
        for (&(x, y), &c) in b.coords.iter().zip(l) {
            w.write_record([id.clone(), x.to_string(), y.to_string(), c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(hists)
}

/// Builds the fold plans, then clusters each fold's development split and
/// the pooled labelled cohort.
pub(super) fn cluster(p: &Pipeline) -> Result<StageReport> {
    require_task_embeddings(p)?;
    let ev = &p.config.evaluation;
    let task = grade_task_labels(&p.manifest.records, &ev.positive, &ev.negative)?;
    let (mut ids, mut patients, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (&i, &l) in task.indices.iter().zip(&task.labels) {
        let r = &p.manifest.records[i];
        if p.layout.embedding(EmbeddingKind::Task, &r.slide_id).exists() {
            ids.push(r.slide_id.clone());
            patients.push(r.patient_id.clone());
            labels.push(l);
        } else {
            log::warn!("cluster: slide {} has no task embeddings and is left out", r.slide_id);
        }
    }
    let seed = p.config.seed;
    let plans = FoldPlans {
        cv: make_folds(&ids, &patients, &labels, ev.n_folds, false, seed)?,
        cv_val: make_folds(&ids, &patients, &labels, ev.n_folds, true, seed)?,
    };
    write_json(&p.layout.fold_plans(), &plans)?;
    p.write_run_meta(Command::Cluster, &p.layout.folds_dir())?;

    let bags = read_bags(p, &ids)?;
    let folds: Vec<usize> = (0..ev.n_folds).collect();
    let per_fold: Vec<Result<()>> = parallel_map(&folds, p.workers(), |_, &f| {
        let dev = plans.cv.splits(f).train;
        let fseed = derive_seed(seed, &[TAG_CLUSTER, f as u64, FULL_FRACTION_PERMILLE as u64]);
        let (model, sel) = fit_clusters(p, &bags, &dev, fseed)?;
        write_cluster_dir(&p.layout.cluster_fold(f), &model, sel.as_ref(), &ids, &bags)?;
        Ok(())
    });
    per_fold.into_iter().collect::<Result<Vec<()>>>()?;

    let all: Vec<usize> = (0..ids.len()).collect();
    let (model, sel) = fit_clusters(p, &bags, &all, derive_seed(seed, &[TAG_POOLED]))?;
    let hists = write_cluster_dir(&p.layout.cluster_pooled(), &model, sel.as_ref(), &ids, &bags)?;
    let aurocs = univariate_cluster_auroc(&hists, &labels)?;
    write_json(&p.layout.cluster_pooled().join("univariate_auroc.json"), &aurocs)?;
    p.write_run_meta(Command::Cluster, &p.layout.cluster_root())?;
    Ok(StageReport {
        command: Command::Cluster,
        items: ev.n_folds + 1,
        failed: 0,
    })
}

fn scored(ids: &[String], labels: &[bool], idx: &[usize], score: impl Fn(usize) -> Result<f64>) -> Result<Vec<ScoredSlide>> {
    idx.iter()
        .map(|&i| {
            Ok(ScoredSlide {
                slide_id: ids[i].clone(),
                label: labels[i],
                score: score(i)?,
            })
        })
        .collect()
}

/// Inputs shared by every training cell.
struct TrainInputs {
    plans: FoldPlans,
    /// Task bags in plan order; empty when no method is trained.
    bags: Vec<Bag64>,
}

/// Artifacts a cell writes when it is part of the main training stage.
enum CellModel {
    Logreg(crate::learners::LogisticModel),
    Abmil(crate::learners::TrainOutcome, TrainConfig),
}

fn logreg_cell(p: &Pipeline, inp: &TrainInputs, fold: usize, permille: u32) -> Result<(FoldPredictions, CellModel)> {
    let plan = &inp.plans.cv;
    let s = plan.splits(fold);
    let train = nested_subsample(&s.train, &plan.labels, permille, p.config.seed, fold);
    let hists: Vec<SlideHistogram> = if permille == FULL_FRACTION_PERMILLE {
        read_json(&p.layout.cluster_fold(fold).join("histograms.json"))?
    } else {
        let seed = derive_seed(p.config.seed, &[TAG_CLUSTER, fold as u64, permille as u64]);
        let (model, _) = fit_clusters(p, &inp.bags, &train, seed)?;
        histograms(&model, &plan.slide_ids, &inp.bags)?.1
    };
    let x: Vec<Vec<f64>> = train.iter().map(|&i| hists[i].freq.clone()).collect();
    let y: Vec<bool> = train.iter().map(|&i| plan.labels[i]).collect();
    let m = logreg_fit(&x, &y, p.config.logreg.l2, p.config.logreg.max_iter)?;
    let score = |i: usize| Ok(m.logit(&hists[i].freq));
    let pred = FoldPredictions {
        method: Method::Logreg,
        fold,
        fraction_permille: permille,
        n_train: train.len(),
        test: scored(&plan.slide_ids, &plan.labels, &s.test, score)?,
        calib: scored(&plan.slide_ids, &plan.labels, &train, score)?,
        calib_split: Split::Train,
    };
    Ok((pred, CellModel::Logreg(m)))
}

fn abmil_cell(p: &Pipeline, inp: &TrainInputs, fold: usize, permille: u32) -> Result<(FoldPredictions, CellModel)> {
    let plan = &inp.plans.cv_val;
    let s = plan.splits(fold);
    let train = nested_subsample(&s.train, &plan.labels, permille, p.config.seed, fold);
    let bag = |i: usize| Bag {
        instances: &inp.bags[i].rows,
        label: plan.labels[i],
    };
    let cfg = TrainConfig {
        seed: derive_seed(p.config.seed, &[TAG_ABMIL, fold as u64, permille as u64]),
        ..p.config.abmil.clone()
    };
    let train_bags: Vec<Bag<'_>> = train.iter().map(|&i| bag(i)).collect();
    let val_bags: Vec<Bag<'_>> = s.val.iter().map(|&i| bag(i)).collect();
    let out = train_abmil(&train_bags, &val_bags, &cfg)?;
    let score = |i: usize| Ok(out.model.forward(&inp.bags[i].rows)?.logit);
    let pred = FoldPredictions {
        method: Method::Abmil,
        fold,
        fraction_permille: permille,
        n_train: train.len(),
        test: scored(&plan.slide_ids, &plan.labels, &s.test, score)?,
        calib: scored(&plan.slide_ids, &plan.labels, &s.val, score)?,
        calib_split: Split::Val,
    };
    Ok((pred, CellModel::Abmil(out, cfg)))
}

fn run_cell(p: &Pipeline, inp: &TrainInputs, method: Method, fold: usize, permille: u32) -> Result<(FoldPredictions, CellModel)> {
    match method {
        Method::Logreg => logreg_cell(p, inp, fold, permille),
        Method::Abmil => abmil_cell(p, inp, fold, permille),
        Method::Zeroshot => unreachable!("zero-shot scoring has no training cell"),
    }
}

fn trained_methods(p: &Pipeline) -> Vec<Method> {
    let mut m: Vec<Method> = p.config.evaluation.methods.iter().copied().filter(|m| m.is_trained()).collect();
    m.sort();
    m.dedup();
    m
}

fn train_inputs(p: &Pipeline, methods: &[Method]) -> Result<TrainInputs> {
    require_task_embeddings(p)?;
    let plans = read_plans(p)?;
    let n = plans.cv.n_folds;
    if methods.contains(&Method::Logreg) {
        require_all((0..n).map(|f| p.layout.cluster_fold(f).join("histograms.json")))?;
    }
    let bags = if methods.is_empty() {
        Vec::new()
    } else {
        read_bags(p, &plans.cv.slide_ids)?
    };
    Ok(TrainInputs { plans, bags })
}

fn write_cell(p: &Pipeline, pred: &FoldPredictions, model: &CellModel) -> Result<()> {
    let dir = p.layout.train_fold(pred.method, pred.fold);
    std::fs::create_dir_all(&dir)?;
    write_json(&dir.join("predictions.json"), pred)?;
    match model {
        CellModel::Logreg(m) => write_json(&dir.join("model.json"), m)?,
        CellModel::Abmil(out, cfg) => {
            #[derive(Serialize)]
            struct Extra<'a> {
                fold: usize,
                best_epoch: usize,
                train: &'a TrainConfig,
            }
            let extra = Extra {
                fold: pred.fold,
                best_epoch: out.best_epoch,
                train: cfg,
            };
            write_mil_model(&out.model, &extra, &dir.join("model.bin"))?;
            write_history_csv(&dir.join("history.csv"), &out.history)?;
        }
    }
    Ok(())
}

/// Trains every configured method on every fold.
pub(super) fn train(p: &Pipeline) -> Result<StageReport> {
    let methods = trained_methods(p);
    let inp = train_inputs(p, &methods)?;
    let cells: Vec<(Method, usize)> = methods
        .iter()
        .flat_map(|&m| (0..inp.plans.cv.n_folds).map(move |f| (m, f)))
        .collect();
    let results = parallel_map(&cells, p.workers(), |_, &(m, f)| {
        let (pred, model) = run_cell(p, &inp, m, f, FULL_FRACTION_PERMILLE)?;
        write_cell(p, &pred, &model)
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;
    p.write_run_meta(Command::Train, &p.layout.train_root())?;
    Ok(StageReport {
        command: Command::Train,
        items: cells.len(),
        failed: 0,
    })
}

/// Zero-shot outcomes on the `cv` folds; thresholds come from the training
/// split since there is nothing to fit.
fn zeroshot_outcomes(p: &Pipeline, plans: &FoldPlans) -> Result<Vec<FoldOutcome>> {
    let scores: HashMap<String, f64> = read_zeroshot_scores(p)?.into_iter().collect();
    let plan = &plans.cv;
    let score = |i: usize| {
        scores.get(&plan.slide_ids[i]).copied().ok_or_else(|| {
            OrchestratorError::Usage(format!(
                "slide {} has no zero-shot score in {}",
                plan.slide_ids[i],
                p.layout.zeroshot_scores().display()
            ))
        })
    };
    (0..plan.n_folds)
        .map(|f| {
            let s = plan.splits(f);
            Ok(FoldPredictions {
                method: Method::Zeroshot,
                fold: f,
                fraction_permille: FULL_FRACTION_PERMILLE,
                n_train: 0,
                test: scored(&plan.slide_ids, &plan.labels, &s.test, score)?,
                calib: scored(&plan.slide_ids, &plan.labels, &s.train, score)?,
                calib_split: Split::Train,
            }
            .outcome())
        })
        .collect()
}

fn configured_methods(p: &Pipeline) -> Vec<Method> {
    let mut m = p.config.evaluation.methods.clone();
    m.sort();
    m.dedup();
    m
}

/// One [`EvalReport`] per method, plus `report.csv` with per-fold, mean and
/// pooled AUROC rows.
pub(super) fn evaluate(p: &Pipeline) -> Result<StageReport> {
    require_task_embeddings(p)?;
    let methods = configured_methods(p);
    if methods.contains(&Method::Zeroshot) {
        require_any(
            p.manifest
                .records
                .iter()
                .map(|r| p.layout.embedding(EmbeddingKind::Aligned, &r.slide_id)),
        )?;
        require_all([p.layout.zeroshot_scores()])?;
    }
    require_all([p.layout.fold_plans()])?;
    let plans = read_plans(p)?;
    let n = plans.cv.n_folds;
    for &m in methods.iter().filter(|m| m.is_trained()) {
        require_all((0..n).map(|f| p.layout.train_fold(m, f).join("predictions.json")))?;
    }
    let mut rows: Vec<CurveRow> = Vec::new();
    for &m in &methods {
        let outcomes = if m == Method::Zeroshot {
            zeroshot_outcomes(p, &plans)?
        } else {
            (0..n)
                .map(|f| Ok(read_json::<FoldPredictions>(&p.layout.train_fold(m, f).join("predictions.json"))?.outcome()))
                .collect::<Result<Vec<_>>>()?
        };
        let report = build_report(m.as_str(), &p.config.model_id, &outcomes, p.config.evaluation.targets)?;
        write_json(&p.layout.eval_report(m), &report)?;
        rows.extend(report.curve_rows(1.0));
    }
    let csv_path = p.layout.eval_dir().join("report.csv");
    ensure_parent(&csv_path)?;
    write_report_csv(&csv_path, &rows)?;
    p.write_run_meta(Command::Evaluate, &p.layout.eval_dir())?;
    Ok(StageReport {
        command: Command::Evaluate,
        items: methods.len(),
        failed: 0,
    })
}

/// Retrains every method on nested stratified subsets of each fold's
/// training split and reports test AUROC per fraction.
pub(super) fn curve(p: &Pipeline) -> Result<StageReport> {
    let methods = trained_methods(p);
    let inp = train_inputs(p, &methods)?;
    let n = inp.plans.cv.n_folds;
    let mut fractions = p.config.evaluation.fractions_permille.clone();
    fractions.sort_unstable();
    fractions.dedup();
    let cells: Vec<(Method, u32, usize)> = methods
        .iter()
        .flat_map(|&m| fractions.iter().flat_map(move |&q| (0..n).map(move |f| (m, q, f))))
        .collect();
    let results = parallel_map(&cells, p.workers(), |_, &(m, q, f)| run_cell(p, &inp, m, f, q).map(|r| r.0));
    let preds = results.into_iter().collect::<Result<Vec<FoldPredictions>>>()?;
    let mut rows = Vec::new();
    let dir = p.layout.curve_dir();
    for (chunk, cell) in preds.chunks(n).zip(cells.chunks(n)) {
        let (m, q, _) = cell[0];
        let outcomes: Vec<FoldOutcome> = chunk.iter().map(FoldPredictions::outcome).collect();
        let report: EvalReport = build_report(m.as_str(), &p.config.model_id, &outcomes, p.config.evaluation.targets)?;
        write_json(&dir.join("reports").join(format!("{}_{q:04}.json", m.as_str())), &report)?;
        rows.extend(report.curve_rows(q as f64 / 1000.0));
    }
    write_report_csv(&dir.join("curve.csv"), &rows)?;
    p.write_run_meta(Command::Curve, &dir)?;
    Ok(StageReport {
        command: Command::Curve,
        items: cells.len(),
        failed: 0,
    })
}
