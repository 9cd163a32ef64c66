//! ABMIL training loop.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::abmil::{MilModel, MilShape, DEFAULT_ATTENTION_HIDDEN};
use super::optim::{cyclic_lr, Adam, AdamConfig, CyclicLr};
use super::{LearnError, Result};
use crate::evaluation::auroc;
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub schedule: CyclicLr,
    pub adam: AdamConfig,
    pub max_epochs: usize,
    /// Epochs without a better validation AUROC before stopping.
    pub patience: usize,
    pub attention_hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: CyclicLr::default(),
            adam: AdamConfig::default(),
            max_epochs: 40,
            patience: 5,
            attention_hidden: DEFAULT_ATTENTION_HIDDEN,
            seed: 0,
        }
    }
}

/// A labelled bag of instance embeddings.
#[derive(Debug, Clone, Copy)]
pub struct Bag<'a> {
    pub instances: &'a [Vec<f64>],
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the epoch's optimiser steps.
    pub train_loss: f64,
    pub val_auroc: f64,
    pub val_loss: f64,
    /// Learning rate of the epoch's first step.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: MilModel,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

fn check_classes(bags: &[Bag<'_>]) -> Result<()> {
    if bags.iter().all(|b| b.label) || bags.iter().all(|b| !b.label) {
        return Err(LearnError::SingleClass);
    }
    Ok(())
}

fn evaluate(model: &MilModel, bags: &[Bag<'_>]) -> Result<(f64, f64)> {
    let mut scores = Vec::with_capacity(bags.len());
    let mut labels = Vec::with_capacity(bags.len());
    let mut loss = 0.0;
    for b in bags {
        let f = model.forward(b.instances)?;
        loss += super::abmil::bce_with_logit(f.logit, b.label as u8 as f64);
        scores.push(f.logit);
        labels.push(b.label);
    }
    Ok((auroc(&scores, &labels)?, loss / bags.len() as f64))
}

/// Trains with one Adam step per bag, bags shuffled each epoch, and returns
/// the parameters of the epoch with the best validation AUROC (ties broken
/// by lower validation loss, then by the earlier epoch).
pub fn train_abmil(train: &[Bag<'_>], val: &[Bag<'_>], cfg: &TrainConfig) -> Result<TrainOutcome> {
    check_classes(train)?;
    check_classes(val)?;
    let dim = train[0].instances.first().ok_or(LearnError::EmptyBag)?.len();
    let mut model = MilModel::init(MilShape::new(dim, cfg.attention_hidden), cfg.seed);
    let mut adam = Adam::new(model.params.len(), cfg.adam);
    let mut rng = stream(cfg.seed, &[0x7A]);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let steps_per_epoch = train.len();

    let mut best: Option<(f64, f64, usize, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let first_lr = cyclic_lr(step, steps_per_epoch, &cfg.schedule);
        let mut loss_sum = 0.0;
        for &i in &order {
            let b = &train[i];
            let g = model.gradients(b.instances, b.label as u8 as f64)?;
            if !g.loss.is_finite() || g.params.iter().any(|v| !v.is_finite()) {
                return Err(LearnError::NonFinite(format!("epoch {epoch}, training bag {i}")));
            }
            loss_sum += g.loss;
            let lr = cyclic_lr(step, steps_per_epoch, &cfg.schedule);
            adam.step(&mut model.params, &g.params, lr);
            step += 1;
        }
        let (val_auroc, val_loss) = evaluate(&model, val)?;
        if !val_loss.is_finite() {
            return Err(LearnError::NonFinite(format!("epoch {epoch}, validation loss")));
        }
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_auroc,
            val_loss,
            lr: first_lr,
        });
        let improved = match &best {
            None => true,
            Some((a, l, _, _)) => val_auroc > *a || (val_auroc == *a && val_loss < *l),
        };
        if improved {
            best = Some((val_auroc, val_loss, epoch, model.params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let best_epoch = match best {
        Some((_, _, epoch, params)) => {
            model.params = params;
            epoch
        }
        None => 0,
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
    })
}

/// Writes `epoch,train_loss,val_auroc,val_loss,lr`.
pub fn write_history_csv(path: &std::path::Path, history: &[EpochRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in history {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Positive bags hold a few instances shifted along the first axis.
    fn planted(n_bags: usize, seed: u64) -> Vec<(Vec<Vec<f64>>, bool)> {
        let mut rng = stream(seed, &[]);
        (0..n_bags)
            .map(|b| {
                let label = b % 2 == 0;
                let n = rng.random_range(5..12);
                let mut inst: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..6).map(|_| rng.random_range(-0.5..0.5)).collect())
                    .collect();
                if label {
                    for row in inst.iter_mut().take(2) {
                        row[0] += 3.0;
                    }
                }
                (inst, label)
            })
            .collect()
    }

    fn bags(data: &[(Vec<Vec<f64>>, bool)]) -> Vec<Bag<'_>> {
        data.iter()
            .map(|(i, l)| Bag {
                instances: i,
                label: *l,
            })
            .collect()
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            attention_hidden: 8,
            max_epochs: 20,
            patience: 20,
            schedule: CyclicLr {
                lr_min: 5e-4,
                lr_max: 5e-3,
                half_cycle: 2,
            },
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn learns_planted_bags() {
        let tr = planted(40, 1);
        let va = planted(10, 2);
        let out = train_abmil(&bags(&tr), &bags(&va), &quick_cfg()).unwrap();
        let last = out.history.last().unwrap();
        assert!(last.train_loss < 0.1, "{:?}", out.history);
    }

    #[test]
    fn zero_learning_rate_keeps_initial_parameters() {
        let tr = planted(6, 1);
        let va = planted(4, 2);
        let mut cfg = quick_cfg();
        cfg.schedule.lr_min = 0.0;
        cfg.schedule.lr_max = 0.0;
        cfg.max_epochs = 3;
        let out = train_abmil(&bags(&tr), &bags(&va), &cfg).unwrap();
        let init = MilModel::init(MilShape::new(6, cfg.attention_hidden), cfg.seed);
        assert_eq!(out.model, init);
    }

    #[test]
    fn same_seed_same_parameters() {
        let tr = planted(12, 5);
        let va = planted(6, 6);
        let mut cfg = quick_cfg();
        cfg.max_epochs = 4;
        let a = train_abmil(&bags(&tr), &bags(&va), &cfg).unwrap();
        let b = train_abmil(&bags(&tr), &bags(&va), &cfg).unwrap();
        assert_eq!(
            a.model.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.model.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
