use std::collections::BTreeMap;

use crate::autodiff::{LossKind, Sequential};
use crate::domain::{ClassLabel, WholeTrialSample};
use crate::error::{Error, Result};
use crate::eval::dice_per_class;
use crate::seed::rng_for;

use super::arch::{decode_heads, SegmenterConfig};
use super::train::{fit, predict_all, Example, History, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSegmenter {
    pub cfg: SegmenterConfig,
    pub net: Sequential,
}

fn examples(trials: &[WholeTrialSample], cfg: &SegmenterConfig) -> Result<Vec<Example>> {
    trials
        .iter()
        .map(|t| {
            if t.values.len() != cfg.input_len {
                return Err(Error::LengthMismatch {
                    left: t.values.len(),
                    right: cfg.input_len,
                });
            }
            Ok(Example {
                input: t.values.clone(),
                target: SegmenterConfig::target(&t.labels),
            })
        })
        .collect()
}

/// Trains the three heads jointly on mean BCE over all head units.
pub fn train_segmenter(
    train: &[WholeTrialSample],
    val: &[WholeTrialSample],
    cfg: &SegmenterConfig,
    tcfg: &TrainConfig,
) -> Result<(TrainedSegmenter, History)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    let train_ex = examples(train, cfg)?;
    let val_ex = examples(val, cfg)?;
    let mut net = Sequential::build(cfg.specs(), cfg.input_len, 1, &mut rng_for(tcfg.seed, "init", 0))?;
    let history = fit(&mut net, &train_ex, &val_ex, LossKind::Bce, tcfg)?;
    Ok((TrainedSegmenter { cfg: cfg.clone(), net }, history))
}

impl TrainedSegmenter {
    pub fn predict(&self, trials: &[WholeTrialSample]) -> Result<Vec<Vec<ClassLabel>>> {
        let refs: Vec<&[f64]> = trials.iter().map(|t| t.values.as_slice()).collect();
        Ok(predict_all(&self.net, &refs)?
            .iter()
            .map(|row| decode_heads(row, self.cfg.input_len))
            .collect())
    }
}

pub fn predict_segmentation(model: &TrainedSegmenter, trial: &WholeTrialSample) -> Result<Vec<ClassLabel>> {
    Ok(model.predict(std::slice::from_ref(trial))?.remove(0))
}

/// Per-class Dice averaged over trials.
pub fn mean_dice(preds: &[Vec<ClassLabel>], truths: &[WholeTrialSample]) -> Result<BTreeMap<ClassLabel, f64>> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: truths.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::Empty("segmentation predictions"));
    }
    let mut sums: BTreeMap<ClassLabel, f64> = ClassLabel::ALL.iter().map(|&c| (c, 0.0)).collect();
    for (p, t) in preds.iter().zip(truths) {
        for (c, d) in dice_per_class(p, &t.labels)? {
            *sums.get_mut(&c).expect("all classes") += d;
        }
    }
    let n = preds.len() as f64;
    Ok(sums.into_iter().map(|(c, s)| (c, s / n)).collect())
}
