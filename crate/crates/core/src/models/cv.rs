use std::collections::{BTreeMap, BTreeSet};

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ClassLabel, SegmentSample};
use crate::error::{Error, Result};
use crate::eval::confusion_and_accuracy;
use crate::seed::{derive_seed, rng_for};

use super::arch::ClassifierConfig;
use super::classifier::{train_classifier, TrainedClassifier};
use super::train::{History, TrainConfig};

/// Trial groups assigned to each role in one fold iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train: BTreeSet<u64>,
    pub val: BTreeSet<u64>,
    pub test: BTreeSet<u64>,
}

impl FoldSplit {
    /// Indices of `groups` falling in each role, as (train, val, test).
    pub fn indices(&self, groups: &[u64]) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let pick = |set: &BTreeSet<u64>| (0..groups.len()).filter(|&i| set.contains(&groups[i])).collect();
        (pick(&self.train), pick(&self.val), pick(&self.test))
    }
}

/// Shuffles the distinct groups from `seed` and deals them into `k` folds.
/// Iteration `i` tests on fold `i`, validates on fold `(i + 1) mod k` and
/// trains on the rest.
pub fn plan_folds(groups: &[u64], k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    let mut distinct: Vec<u64> = groups.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if k < 3 || distinct.len() < k {
        return Err(Error::TooFewGroups {
            groups: distinct.len(),
            k,
        });
    }
    distinct.shuffle(&mut rng_for(seed, "folds", k as u64));
    let mut folds = vec![BTreeSet::new(); k];
    for (i, g) in distinct.into_iter().enumerate() {
        folds[i % k].insert(g);
    }
    Ok((0..k)
        .map(|i| {
            let v = (i + 1) % k;
            FoldSplit {
                test: folds[i].clone(),
                val: folds[v].clone(),
                train: (0..k)
                    .filter(|&j| j != i && j != v)
                    .flat_map(|j| folds[j].iter().copied())
                    .collect(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    #[serde(rename = "fold")]
    pub fold_index: usize,
    #[serde(rename = "accuracy")]
    pub test_accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    #[serde(rename = "dice", skip_serializing_if = "Option::is_none", default)]
    pub dice_per_class: Option<BTreeMap<ClassLabel, f64>>,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub report: FoldReport,
    pub split: FoldSplit,
    pub history: History,
    pub model: TrainedClassifier,
    pub test_predictions: Vec<ClassLabel>,
}

#[derive(Debug, Clone)]
pub struct CvRun {
    pub folds: Vec<FoldOutcome>,
}

impl CvRun {
    pub fn mean_accuracy(&self) -> f64 {
        self.folds.iter().map(|f| f.report.test_accuracy).sum::<f64>() / self.folds.len() as f64
    }

    pub fn reports(&self) -> Vec<FoldReport> {
        self.folds.iter().map(|f| f.report.clone()).collect()
    }
}

fn gather(samples: &[SegmentSample], idx: &[usize]) -> Vec<SegmentSample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

/// Seed used for the model of fold `i`.
pub fn fold_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, "fold", i as u64)
}

/// Grouped k-fold cross-validation. Samples whose label is not among the
/// configured classes are ignored. Folds train in parallel; each fold is
/// deterministic on its own.
pub fn kfold_cv(
    samples: &[SegmentSample],
    groups: &[u64],
    k: usize,
    cfg: &ClassifierConfig,
    tcfg: &TrainConfig,
) -> Result<CvRun> {
    cfg.validate()?;
    if samples.len() != groups.len() {
        return Err(Error::LengthMismatch {
            left: samples.len(),
            right: groups.len(),
        });
    }
    let keep: Vec<usize> = (0..samples.len()).filter(|&i| cfg.classes.contains(&samples[i].label)).collect();
    let samples: Vec<SegmentSample> = gather(samples, &keep);
    let groups: Vec<u64> = keep.iter().map(|&i| groups[i]).collect();
    let splits = plan_folds(&groups, k, tcfg.seed)?;
    let folds = splits
        .into_par_iter()
        .enumerate()
        .map(|(i, split)| {
            let (tr, va, te) = split.indices(&groups);
            let test = gather(&samples, &te);
            if test.is_empty() {
                return Err(Error::EmptySplit("test"));
            }
            let fold_cfg = TrainConfig {
                seed: fold_seed(tcfg.seed, i),
                ..tcfg.clone()
            };
            let (model, history) = train_classifier(&gather(&samples, &tr), &gather(&samples, &va), cfg, &fold_cfg)?;
            let preds = model.predict(&test)?;
            let truths: Vec<ClassLabel> = test.iter().map(|s| s.label).collect();
            let (confusion, acc) = confusion_and_accuracy(&preds, &truths, &cfg.classes)?;
            info!("fold {i}: accuracy {acc:.4} after {} epochs", history.train_loss.len());
            Ok(FoldOutcome {
                report: FoldReport {
                    fold_index: i,
                    test_accuracy: acc,
                    confusion,
                    dice_per_class: None,
                },
                split,
                history,
                model,
                test_predictions: preds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CvRun { folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_groups() {
        let groups: Vec<u64> = (0..40).map(|i| i / 2).collect();
        let splits = plan_folds(&groups, 10, 7).unwrap();
        let mut tested = BTreeSet::new();
        for s in &splits {
            assert_eq!(s.train.len(), 16);
            assert_eq!(s.val.len(), 2);
            assert_eq!(s.test.len(), 2);
            assert!(s.train.is_disjoint(&s.val) && s.train.is_disjoint(&s.test) && s.val.is_disjoint(&s.test));
            for g in &s.test {
                assert!(tested.insert(*g), "group {g} tested twice");
            }
        }
        assert_eq!(tested.len(), 20);
        assert_eq!(splits, plan_folds(&groups, 10, 7).unwrap());
        assert_ne!(splits, plan_folds(&groups, 10, 8).unwrap());
    }

    #[test]
    fn too_few_groups() {
        let groups = [1, 1, 2, 3];
        assert!(matches!(plan_folds(&groups, 10, 0), Err(Error::TooFewGroups { groups: 3, k: 10 })));
    }

    #[test]
    fn report_json_shape() {
        let r = FoldReport {
            fold_index: 2,
            test_accuracy: 0.5,
            confusion: vec![vec![1, 1], vec![0, 2]],
            dice_per_class: Some(ClassLabel::ALL.iter().map(|&c| (c, 1.0)).collect()),
        };
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(
            json,
            r#"{"fold":2,"accuracy":0.5,"confusion":[[1,1],[0,2]],"dice":{"1":1.0,"2":1.0,"3":1.0}}"#
        );
    }
}
