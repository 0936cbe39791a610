//! Multi-class AdaBoost (SAMME) over exhaustively searched decision stumps.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::ClassLabel;
use crate::error::{Error, Result};

/// Sends `x[feature] <= threshold` to `left`, everything else to `right`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: ClassLabel,
    pub right: ClassLabel,
    pub alpha: f64,
}

impl Stump {
    pub fn predict(&self, x: &[f64]) -> ClassLabel {
        if x[self.feature] <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ensemble {
    pub stumps: Vec<Stump>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaBoostConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
}

impl Default for AdaBoostConfig {
    fn default() -> Self {
        Self {
            n_rounds: 200,
            learning_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Rounds,
    Perfect,
    NoBetterThanChance,
}

/// Per-round diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostTrace {
    pub errors: Vec<f64>,
    /// Sample-weight sum after each round's renormalization.
    pub weight_sums: Vec<f64>,
    pub stop: StopReason,
}

const EPS_FLOOR: f64 = 1e-10;

/// `lr * (ln((1 - eps) / eps) + ln(K - 1))`
pub fn samme_alpha(eps: f64, k: usize, lr: f64) -> f64 {
    lr * (((1.0 - eps) / eps).ln() + ((k - 1) as f64).ln())
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    left: ClassLabel,
    right: ClassLabel,
    error: f64,
}

fn majority(mass: &[f64; 3]) -> usize {
    let mut best = 0;
    for k in 1..3 {
        if mass[k] > mass[best] {
            best = k;
        }
    }
    best
}

/// Lowest weighted error stump on one feature, over midpoints between
/// consecutive distinct values. Each side predicts its weighted majority.
fn best_on_feature(features: &[Vec<f64>], labels: &[ClassLabel], weights: &[f64], f: usize) -> Option<Candidate> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| features[a][f].total_cmp(&features[b][f]).then(a.cmp(&b)));
    let mut total = [0.0; 3];
    for (l, w) in labels.iter().zip(weights) {
        total[l.index()] += w;
    }
    let mass: f64 = total.iter().sum();
    let mut left = [0.0; 3];
    let mut best: Option<Candidate> = None;
    for pos in 0..order.len() - 1 {
        let i = order[pos];
        left[labels[i].index()] += weights[i];
        let (v, next) = (features[i][f], features[order[pos + 1]][f]);
        if v == next {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1], total[2] - left[2]];
        let (lk, rk) = (majority(&left), majority(&right));
        let error = (mass - left[lk] - right[rk]).max(0.0);
        if best.is_none_or(|b| error < b.error) {
            best = Some(Candidate {
                feature: f,
                threshold: v + (next - v) / 2.0,
                left: ClassLabel::ALL[lk],
                right: ClassLabel::ALL[rk],
                error,
            });
        }
    }
    best
}

fn best_stump(features: &[Vec<f64>], labels: &[ClassLabel], weights: &[f64]) -> Candidate {
    let width = features[0].len();
    let found = (0..width)
        .into_par_iter()
        .filter_map(|f| best_on_feature(features, labels, weights, f))
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|a, b| if b.error < a.error { b } else { a });
    found.unwrap_or_else(|| {
        // every feature is constant: predict the weighted majority
        let mut total = [0.0; 3];
        for (l, w) in labels.iter().zip(weights) {
            total[l.index()] += w;
        }
        let k = majority(&total);
        Candidate {
            feature: 0,
            threshold: features[0][0],
            left: ClassLabel::ALL[k],
            right: ClassLabel::ALL[k],
            error: total.iter().sum::<f64>() - total[k],
        }
    })
}

pub fn adaboost_train(
    features: &[Vec<f64>],
    labels: &[ClassLabel],
    cfg: &AdaBoostConfig,
) -> Result<(Ensemble, BoostTrace)> {
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: labels.len(),
        });
    }
    let k = labels.iter().collect::<BTreeSet<_>>().len();
    if k < 2 {
        return Err(Error::SingleClass);
    }
    let width = features[0].len();
    if width == 0 || features.iter().any(|x| x.len() != width) {
        return Err(Error::ShapeMismatch("feature vectors must share a nonzero length".into()));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::BadConfig("learning_rate must be positive".into()));
    }
    let n = labels.len();
    let mut weights = vec![1.0 / n as f64; n];
    let mut stumps = Vec::new();
    let mut trace = BoostTrace {
        errors: Vec::new(),
        weight_sums: Vec::new(),
        stop: StopReason::Rounds,
    };
    let chance = 1.0 - 1.0 / k as f64;
    for _ in 0..cfg.n_rounds {
        let c = best_stump(features, labels, &weights);
        trace.errors.push(c.error);
        if c.error >= chance {
            trace.stop = StopReason::NoBetterThanChance;
            if stumps.is_empty() {
                stumps.push(Stump {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: c.left,
                    right: c.right,
                    alpha: 0.0,
                });
            }
            break;
        }
        let alpha = samme_alpha(c.error.max(EPS_FLOOR), k, cfg.learning_rate);
        let stump = Stump {
            feature: c.feature,
            threshold: c.threshold,
            left: c.left,
            right: c.right,
            alpha,
        };
        stumps.push(stump);
        if c.error <= EPS_FLOOR {
            trace.weight_sums.push(weights.iter().sum());
            trace.stop = StopReason::Perfect;
            break;
        }
        let boost = alpha.exp();
        for ((w, x), &l) in weights.iter_mut().zip(features).zip(labels) {
            if stump.predict(x) != l {
                *w *= boost;
            }
        }
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        trace.weight_sums.push(weights.iter().sum());
    }
    Ok((Ensemble { stumps }, trace))
}

/// Weighted vote; ties go to the lowest class code.
pub fn adaboost_predict(ensemble: &Ensemble, x: &[f64]) -> Result<ClassLabel> {
    if ensemble.stumps.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut votes = [0.0; 3];
    for s in &ensemble.stumps {
        if s.feature >= x.len() {
            return Err(Error::ShapeMismatch(format!("stump reads feature {} of {}", s.feature, x.len())));
        }
        votes[s.predict(x).index()] += s.alpha;
    }
    Ok(ClassLabel::ALL[majority(&votes)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClassLabel::{Coco, Imagenet, Sun};

    fn stump(alpha: f64, side: ClassLabel) -> Stump {
        Stump {
            feature: 0,
            threshold: 0.0,
            left: side,
            right: side,
            alpha,
        }
    }

    #[test]
    fn separable_feature_stops_after_one_round() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<ClassLabel> = (0..10).map(|i| if i < 4 { Coco } else { Sun }).collect();
        let (ens, trace) = adaboost_train(&x, &y, &AdaBoostConfig::default()).unwrap();
        assert_eq!(ens.stumps.len(), 1);
        assert!(trace.errors[0] <= 1e-10);
        assert_eq!(trace.stop, StopReason::Perfect);
        assert_eq!(ens.stumps[0].threshold, 3.5);
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(adaboost_predict(&ens, xi).unwrap(), *yi);
        }
    }

    #[test]
    fn alpha_hand_values() {
        assert!((samme_alpha(0.3, 2, 1.0) - (7.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((samme_alpha(0.3, 2, 1.0) - 0.8473).abs() < 1e-4);
        assert!(samme_alpha(2.0 / 3.0, 3, 1.0).abs() < 1e-12);
    }

    #[test]
    fn chance_level_stump_halts() {
        // one constant feature, three balanced classes: best error is 2/3
        let x = vec![vec![1.0]; 6];
        let y = vec![Coco, Imagenet, Sun, Coco, Imagenet, Sun];
        let (ens, trace) = adaboost_train(&x, &y, &AdaBoostConfig::default()).unwrap();
        assert_eq!(trace.stop, StopReason::NoBetterThanChance);
        assert_eq!(ens.stumps.len(), 1);
    }

    #[test]
    fn weights_stay_normalized() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![((i * 37) % 11) as f64, ((i * 13) % 7) as f64]).collect();
        let y: Vec<ClassLabel> = (0..60).map(|i| ClassLabel::ALL[(i * 7 / 3) % 3]).collect();
        let (_, trace) = adaboost_train(&x, &y, &AdaBoostConfig::default()).unwrap();
        assert!(!trace.weight_sums.is_empty());
        assert!(trace.weight_sums.iter().all(|s| (s - 1.0).abs() < 1e-9));
    }

    #[test]
    fn chosen_stump_beats_every_candidate() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![((i * 17) % 10) as f64, (i % 4) as f64]).collect();
        let y: Vec<ClassLabel> = (0..30).map(|i| ClassLabel::ALL[(i * i) % 3]).collect();
        let w: Vec<f64> = (0..30).map(|i| 1.0 + (i % 5) as f64).collect();
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|v| v / total).collect();
        let best = best_stump(&x, &y, &w);
        for f in 0..2 {
            let mut values: Vec<f64> = x.iter().map(|r| r[f]).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for pair in values.windows(2) {
                let thr = (pair[0] + pair[1]) / 2.0;
                for l in ClassLabel::ALL {
                    for r in ClassLabel::ALL {
                        let s = Stump { feature: f, threshold: thr, left: l, right: r, alpha: 1.0 };
                        let err: f64 = (0..30).filter(|&i| s.predict(&x[i]) != y[i]).map(|i| w[i]).sum();
                        assert!(best.error <= err + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn prediction_votes_and_ties() {
        let single = Ensemble { stumps: vec![stump(0.7, Imagenet)] };
        assert_eq!(adaboost_predict(&single, &[0.0]).unwrap(), Imagenet);
        let weighted = Ensemble { stumps: vec![stump(1.0, Coco), stump(0.5, Sun)] };
        assert_eq!(adaboost_predict(&weighted, &[0.0]).unwrap(), Coco);
        let tied = Ensemble { stumps: vec![stump(0.5, Sun), stump(0.5, Imagenet)] };
        assert_eq!(adaboost_predict(&tied, &[0.0]).unwrap(), Imagenet);
        assert!(matches!(adaboost_predict(&Ensemble { stumps: vec![] }, &[0.0]), Err(Error::EmptyEnsemble)));
        assert!(matches!(adaboost_train(&[vec![1.0]], &[Sun], &AdaBoostConfig::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn ensemble_json_is_a_list() {
        let e = Ensemble { stumps: vec![stump(0.25, Sun)] };
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.starts_with('['));
        assert_eq!(serde_json::from_str::<Ensemble>(&json).unwrap(), e);
    }
}
