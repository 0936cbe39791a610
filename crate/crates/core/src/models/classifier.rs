use std::collections::BTreeSet;

use crate::autodiff::{batch_series, per_sample, Sequential};
use crate::domain::{ClassLabel, PadMode, SegmentSample};
use crate::error::{Error, Result};
use crate::preprocess::pad_to;
use crate::seed::rng_for;

use super::arch::ClassifierConfig;
use super::train::{fit, predict_all, Example, History, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub cfg: ClassifierConfig,
    pub pad_mode: PadMode,
    pub net: Sequential,
}

fn input(sample: &SegmentSample, cfg: &ClassifierConfig, mode: PadMode) -> Result<Vec<f64>> {
    pad_to(&sample.raw, cfg.input_len, mode)
}

fn examples(samples: &[SegmentSample], cfg: &ClassifierConfig, mode: PadMode) -> Result<Vec<Example>> {
    samples
        .iter()
        .map(|s| {
            Ok(Example {
                input: input(s, cfg, mode)?,
                target: cfg.target(s.label)?,
            })
        })
        .collect()
}

pub fn train_classifier(
    train: &[SegmentSample],
    val: &[SegmentSample],
    cfg: &ClassifierConfig,
    tcfg: &TrainConfig,
) -> Result<(TrainedClassifier, History)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    let present: BTreeSet<ClassLabel> = train.iter().map(|s| s.label).collect();
    if present.len() < 2 {
        return Err(Error::SingleClassTrain);
    }
    let train_ex = examples(train, cfg, tcfg.pad_mode)?;
    let val_ex = examples(val, cfg, tcfg.pad_mode)?;
    let mut net = Sequential::build(cfg.specs(), cfg.input_len, 1, &mut rng_for(tcfg.seed, "init", 0))?;
    let history = fit(&mut net, &train_ex, &val_ex, cfg.loss_kind(), tcfg)?;
    Ok((
        TrainedClassifier {
            cfg: cfg.clone(),
            pad_mode: tcfg.pad_mode,
            net,
        },
        history,
    ))
}

impl TrainedClassifier {
    fn inputs(&self, samples: &[SegmentSample]) -> Result<Vec<Vec<f64>>> {
        samples.iter().map(|s| input(s, &self.cfg, self.pad_mode)).collect()
    }

    pub fn predict_scores(&self, samples: &[SegmentSample]) -> Result<Vec<Vec<f64>>> {
        let inputs = self.inputs(samples)?;
        let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        predict_all(&self.net, &refs)
    }

    pub fn predict(&self, samples: &[SegmentSample]) -> Result<Vec<ClassLabel>> {
        Ok(self
            .predict_scores(samples)?
            .iter()
            .map(|row| self.cfg.decode(row))
            .collect())
    }

    /// Per-sample activations after every layer, keyed by layer name.
    pub fn activations(&self, samples: &[SegmentSample]) -> Result<Vec<(String, Vec<Vec<f64>>)>> {
        let inputs = self.inputs(samples)?;
        let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        let acts = self.net.activations(&batch_series(&refs)?)?;
        Ok(self
            .net
            .specs
            .iter()
            .zip(acts)
            .map(|(spec, a)| (spec.name.clone(), per_sample(&a)))
            .collect())
    }
}
