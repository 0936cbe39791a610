use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, batch_series, loss, loss_grad, AdamConfig, AdamState, LossKind, Mode, Sequential, Tensor};
use crate::domain::PadMode;
use crate::error::{Error, Result};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub pad_mode: PadMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            batch_size: 20,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            pad_mode: PadMode::Zero,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::BadConfig(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::BadConfig("batch_size and max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// One input series and its target row.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub initial_train_loss: f64,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Zero-based epoch whose weights were kept.
    pub best_epoch: usize,
}

fn batch(examples: &[&Example]) -> Result<(Tensor, Tensor)> {
    let inputs: Vec<&[f64]> = examples.iter().map(|e| e.input.as_slice()).collect();
    let width = examples[0].target.len();
    let mut target = Vec::with_capacity(examples.len() * width);
    for e in examples {
        if e.target.len() != width {
            return Err(Error::LengthMismatch {
                left: e.target.len(),
                right: width,
            });
        }
        target.extend_from_slice(&e.target);
    }
    Ok((batch_series(&inputs)?, Tensor::new(vec![examples.len(), width], target)?))
}

const EVAL_CHUNK: usize = 64;

/// Network outputs `[n, out]` for every input, evaluated in chunks.
pub fn predict_all(net: &Sequential, inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(EVAL_CHUNK) {
        let y = net.predict(&batch_series(chunk)?)?;
        let w = y.last_dim();
        rows.extend(y.data().chunks_exact(w).map(<[f64]>::to_vec));
    }
    Ok(rows)
}

/// Mean loss over a dataset in inference mode.
pub fn dataset_loss(net: &Sequential, examples: &[Example], kind: LossKind) -> Result<f64> {
    let mut total = 0.0;
    for chunk in examples.chunks(EVAL_CHUNK) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let (x, t) = batch(&refs)?;
        total += loss(&net.predict(&x)?, &t, kind)? * chunk.len() as f64;
    }
    Ok(total / examples.len() as f64)
}

/// Adam mini-batch training with a seeded epoch shuffle and early stopping
/// on validation loss. Leaves the best-validation weights in `net`.
pub fn fit(net: &mut Sequential, train: &[Example], val: &[Example], kind: LossKind, tcfg: &TrainConfig) -> Result<History> {
    tcfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    let adam = AdamConfig {
        lr: tcfg.lr,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(net.params());
    let mut shuffle_rng = rng_for(tcfg.seed, "shuffle", 0);
    let mut dropout_rng = rng_for(tcfg.seed, "dropout", 0);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut history = History {
        initial_train_loss: dataset_loss(net, train, kind)?,
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
    };
    let mut best: Option<(f64, Sequential)> = None;
    let mut stale = 0;
    for epoch in 0..tcfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut running = 0.0;
        for idx in order.chunks(tcfg.batch_size) {
            let refs: Vec<&Example> = idx.iter().map(|&i| &train[i]).collect();
            let (x, t) = batch(&refs)?;
            let (y, tape) = net.forward(&x, Mode::Train(&mut dropout_rng))?;
            running += loss(&y, &t, kind)? * idx.len() as f64;
            let grads = net.backward(tape, loss_grad(&y, &t, kind)?);
            adam_step(&mut net.params_mut(), &grads, &mut state, &adam)?;
        }
        let val_loss = dataset_loss(net, val, kind)?;
        history.train_loss.push(running / train.len() as f64);
        history.val_loss.push(val_loss);
        debug!("epoch {epoch}: train {:.5} val {val_loss:.5}", running / train.len() as f64);
        if !val_loss.is_finite() {
            return Err(Error::NonFinite("validation loss"));
        }
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, net.clone()));
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= tcfg.patience {
                break;
            }
        }
    }
    if let Some((_, weights)) = best {
        *net = weights;
    }
    Ok(history)
}
