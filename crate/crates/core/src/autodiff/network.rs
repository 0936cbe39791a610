//! Sequential layer stacks: construction from specs, forward passes that
//! record a tape of caches, and the reverse sweep over that tape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    dropout_with_mask, flatten_backward, flatten_forward, Activation, BiLstm, BiLstmCache, Dense, Lstm, LstmCache,
};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LayerKind {
    Dense,
    Lstm,
    Bilstm,
    Dropout,
    Flatten,
}

/// Declarative description of one layer. For `BILSTM`, `units` is the
/// concatenated output width, twice the per-direction size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub name: String,
    #[serde(default)]
    pub units: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub dropout_rate: f64,
    #[serde(default)]
    pub return_sequences: bool,
}

fn default_activation() -> Activation {
    Activation::None
}

impl LayerSpec {
    fn base(kind: LayerKind, name: &str) -> Self {
        Self {
            kind,
            name: name.to_string(),
            units: 0,
            activation: Activation::None,
            dropout_rate: 0.0,
            return_sequences: false,
        }
    }

    pub fn dense(name: &str, units: usize, activation: Activation) -> Self {
        Self {
            units,
            activation,
            ..Self::base(LayerKind::Dense, name)
        }
    }

    pub fn lstm(name: &str, units: usize, return_sequences: bool) -> Self {
        Self {
            units,
            activation: Activation::Tanh,
            return_sequences,
            ..Self::base(LayerKind::Lstm, name)
        }
    }

    pub fn bilstm(name: &str, width: usize, return_sequences: bool) -> Self {
        Self {
            units: width,
            activation: Activation::Tanh,
            return_sequences,
            ..Self::base(LayerKind::Bilstm, name)
        }
    }

    pub fn dropout(name: &str, rate: f64) -> Self {
        Self {
            dropout_rate: rate,
            ..Self::base(LayerKind::Dropout, name)
        }
    }

    pub fn flatten(name: &str) -> Self {
        Self::base(LayerKind::Flatten, name)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            LayerKind::Dense | LayerKind::Lstm if self.units == 0 => {
                Err(Error::ShapeMismatch(format!("layer {} needs units >= 1", self.name)))
            }
            LayerKind::Bilstm if self.units < 2 || !self.units.is_multiple_of(2) => Err(Error::ShapeMismatch(format!(
                "bidirectional layer {} needs an even width >= 2",
                self.name
            ))),
            LayerKind::Dropout if !(0.0..1.0).contains(&self.dropout_rate) => Err(Error::BadRate(self.dropout_rate)),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Lstm { cell: Lstm, return_sequences: bool },
    BiLstm { cell: BiLstm, return_sequences: bool },
    Dropout { rate: f64 },
    Flatten,
}

impl Layer {
    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Lstm { cell, .. } => vec![&cell.w, &cell.u, &cell.b],
            Layer::BiLstm { cell, .. } => vec![
                &cell.forward.w,
                &cell.forward.u,
                &cell.forward.b,
                &cell.backward.w,
                &cell.backward.u,
                &cell.backward.b,
            ],
            Layer::Dropout { .. } | Layer::Flatten => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Lstm { cell, .. } => vec![&mut cell.w, &mut cell.u, &mut cell.b],
            Layer::BiLstm { cell, .. } => vec![
                &mut cell.forward.w,
                &mut cell.forward.u,
                &mut cell.forward.b,
                &mut cell.backward.w,
                &mut cell.backward.u,
                &mut cell.backward.b,
            ],
            Layer::Dropout { .. } | Layer::Flatten => vec![],
        }
    }
}

/// Shape of an activation, excluding the batch axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureShape {
    Sequence { steps: usize, width: usize },
    Flat { width: usize },
}

impl FeatureShape {
    pub fn size(self) -> usize {
        match self {
            FeatureShape::Sequence { steps, width } => steps * width,
            FeatureShape::Flat { width } => width,
        }
    }
}

/// Forward-pass mode. Training mode draws dropout masks from the RNG.
pub enum Mode<'a, R: Rng> {
    Eval,
    Train(&'a mut R),
}

enum Cache {
    Dense { x: Tensor, y: Tensor },
    Lstm { x: Tensor, cache: LstmCache },
    BiLstm { x: Tensor, cache: BiLstmCache },
    Dropout { mask: Option<Vec<f64>> },
    Flatten { shape: Vec<usize> },
}

/// Caches recorded by a training forward pass, consumed by
/// [`Sequential::backward`].
pub struct Tape {
    caches: Vec<Cache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    pub specs: Vec<LayerSpec>,
    pub layers: Vec<Layer>,
    pub input: FeatureShape,
}

impl Sequential {
    /// Builds and initializes a stack for sequence inputs `[T, B, features]`.
    pub fn build<R: Rng>(specs: Vec<LayerSpec>, steps: usize, features: usize, rng: &mut R) -> Result<Self> {
        let input = FeatureShape::Sequence {
            steps,
            width: features,
        };
        let mut shape = input;
        let mut layers = Vec::with_capacity(specs.len());
        for spec in &specs {
            spec.validate()?;
            let (layer, next) = match (spec.kind, shape) {
                (LayerKind::Dense, FeatureShape::Sequence { steps, width }) => (
                    Layer::Dense(Dense::init(rng, width, spec.units, spec.activation)),
                    FeatureShape::Sequence {
                        steps,
                        width: spec.units,
                    },
                ),
                (LayerKind::Dense, FeatureShape::Flat { width }) => (
                    Layer::Dense(Dense::init(rng, width, spec.units, spec.activation)),
                    FeatureShape::Flat { width: spec.units },
                ),
                (LayerKind::Lstm, FeatureShape::Sequence { steps, width }) => (
                    Layer::Lstm {
                        cell: Lstm::init(rng, width, spec.units),
                        return_sequences: spec.return_sequences,
                    },
                    recurrent_output(steps, spec.units, spec.return_sequences),
                ),
                (LayerKind::Bilstm, FeatureShape::Sequence { steps, width }) => {
                    let half = spec.units / 2;
                    let fwd = Lstm::init(rng, width, half);
                    let bwd = Lstm::init(rng, width, half);
                    (
                        Layer::BiLstm {
                            cell: BiLstm::new(fwd, bwd)?,
                            return_sequences: spec.return_sequences,
                        },
                        recurrent_output(steps, spec.units, spec.return_sequences),
                    )
                }
                (LayerKind::Lstm | LayerKind::Bilstm, FeatureShape::Flat { .. }) => {
                    return Err(Error::ShapeMismatch(format!(
                        "recurrent layer {} needs a sequence input",
                        spec.name
                    )))
                }
                (LayerKind::Dropout, s) => (
                    Layer::Dropout {
                        rate: spec.dropout_rate,
                    },
                    s,
                ),
                (LayerKind::Flatten, s) => (Layer::Flatten, FeatureShape::Flat { width: s.size() }),
            };
            layers.push(layer);
            shape = next;
        }
        Ok(Self { specs, layers, input })
    }

    pub fn output_shape(&self) -> FeatureShape {
        let mut shape = self.input;
        for (spec, layer) in self.specs.iter().zip(&self.layers) {
            shape = match (layer, shape) {
                (Layer::Dense(d), FeatureShape::Sequence { steps, .. }) => FeatureShape::Sequence {
                    steps,
                    width: d.units(),
                },
                (Layer::Dense(d), FeatureShape::Flat { .. }) => FeatureShape::Flat { width: d.units() },
                (Layer::Lstm { .. } | Layer::BiLstm { .. }, FeatureShape::Sequence { steps, .. }) => {
                    recurrent_output(steps, spec.units, spec.return_sequences)
                }
                (Layer::Flatten, s) => FeatureShape::Flat { width: s.size() },
                (_, s) => s,
            };
        }
        shape
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params().iter().map(|t| Tensor::zeros(t.shape())).collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let ok = match self.input {
            FeatureShape::Sequence { steps, width } => {
                x.shape().len() == 3 && x.shape()[0] == steps && x.shape()[2] == width
            }
            FeatureShape::Flat { width } => x.shape().len() == 2 && x.shape()[1] == width,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "network expects {:?} per sample, got batch shape {:?}",
                self.input,
                x.shape()
            )))
        }
    }

    /// Inference forward pass.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_impl::<rand_chacha::ChaCha8Rng>(x, Mode::Eval, false)?.0)
    }

    /// Inference forward pass returning the output of every layer.
    pub fn activations(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        let mut outs: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = outs.last().unwrap_or(x);
            let (y, _) = forward_layer::<rand_chacha::ChaCha8Rng>(layer, input, &mut Mode::Eval, false)?;
            outs.push(y);
        }
        Ok(outs)
    }

    /// Forward pass that records the tape for a later backward sweep.
    pub fn forward<R: Rng>(&self, x: &Tensor, mode: Mode<'_, R>) -> Result<(Tensor, Tape)> {
        let (y, tape) = self.forward_impl(x, mode, true)?;
        Ok((y, tape.expect("tape requested")))
    }

    fn forward_impl<R: Rng>(&self, x: &Tensor, mut mode: Mode<'_, R>, record: bool) -> Result<(Tensor, Option<Tape>)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(if record { self.layers.len() } else { 0 });
        let mut current = x.clone();
        for layer in &self.layers {
            let (y, cache) = forward_layer(layer, &current, &mut mode, record)?;
            if let Some(c) = cache {
                caches.push(c);
            }
            current = y;
        }
        if !current.is_finite() {
            return Err(Error::NonFinite("network output"));
        }
        Ok((current, record.then_some(Tape { caches })))
    }

    /// Reverse sweep. Returns parameter gradients in [`Sequential::params`]
    /// order.
    pub fn backward(&self, tape: Tape, dy: Tensor) -> Vec<Tensor> {
        let mut grads = self.zero_grads();
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for layer in &self.layers {
            offsets.push(acc);
            acc += layer.params().len();
        }
        let mut grad = dy;
        for ((layer, cache), &offset) in self.layers.iter().zip(tape.caches).zip(&offsets).rev() {
            let n = layer.params().len();
            let slot = &mut grads[offset..offset + n];
            grad = match (layer, cache) {
                (Layer::Dense(d), Cache::Dense { x, y }) => d.backward(&x, &y, &grad, slot),
                (Layer::Lstm { cell, return_sequences }, Cache::Lstm { x, cache }) => {
                    let (steps, batch, h) = (x.shape()[0], x.shape()[1], cell.units());
                    let d_hidden = if *return_sequences {
                        grad.into_data()
                    } else {
                        let mut full = vec![0.0; steps * batch * h];
                        full[(steps - 1) * batch * h..].copy_from_slice(grad.data());
                        full
                    };
                    cell.backward(&x, &cache, &d_hidden, false, slot)
                }
                (Layer::BiLstm { cell, return_sequences }, Cache::BiLstm { x, cache }) => {
                    cell.backward(&x, &cache, &grad, *return_sequences, slot)
                }
                (Layer::Dropout { .. }, Cache::Dropout { mask }) => match mask {
                    Some(mask) => {
                        let shape = grad.shape().to_vec();
                        let data = grad.data().iter().zip(&mask).map(|(g, m)| g * m).collect();
                        Tensor::new(shape, data).expect("mask shape")
                    }
                    None => grad,
                },
                (Layer::Flatten, Cache::Flatten { shape }) => flatten_backward(&shape, &grad),
                _ => unreachable!("tape does not match layers"),
            };
        }
        grads
    }
}

fn recurrent_output(steps: usize, width: usize, seq: bool) -> FeatureShape {
    if seq {
        FeatureShape::Sequence { steps, width }
    } else {
        FeatureShape::Flat { width }
    }
}

fn forward_layer<R: Rng>(layer: &Layer, x: &Tensor, mode: &mut Mode<'_, R>, record: bool) -> Result<(Tensor, Option<Cache>)> {
    Ok(match layer {
        Layer::Dense(d) => {
            let y = d.forward(x)?;
            let cache = record.then(|| Cache::Dense {
                x: x.clone(),
                y: y.clone(),
            });
            (y, cache)
        }
        Layer::Lstm {
            cell,
            return_sequences,
        } => {
            let (hidden, cache) = cell.run(x, false)?;
            let (steps, batch, h) = (x.shape()[0], x.shape()[1], cell.units());
            let y = if *return_sequences {
                Tensor::new(vec![steps, batch, h], hidden)?
            } else {
                Tensor::new(vec![batch, h], hidden[(steps - 1) * batch * h..].to_vec())?
            };
            (y, record.then(|| Cache::Lstm { x: x.clone(), cache }))
        }
        Layer::BiLstm {
            cell,
            return_sequences,
        } => {
            let (y, cache) = cell.run(x, *return_sequences)?;
            (y, record.then(|| Cache::BiLstm { x: x.clone(), cache }))
        }
        Layer::Dropout { rate } => {
            let (y, mask) = match mode {
                Mode::Train(rng) => dropout_with_mask(x, *rate, true, *rng)?,
                Mode::Eval => (x.clone(), None),
            };
            (y, record.then_some(Cache::Dropout { mask }))
        }
        Layer::Flatten => (
            flatten_forward(x),
            record.then(|| Cache::Flatten {
                shape: x.shape().to_vec(),
            }),
        ),
    })
}

/// Packs equal-length series into a `[T, B, 1]` batch tensor.
pub fn batch_series(series: &[&[f64]]) -> Result<Tensor> {
    let batch = series.len();
    if batch == 0 {
        return Err(Error::Empty("batch"));
    }
    let steps = series[0].len();
    if let Some(bad) = series.iter().find(|s| s.len() != steps) {
        return Err(Error::LengthMismatch {
            left: bad.len(),
            right: steps,
        });
    }
    let mut data = vec![0.0; steps * batch];
    for (b, s) in series.iter().enumerate() {
        for (t, &v) in s.iter().enumerate() {
            data[t * batch + b] = v;
        }
    }
    Tensor::new(vec![steps, batch, 1], data)
}

/// Splits a layer output into one feature vector per sample.
pub fn per_sample(activation: &Tensor) -> Vec<Vec<f64>> {
    let flat = flatten_forward(activation);
    let width = flat.last_dim();
    flat.data().chunks_exact(width).map(<[f64]>::to_vec).collect()
}
