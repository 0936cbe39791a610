//! Layer kernels with hand-derived backward passes.
//!
//! Sequences are time-major tensors `[T, B, D]`; flat activations are
//! `[B, D]`. Each layer's forward pass returns whatever its backward pass
//! needs, and backward accumulates into caller-owned gradient tensors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{add_column_sums, gemm};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Activation {
    None,
    Relu,
    Sigmoid,
    Softmax,
    Tanh,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    /// Applies the activation in place to rows of `width` values.
    pub fn apply(self, values: &mut [f64], width: usize) {
        match self {
            Activation::None => {}
            Activation::Relu => values.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => values.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Tanh => values.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Softmax => {
                for row in values.chunks_exact_mut(width) {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    row.iter_mut().for_each(|v| *v /= sum);
                }
            }
        }
    }

    /// Gradient with respect to the pre-activation, given the activation
    /// output `y` and upstream gradient `dy`.
    pub fn backward(self, y: &[f64], dy: &[f64], width: usize) -> Vec<f64> {
        match self {
            Activation::None => dy.to_vec(),
            Activation::Relu => y
                .iter()
                .zip(dy)
                .map(|(&y, &d)| if y > 0.0 { d } else { 0.0 })
                .collect(),
            Activation::Sigmoid => y.iter().zip(dy).map(|(&y, &d)| d * y * (1.0 - y)).collect(),
            Activation::Tanh => y.iter().zip(dy).map(|(&y, &d)| d * (1.0 - y * y)).collect(),
            Activation::Softmax => {
                let mut out = vec![0.0; y.len()];
                for ((o, y), d) in out
                    .chunks_exact_mut(width)
                    .zip(y.chunks_exact(width))
                    .zip(dy.chunks_exact(width))
                {
                    let dot: f64 = y.iter().zip(d).map(|(a, b)| a * b).sum();
                    for j in 0..width {
                        o[j] = y[j] * (d[j] - dot);
                    }
                }
                out
            }
        }
    }
}

/// Glorot-uniform initialization.
pub fn glorot<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    t.data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-limit..limit));
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[in, out]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[1]] {
            return Err(Error::ShapeMismatch(format!(
                "dense weight {:?} with bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn init<R: Rng>(rng: &mut R, d_in: usize, units: usize, activation: Activation) -> Self {
        Self {
            weight: glorot(rng, &[d_in, units], d_in, units),
            bias: Tensor::zeros(&[units]),
            activation,
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Applies `act(x W + b)` over the last axis of `x`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.last_dim() != self.d_in() {
            return Err(Error::ShapeMismatch(format!(
                "dense layer expects {} inputs, got shape {:?}",
                self.d_in(),
                x.shape()
            )));
        }
        let (rows, units) = (x.rows(), self.units());
        let mut out = Vec::with_capacity(rows * units);
        for _ in 0..rows {
            out.extend_from_slice(self.bias.data());
        }
        gemm(rows, self.d_in(), units, x.data(), false, self.weight.data(), false, 1.0, &mut out);
        self.activation.apply(&mut out, units);
        let mut shape = x.shape().to_vec();
        *shape.last_mut().expect("non-empty") = units;
        Tensor::new(shape, out)
    }

    /// Returns the input gradient; accumulates into `grads = [dW, db]`.
    pub fn backward(&self, x: &Tensor, y: &Tensor, dy: &Tensor, grads: &mut [Tensor]) -> Tensor {
        let (rows, units, d_in) = (x.rows(), self.units(), self.d_in());
        let dz = self.activation.backward(y.data(), dy.data(), units);
        let (gw, gb) = grads.split_at_mut(1);
        gemm(d_in, rows, units, x.data(), true, &dz, false, 1.0, gw[0].data_mut());
        add_column_sums(rows, units, &dz, gb[0].data_mut());
        let mut dx = vec![0.0; rows * d_in];
        gemm(rows, units, d_in, &dz, false, self.weight.data(), true, 0.0, &mut dx);
        Tensor::new(x.shape().to_vec(), dx).expect("input shape")
    }
}

/// Free-standing dense evaluation.
pub fn dense_forward(x: &Tensor, weight: &Tensor, bias: &Tensor, activation: Activation) -> Result<Tensor> {
    let layer = Dense::new(weight.clone(), bias.clone(), activation)?;
    let x = if x.shape().len() == 1 {
        x.clone().reshape(vec![1, x.len()])?
    } else {
        x.clone()
    };
    let y = layer.forward(&x)?;
    if y.shape()[0] == 1 && y.shape().len() == 2 {
        let n = y.len();
        return y.reshape(vec![n]);
    }
    Ok(y)
}

/// Single-direction LSTM. Gates are packed `[i, f, o, g]` along the last
/// axis of the weights, each block `units` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    /// `[d_in, 4 * units]`
    pub w: Tensor,
    /// `[units, 4 * units]`
    pub u: Tensor,
    /// `[4 * units]`
    pub b: Tensor,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
    hidden: Vec<f64>,
}

impl Lstm {
    pub fn new(w: Tensor, u: Tensor, b: Tensor) -> Result<Self> {
        let ok = w.shape().len() == 2
            && u.shape().len() == 2
            && u.shape()[1] == 4 * u.shape()[0]
            && w.shape()[1] == u.shape()[1]
            && b.shape() == [u.shape()[1]];
        if !ok {
            return Err(Error::ShapeMismatch(format!(
                "lstm weights {:?}, {:?}, {:?}",
                w.shape(),
                u.shape(),
                b.shape()
            )));
        }
        Ok(Self { w, u, b })
    }

    /// Glorot weights, zero biases except a forget-gate bias of one.
    pub fn init<R: Rng>(rng: &mut R, d_in: usize, units: usize) -> Self {
        let mut b = Tensor::zeros(&[4 * units]);
        b.data_mut()[units..2 * units].iter_mut().for_each(|v| *v = 1.0);
        Self {
            w: glorot(rng, &[d_in, 4 * units], d_in, 4 * units),
            u: glorot(rng, &[units, 4 * units], units, 4 * units),
            b,
        }
    }

    pub fn units(&self) -> usize {
        self.u.shape()[0]
    }

    pub fn d_in(&self) -> usize {
        self.w.shape()[0]
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        if x.shape().len() != 3 || x.shape()[2] != self.d_in() {
            return Err(Error::ShapeMismatch(format!(
                "lstm expects [T, B, {}], got {:?}",
                self.d_in(),
                x.shape()
            )));
        }
        Ok((x.shape()[0], x.shape()[1]))
    }

    /// Runs the recurrence from `h = c = 0`. With `reverse` the sequence is
    /// consumed from the last step to the first. Returns hidden states
    /// `[T, B, units]` indexed by input position.
    pub fn run(&self, x: &Tensor, reverse: bool) -> Result<(Vec<f64>, LstmCache)> {
        let (steps, batch) = self.check_input(x)?;
        let h = self.units();
        let g4 = 4 * h;
        let bh = batch * h;
        let rows = steps * batch;
        let mut gates = Vec::with_capacity(rows * g4);
        for _ in 0..rows {
            gates.extend_from_slice(self.b.data());
        }
        gemm(rows, self.d_in(), g4, x.data(), false, self.w.data(), false, 1.0, &mut gates);
        let mut cells = vec![0.0; rows * h];
        let mut tanh_cells = vec![0.0; rows * h];
        let mut hidden = vec![0.0; rows * h];
        let mut prev: Option<usize> = None;
        for step in 0..steps {
            let t = if reverse { steps - 1 - step } else { step };
            let gt = &mut gates[t * batch * g4..(t + 1) * batch * g4];
            if let Some(p) = prev {
                gemm(batch, h, g4, &hidden[p * bh..(p + 1) * bh], false, self.u.data(), false, 1.0, gt);
            }
            for bi in 0..batch {
                let g = &mut gt[bi * g4..(bi + 1) * g4];
                for j in 0..h {
                    let i_g = sigmoid(g[j]);
                    let f_g = sigmoid(g[h + j]);
                    let o_g = sigmoid(g[2 * h + j]);
                    let c_g = g[3 * h + j].tanh();
                    g[j] = i_g;
                    g[h + j] = f_g;
                    g[2 * h + j] = o_g;
                    g[3 * h + j] = c_g;
                    let c_prev = prev.map_or(0.0, |p| cells[p * bh + bi * h + j]);
                    let c = f_g * c_prev + i_g * c_g;
                    let k = t * bh + bi * h + j;
                    cells[k] = c;
                    tanh_cells[k] = c.tanh();
                    hidden[k] = o_g * tanh_cells[k];
                }
            }
            prev = Some(t);
        }
        let cache = LstmCache {
            gates,
            cells,
            tanh_cells,
            hidden: hidden.clone(),
        };
        Ok((hidden, cache))
    }

    /// Backpropagation through time. `d_hidden` is `[T, B, units]`;
    /// accumulates into `grads = [dW, dU, db]` and returns `dx`.
    pub fn backward(
        &self,
        x: &Tensor,
        cache: &LstmCache,
        d_hidden: &[f64],
        reverse: bool,
        grads: &mut [Tensor],
    ) -> Tensor {
        let (steps, batch) = (x.shape()[0], x.shape()[1]);
        let h = self.units();
        let g4 = 4 * h;
        let bh = batch * h;
        let mut dz = vec![0.0; steps * batch * g4];
        let mut dh_next = vec![0.0; bh];
        let mut dc_next = vec![0.0; bh];
        let (gw, rest) = grads.split_at_mut(1);
        let (gu, gb) = rest.split_at_mut(1);
        for step in (0..steps).rev() {
            let t = if reverse { steps - 1 - step } else { step };
            let prev = (step > 0).then(|| if reverse { t + 1 } else { t - 1 });
            let gt = &cache.gates[t * batch * g4..(t + 1) * batch * g4];
            let dzt = &mut dz[t * batch * g4..(t + 1) * batch * g4];
            for bi in 0..batch {
                let g = &gt[bi * g4..(bi + 1) * g4];
                let d = &mut dzt[bi * g4..(bi + 1) * g4];
                for j in 0..h {
                    let k = t * bh + bi * h + j;
                    let (i_g, f_g, o_g, c_g) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let tc = cache.tanh_cells[k];
                    let dh = d_hidden[k] + dh_next[bi * h + j];
                    let d_o = dh * tc;
                    let dc = dh * o_g * (1.0 - tc * tc) + dc_next[bi * h + j];
                    let c_prev = prev.map_or(0.0, |p| cache.cells[p * bh + bi * h + j]);
                    dc_next[bi * h + j] = dc * f_g;
                    d[j] = dc * c_g * i_g * (1.0 - i_g);
                    d[h + j] = dc * c_prev * f_g * (1.0 - f_g);
                    d[2 * h + j] = d_o * o_g * (1.0 - o_g);
                    d[3 * h + j] = dc * i_g * (1.0 - c_g * c_g);
                }
            }
            if let Some(p) = prev {
                let h_prev = &cache.hidden[p * bh..(p + 1) * bh];
                gemm(h, batch, g4, h_prev, true, dzt, false, 1.0, gu[0].data_mut());
                gemm(batch, g4, h, dzt, false, self.u.data(), true, 0.0, &mut dh_next);
            }
        }
        let rows = steps * batch;
        gemm(self.d_in(), rows, g4, x.data(), true, &dz, false, 1.0, gw[0].data_mut());
        add_column_sums(rows, g4, &dz, gb[0].data_mut());
        let mut dx = vec![0.0; rows * self.d_in()];
        gemm(rows, g4, self.d_in(), &dz, false, self.w.data(), true, 0.0, &mut dx);
        Tensor::new(x.shape().to_vec(), dx).expect("input shape")
    }
}

/// Index of the step an LSTM state is read from when only the final state
/// is returned.
fn last_step(steps: usize, reverse: bool) -> usize {
    if reverse {
        0
    } else {
        steps - 1
    }
}

/// Collects `[T, B, H]` states into the layer output.
fn collect_output(hidden: &[f64], steps: usize, batch: usize, h: usize, seq: bool, reverse: bool) -> Tensor {
    if seq {
        Tensor::new(vec![steps, batch, h], hidden.to_vec()).expect("state shape")
    } else {
        let t = last_step(steps, reverse);
        Tensor::new(vec![batch, h], hidden[t * batch * h..(t + 1) * batch * h].to_vec()).expect("state shape")
    }
}

fn expand_output_grad(dy: &[f64], steps: usize, batch: usize, h: usize, seq: bool, reverse: bool) -> Vec<f64> {
    if seq {
        dy.to_vec()
    } else {
        let mut full = vec![0.0; steps * batch * h];
        let t = last_step(steps, reverse);
        full[t * batch * h..(t + 1) * batch * h].copy_from_slice(dy);
        full
    }
}

pub fn lstm_forward(x: &Tensor, params: &Lstm, return_sequences: bool) -> Result<Tensor> {
    let (hidden, _) = params.run(x, false)?;
    Ok(collect_output(&hidden, x.shape()[0], x.shape()[1], params.units(), return_sequences, false))
}

/// Both directions concatenated on the feature axis: `[fwd | bwd]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

fn concat_halves(a: &[f64], b: &[f64], rows: usize, h: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * rows * h);
    for r in 0..rows {
        out.extend_from_slice(&a[r * h..(r + 1) * h]);
        out.extend_from_slice(&b[r * h..(r + 1) * h]);
    }
    out
}

fn split_halves(x: &[f64], rows: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::with_capacity(rows * h);
    let mut b = Vec::with_capacity(rows * h);
    for row in x.chunks_exact(2 * h).take(rows) {
        a.extend_from_slice(&row[..h]);
        b.extend_from_slice(&row[h..]);
    }
    (a, b)
}

pub struct BiLstmCache {
    fwd: LstmCache,
    bwd: LstmCache,
}

impl BiLstm {
    pub fn new(forward: Lstm, backward: Lstm) -> Result<Self> {
        if forward.w.shape() != backward.w.shape() || forward.u.shape() != backward.u.shape() {
            return Err(Error::ShapeMismatch("bidirectional halves differ in shape".into()));
        }
        Ok(Self { forward, backward })
    }

    pub fn units(&self) -> usize {
        self.forward.units()
    }

    pub fn run(&self, x: &Tensor, return_sequences: bool) -> Result<(Tensor, BiLstmCache)> {
        let (hf, fwd) = self.forward.run(x, false)?;
        let (hb, bwd) = self.backward.run(x, true)?;
        let (steps, batch, h) = (x.shape()[0], x.shape()[1], self.units());
        let out = if return_sequences {
            Tensor::new(vec![steps, batch, 2 * h], concat_halves(&hf, &hb, steps * batch, h))?
        } else {
            let lf = &hf[(steps - 1) * batch * h..steps * batch * h];
            let lb = &hb[..batch * h];
            Tensor::new(vec![batch, 2 * h], concat_halves(lf, lb, batch, h))?
        };
        Ok((out, BiLstmCache { fwd, bwd }))
    }

    pub fn backward(
        &self,
        x: &Tensor,
        cache: &BiLstmCache,
        dy: &Tensor,
        return_sequences: bool,
        grads: &mut [Tensor],
    ) -> Tensor {
        let (steps, batch, h) = (x.shape()[0], x.shape()[1], self.units());
        let rows = if return_sequences { steps * batch } else { batch };
        let (df, db) = split_halves(dy.data(), rows, h);
        let df = expand_output_grad(&df, steps, batch, h, return_sequences, false);
        let db = expand_output_grad(&db, steps, batch, h, return_sequences, true);
        let (gf, gb) = grads.split_at_mut(3);
        let mut dx = self.forward.backward(x, &cache.fwd, &df, false, gf);
        let dxb = self.backward.backward(x, &cache.bwd, &db, true, gb);
        dx.data_mut().iter_mut().zip(dxb.data()).for_each(|(a, b)| *a += b);
        dx
    }
}

pub fn bilstm_forward(x: &Tensor, params: &BiLstm, return_sequences: bool) -> Result<Tensor> {
    Ok(params.run(x, return_sequences)?.0)
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` during
/// training; inference is the identity.
pub fn dropout<R: Rng>(x: &Tensor, rate: f64, training: bool, rng: &mut R) -> Result<Tensor> {
    Ok(dropout_with_mask(x, rate, training, rng)?.0)
}

pub(crate) fn dropout_with_mask<R: Rng>(
    x: &Tensor,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::BadRate(rate));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((Tensor::new(x.shape().to_vec(), data)?, Some(mask)))
}

/// `[T, B, D]` to `[B, T * D]`, sample-major.
pub fn flatten_forward(x: &Tensor) -> Tensor {
    if x.shape().len() == 2 {
        return x.clone();
    }
    let (steps, batch, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = vec![0.0; x.len()];
    for t in 0..steps {
        for b in 0..batch {
            let src = &x.data()[(t * batch + b) * d..(t * batch + b + 1) * d];
            out[b * steps * d + t * d..b * steps * d + (t + 1) * d].copy_from_slice(src);
        }
    }
    Tensor::new(vec![batch, steps * d], out).expect("flatten shape")
}

pub fn flatten_backward(input_shape: &[usize], dy: &Tensor) -> Tensor {
    if input_shape.len() == 2 {
        return dy.clone();
    }
    let (steps, batch, d) = (input_shape[0], input_shape[1], input_shape[2]);
    let mut out = vec![0.0; dy.len()];
    for t in 0..steps {
        for b in 0..batch {
            out[(t * batch + b) * d..(t * batch + b + 1) * d]
                .copy_from_slice(&dy.data()[b * steps * d + t * d..b * steps * d + (t + 1) * d]);
        }
    }
    Tensor::new(input_shape.to_vec(), out).expect("flatten shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant_lstm(d: usize, h: usize, weight: f64, bias: f64) -> Lstm {
        let mut w = Tensor::zeros(&[d, 4 * h]);
        w.fill(weight);
        let mut u = Tensor::zeros(&[h, 4 * h]);
        u.fill(weight);
        let mut b = Tensor::zeros(&[4 * h]);
        b.fill(bias);
        Lstm::new(w, u, b).unwrap()
    }

    fn random_lstm(seed: u64, d: usize, h: usize) -> Lstm {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut l = Lstm::init(&mut rng, d, h);
        l.b.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
        l
    }

    #[test]
    fn dense_examples() {
        let zero = Tensor::zeros(&[2, 3]);
        let out = dense_forward(&Tensor::from_vec(vec![1.0, -2.0]), &zero, &Tensor::zeros(&[3]), Activation::Relu).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 0.0]);

        let mut soft = vec![0.0; 3];
        Activation::Softmax.apply(&mut soft, 3);
        assert!(soft.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));

        let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::from_vec(vec![0.5, -0.5]);
        let out = dense_forward(&Tensor::from_vec(vec![1.0, 2.0]), &eye, &b, Activation::None).unwrap();
        assert_eq!(out.data(), &[1.5, 1.5]);

        let bad = dense_forward(&Tensor::from_vec(vec![1.0, 2.0, 3.0]), &eye, &b, Activation::None);
        assert!(matches!(bad, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn zero_lstm_stays_zero() {
        let lstm = constant_lstm(2, 3, 0.0, 0.0);
        let x = Tensor::new(vec![4, 2, 2], (0..16).map(|i| i as f64).collect()).unwrap();
        let out = lstm_forward(&x, &lstm, true).unwrap();
        assert_eq!(out.shape(), &[4, 2, 3]);
        assert!(out.data().iter().all(|&v| v == 0.0));
        let bi = BiLstm::new(lstm.clone(), lstm).unwrap();
        let out = bilstm_forward(&x, &bi, true).unwrap();
        assert_eq!(out.shape(), &[4, 2, 6]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_single_step_hand_value() {
        let lstm = constant_lstm(1, 1, 1.0, 0.0);
        let x = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let h = lstm_forward(&x, &lstm, false).unwrap();
        // i = f = o = sigmoid(1) = 0.73106, g = tanh(1) = 0.76159,
        // c = i * g = 0.55677, h = o * tanh(c) = 0.36961
        let s = 1.0 / (1.0 + (-1.0f64).exp());
        let expected = s * (s * 1.0f64.tanh()).tanh();
        assert!((h.data()[0] - expected).abs() < 1e-12, "{}", h.data()[0]);
        assert!((h.data()[0] - 0.36961).abs() < 1e-4);
    }

    #[test]
    fn bilstm_width_is_twice_the_direction_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bi = BiLstm::new(Lstm::init(&mut rng, 32, 64), Lstm::init(&mut rng, 32, 64)).unwrap();
        let x = Tensor::zeros(&[37, 2, 32]);
        assert_eq!(bilstm_forward(&x, &bi, true).unwrap().shape(), &[37, 2, 128]);
        assert_eq!(bilstm_forward(&x, &bi, false).unwrap().shape(), &[2, 128]);
    }

    #[test]
    fn palindromic_input_mirrors_the_halves() {
        let lstm = random_lstm(3, 2, 4);
        let bi = BiLstm::new(lstm.clone(), lstm).unwrap();
        let x = Tensor::new(vec![3, 1, 2], vec![0.3, -1.0, 0.8, 0.2, 0.3, -1.0]).unwrap();
        let out = bilstm_forward(&x, &bi, true).unwrap();
        let h = 4;
        for t in 0..3 {
            let fwd = &out.data()[t * 2 * h..t * 2 * h + h];
            let bwd = &out.data()[(2 - t) * 2 * h + h..(2 - t) * 2 * h + 2 * h];
            for (a, b) in fwd.iter().zip(bwd) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn reversing_time_swaps_the_halves() {
        let lstm = random_lstm(9, 3, 2);
        let bi = BiLstm::new(lstm.clone(), lstm).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vals: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Tensor::new(vec![3, 1, 3], vals.clone()).unwrap();
        let rev: Vec<f64> = (0..3).rev().flat_map(|t| vals[t * 3..t * 3 + 3].to_vec()).collect();
        let xr = Tensor::new(vec![3, 1, 3], rev).unwrap();
        let a = bilstm_forward(&x, &bi, true).unwrap();
        let b = bilstm_forward(&xr, &bi, true).unwrap();
        let h = 2;
        for t in 0..3 {
            let a_f = &a.data()[t * 4..t * 4 + h];
            let a_b = &a.data()[t * 4 + h..t * 4 + 2 * h];
            let b_f = &b.data()[(2 - t) * 4..(2 - t) * 4 + h];
            let b_b = &b.data()[(2 - t) * 4 + h..(2 - t) * 4 + 2 * h];
            for (p, q) in a_f.iter().zip(b_b).chain(a_b.iter().zip(b_f)) {
                assert!((p - q).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dropout_behaviour() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = Tensor::from_vec(vec![1.0; 100_000]);
        assert_eq!(dropout(&x, 0.5, false, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.0, true, &mut rng).unwrap(), x);
        let y = dropout(&x, 0.5, true, &mut rng).unwrap();
        let mean = y.data().iter().sum::<f64>() / y.len() as f64;
        assert!((0.98..=1.02).contains(&mean), "{mean}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(matches!(dropout(&x, 1.0, true, &mut rng), Err(Error::BadRate(_))));
        assert!(matches!(dropout(&x, -0.1, true, &mut rng), Err(Error::BadRate(_))));
    }

    #[test]
    fn flatten_round_trip() {
        let x = Tensor::new(vec![3, 2, 2], (0..12).map(f64::from).collect()).unwrap();
        let f = flatten_forward(&x);
        assert_eq!(f.shape(), &[2, 6]);
        // sample 0 is rows (t=0,b=0), (t=1,b=0), (t=2,b=0)
        assert_eq!(&f.data()[..6], &[0.0, 1.0, 4.0, 5.0, 8.0, 9.0]);
        assert_eq!(flatten_backward(x.shape(), &f), x);
    }

    #[test]
    fn sigmoid_and_softmax_ranges() {
        for z in [-800.0, -5.0, 0.0, 3.0, 800.0] {
            let s = sigmoid(z);
            assert!((0.0..=1.0).contains(&s) && s.is_finite());
        }
        let mut v = vec![1000.0, -3.0, 2.0, 0.1, 0.2, 0.3];
        Activation::Softmax.apply(&mut v, 3);
        for row in v.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
