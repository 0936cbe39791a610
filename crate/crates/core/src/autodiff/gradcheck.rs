//! Central finite-difference verification of reverse-mode gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{loss_difference, loss_grad, LossKind};
use super::network::{Mode, Sequential};
use super::tensor::Tensor;
use crate::error::Result;

pub const DEFAULT_DELTA: f64 = 1e-5;

/// `|a - n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Checks `analytic` against central differences of `f` around `theta`.
/// Returns the maximum relative error.
pub fn grad_check_fn(mut f: impl FnMut(&[f64]) -> f64, theta: &[f64], analytic: &[f64], delta: f64) -> f64 {
    let mut probe = theta.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        probe[i] = theta[i] + delta;
        let up = f(&probe);
        probe[i] = theta[i] - delta;
        let down = f(&probe);
        probe[i] = theta[i];
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * delta)));
    }
    worst
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub delta: f64,
    /// When set, dropout runs in training mode with a mask stream re-seeded
    /// from this value for every evaluation, so the function stays fixed.
    pub dropout_seed: Option<u64>,
    /// Checks at most this many evenly spaced entries per parameter tensor.
    pub max_per_tensor: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            dropout_seed: None,
            max_per_tensor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// (parameter tensor, element) with the largest error.
    pub worst: (usize, usize),
    /// Analytic and numeric derivative at `worst`.
    pub worst_values: (f64, f64),
}

fn evaluate(net: &Sequential, input: &Tensor, opts: &GradCheckOptions) -> Result<Tensor> {
    match opts.dropout_seed {
        Some(seed) => Ok(net.forward(input, Mode::Train(&mut ChaCha8Rng::seed_from_u64(seed)))?.0),
        None => net.predict(input),
    }
}

fn probe_indices(len: usize, cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(k) if k < len && k >= 2 => (0..k).map(|i| i * (len - 1) / (k - 1)).collect(),
        Some(1) if len > 1 => vec![0],
        _ => (0..len).collect(),
    }
}

/// Compares backpropagated gradients of `loss(net(input), target)` with
/// central differences.
pub fn grad_check(
    net: &Sequential,
    input: &Tensor,
    target: &Tensor,
    kind: LossKind,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let (pred, tape) = match opts.dropout_seed {
        Some(seed) => net.forward(input, Mode::Train(&mut ChaCha8Rng::seed_from_u64(seed)))?,
        None => net.forward::<ChaCha8Rng>(input, Mode::Eval)?,
    };
    let analytic = net.backward(tape, loss_grad(&pred, target, kind)?);

    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
        worst: (0, 0),
        worst_values: (0.0, 0.0),
    };
    for (pi, grad) in analytic.iter().enumerate() {
        for ei in probe_indices(grad.len(), opts.max_per_tensor) {
            let original = probe.params()[pi].data()[ei];
            probe.params_mut()[pi].data_mut()[ei] = original + opts.delta;
            let up = evaluate(&probe, input, opts)?;
            probe.params_mut()[pi].data_mut()[ei] = original - opts.delta;
            let down = evaluate(&probe, input, opts)?;
            probe.params_mut()[pi].data_mut()[ei] = original;
            let numeric = loss_difference(&up, &down, target, kind)? / (2.0 * opts.delta);
            let err = relative_error(grad.data()[ei], numeric);
            report.max_abs_error = report.max_abs_error.max((grad.data()[ei] - numeric).abs());
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (pi, ei);
                report.worst_values = (grad.data()[ei], numeric);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
