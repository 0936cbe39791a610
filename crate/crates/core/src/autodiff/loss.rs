use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Probabilities are clamped into `[EPS, 1 - EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LossKind {
    /// Binary cross-entropy averaged over every output element.
    Bce,
    /// Categorical cross-entropy averaged over samples; rows are classes.
    Cce,
}

fn check(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(())
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub fn loss(pred: &Tensor, target: &Tensor, kind: LossKind) -> Result<f64> {
    check(pred, target)?;
    let (p, t) = (pred.data(), target.data());
    Ok(match kind {
        LossKind::Bce => {
            let sum: f64 = p
                .iter()
                .zip(t)
                .map(|(&p, &t)| {
                    let p = clamp(p);
                    t * p.ln() + (1.0 - t) * (1.0 - p).ln()
                })
                .sum();
            -sum / p.len() as f64
        }
        LossKind::Cce => {
            let rows = pred.rows();
            let sum: f64 = p.iter().zip(t).map(|(&p, &t)| t * clamp(p).ln()).sum();
            -sum / rows as f64
        }
    })
}

/// `loss(a) - loss(b)` accumulated term by term, so entries that agree
/// cancel exactly instead of leaving rounding noise from two large sums.
pub fn loss_difference(a: &Tensor, b: &Tensor, target: &Tensor, kind: LossKind) -> Result<f64> {
    check(a, target)?;
    check(b, target)?;
    let log_ratio = |x: f64, y: f64| if x == y { 0.0 } else { ((x - y) / y).ln_1p() };
    let terms = a.data().iter().zip(b.data()).zip(target.data());
    Ok(match kind {
        LossKind::Bce => {
            let sum: f64 = terms
                .map(|((&pa, &pb), &t)| {
                    let (pa, pb) = (clamp(pa), clamp(pb));
                    t * log_ratio(pa, pb) + (1.0 - t) * log_ratio(1.0 - pa, 1.0 - pb)
                })
                .sum();
            -sum / a.len() as f64
        }
        LossKind::Cce => {
            let sum: f64 = terms.map(|((&pa, &pb), &t)| t * log_ratio(clamp(pa), clamp(pb))).sum();
            -sum / a.rows() as f64
        }
    })
}

/// Gradient of [`loss`] with respect to `pred`. Clamped entries get zero
/// gradient.
pub fn loss_grad(pred: &Tensor, target: &Tensor, kind: LossKind) -> Result<Tensor> {
    check(pred, target)?;
    let inside = |p: f64| (PROB_EPS..=1.0 - PROB_EPS).contains(&p);
    let data = match kind {
        LossKind::Bce => {
            let n = pred.len() as f64;
            pred.data()
                .iter()
                .zip(target.data())
                .map(|(&p, &t)| if inside(p) { (-t / p + (1.0 - t) / (1.0 - p)) / n } else { 0.0 })
                .collect()
        }
        LossKind::Cce => {
            let rows = pred.rows() as f64;
            pred.data()
                .iter()
                .zip(target.data())
                .map(|(&p, &t)| if inside(p) { -t / (p * rows) } else { 0.0 })
                .collect()
        }
    };
    Tensor::new(pred.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn perfect_predictions_have_tiny_loss() {
        let target = t(&[1, 4], &[0.0, 1.0, 1.0, 0.0]);
        assert!(loss(&target, &target, LossKind::Bce).unwrap() <= 1e-6);
        let onehot = t(&[2, 3], &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(loss(&onehot, &onehot, LossKind::Cce).unwrap() <= 1e-6);
    }

    #[test]
    fn hand_values() {
        let bce = loss(&t(&[1, 1], &[0.5]), &t(&[1, 1], &[1.0]), LossKind::Bce).unwrap();
        assert!((bce - std::f64::consts::LN_2).abs() < 1e-9);
        let third = 1.0 / 3.0;
        let cce = loss(&t(&[1, 3], &[third; 3]), &t(&[1, 3], &[0.0, 0.0, 1.0]), LossKind::Cce).unwrap();
        assert!((cce - 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn difference_matches_two_losses() {
        let target = t(&[2, 3], &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let a = t(&[2, 3], &[0.2, 0.5, 0.3, 0.6, 0.3, 0.1]);
        let b = t(&[2, 3], &[0.1, 0.7, 0.2, 0.6, 0.2, 0.2]);
        for kind in [LossKind::Bce, LossKind::Cce] {
            let direct = loss(&a, &target, kind).unwrap() - loss(&b, &target, kind).unwrap();
            assert!((loss_difference(&a, &b, &target, kind).unwrap() - direct).abs() < 1e-12);
        }
        assert_eq!(loss_difference(&a, &a, &target, LossKind::Bce).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let r = loss(&t(&[1, 2], &[0.5, 0.5]), &t(&[1, 3], &[0.0, 0.0, 1.0]), LossKind::Cce);
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }
}
