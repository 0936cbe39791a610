use std::collections::BTreeMap;

use crate::domain::ClassLabel;
use crate::error::{Error, Result};

fn same_len<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Dice overlap of the positions labelled `class`. Two empty masks agree
/// perfectly and score 1.
pub fn dice(pred: &[ClassLabel], truth: &[ClassLabel], class: ClassLabel) -> Result<f64> {
    same_len(pred, truth)?;
    let (mut both, mut p, mut t) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.iter().zip(truth) {
        p += usize::from(a == class);
        t += usize::from(b == class);
        both += usize::from(a == class && b == class);
    }
    if p + t == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (p + t) as f64)
}

pub fn dice_per_class(pred: &[ClassLabel], truth: &[ClassLabel]) -> Result<BTreeMap<ClassLabel, f64>> {
    ClassLabel::ALL.iter().map(|&c| Ok((c, dice(pred, truth, c)?))).collect()
}

/// `matrix[t][p]` counts over the classes in `classes` (row/column order),
/// plus the fraction on the diagonal.
pub fn confusion_and_accuracy(
    preds: &[ClassLabel],
    truths: &[ClassLabel],
    classes: &[ClassLabel],
) -> Result<(Vec<Vec<usize>>, f64)> {
    same_len(preds, truths)?;
    if preds.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let pos = |c: ClassLabel| classes.iter().position(|&k| k == c).ok_or(Error::UnknownClass(c.code()));
    let mut matrix = vec![vec![0usize; classes.len()]; classes.len()];
    for (&p, &t) in preds.iter().zip(truths) {
        matrix[pos(t)?][pos(p)?] += 1;
    }
    let trace: usize = (0..classes.len()).map(|i| matrix[i][i]).sum();
    Ok((matrix, trace as f64 / preds.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClassLabel::{Coco, Imagenet, Sun};

    #[test]
    fn dice_hand_count() {
        let d = dice(&[Coco, Coco, Imagenet], &[Coco, Imagenet, Imagenet], Coco).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dice_edge_cases() {
        let a = [Coco, Sun, Sun];
        assert_eq!(dice(&a, &a, Sun).unwrap(), 1.0);
        assert_eq!(dice(&[Coco, Coco], &[Sun, Sun], Coco).unwrap(), 0.0);
        assert_eq!(dice(&a, &a, Imagenet).unwrap(), 1.0);
        assert!(matches!(dice(&a, &a[..2], Coco), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn dice_is_symmetric() {
        let a = [Coco, Sun, Imagenet, Sun, Coco];
        let b = [Sun, Sun, Imagenet, Coco, Coco];
        for c in ClassLabel::ALL {
            assert_eq!(dice(&a, &b, c).unwrap(), dice(&b, &a, c).unwrap());
        }
    }

    #[test]
    fn confusion_counts() {
        let (m, acc) = confusion_and_accuracy(&[Coco, Imagenet, Sun], &[Coco, Coco, Coco], &ClassLabel::ALL).unwrap();
        assert!((acc - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(m[0], vec![1, 1, 1]);
        let truth = [Coco, Sun, Sun, Imagenet];
        let (m, acc) = confusion_and_accuracy(&truth, &truth, &ClassLabel::ALL).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(m, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
        assert!(matches!(confusion_and_accuracy(&[], &[], &ClassLabel::ALL), Err(Error::Empty(_))));
    }
}
