//! Detrending, z-scoring and fixed-length padding of series.
//!
//! The pipeline order is detrend, then z-score, then pad, so the padding
//! never takes part in the normalization statistics.

use crate::domain::PadMode;
use crate::error::{Error, Result};

/// Minimum population standard deviation accepted by [`zscore`].
pub const MIN_STD: f64 = 1e-12;

/// Removes the least-squares line fitted over index positions `0..n`.
pub fn detrend_linear(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::TooShort { need: 2, got: n });
    }
    let nf = n as f64;
    let t_mean = (nf - 1.0) / 2.0;
    let x_mean = x.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let dt = i as f64 - t_mean;
        sxy += dt * (v - x_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    Ok(x
        .iter()
        .enumerate()
        .map(|(i, &v)| v - x_mean - slope * (i as f64 - t_mean))
        .collect())
}

/// Standardizes to zero mean and unit population standard deviation.
pub fn zscore(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Empty("series"));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd >= MIN_STD) {
        return Err(Error::DegenerateSeries(sd));
    }
    Ok(x.iter().map(|v| (v - mean) / sd).collect())
}

/// Detrend followed by z-score.
pub fn normalize(x: &[f64]) -> Result<Vec<f64>> {
    zscore(&detrend_linear(x)?)
}

/// Extends `x` to `target` samples, either with trailing zeros or by tiling
/// the series cyclically.
pub fn pad_to(x: &[f64], target: usize, mode: PadMode) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Empty("series to pad"));
    }
    if x.len() > target {
        return Err(Error::TooLong {
            len: x.len(),
            target,
        });
    }
    Ok(match mode {
        PadMode::Zero => {
            let mut out = x.to_vec();
            out.resize(target, 0.0);
            out
        }
        PadMode::Repeat => (0..target).map(|i| x[i % x.len()]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn detrend_examples() {
        assert!(close(&detrend_linear(&[1.0, 2.0, 3.0, 4.0]).unwrap(), &[0.0; 4], 1e-12));
        assert!(close(&detrend_linear(&[5.0; 4]).unwrap(), &[0.0; 4], 1e-12));
        // slope 0.8, intercept 1.3
        let out = detrend_linear(&[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!(close(&out, &[-0.3, 0.9, -0.9, 0.3], 1e-9), "{out:?}");
        assert!(matches!(detrend_linear(&[1.0]), Err(Error::TooShort { .. })));
    }

    #[test]
    fn zscore_examples() {
        assert!(close(&zscore(&[2.0, 4.0]).unwrap(), &[-1.0, 1.0], 1e-12));
        assert!(matches!(zscore(&[0.0, 0.0, 0.0]), Err(Error::DegenerateSeries(_))));
        let r = 1.5f64.sqrt();
        assert!(close(&zscore(&[1.0, 2.0, 3.0]).unwrap(), &[-r, 0.0, r], 1e-12));
    }

    #[test]
    fn pad_examples() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(pad_to(&x, 7, PadMode::Repeat).unwrap(), vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0]);
        assert_eq!(pad_to(&x, 7, PadMode::Zero).unwrap(), vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0]);
        let full: Vec<f64> = (0..37).map(f64::from).collect();
        assert_eq!(pad_to(&full, 37, PadMode::Zero).unwrap(), full);
        assert_eq!(pad_to(&full, 37, PadMode::Repeat).unwrap(), full);
        assert!(matches!(pad_to(&[0.0; 38], 37, PadMode::Zero), Err(Error::TooLong { .. })));
        assert!(matches!(pad_to(&[], 37, PadMode::Zero), Err(Error::Empty(_))));
    }

    fn series() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 3..40)
    }

    proptest! {
        #[test]
        fn detrend_is_idempotent(x in series()) {
            let once = detrend_linear(&x).unwrap();
            let twice = detrend_linear(&once).unwrap();
            prop_assert!(close(&once, &twice, 1e-9));
        }

        #[test]
        fn detrend_output_is_orthogonal_to_index(x in series()) {
            let out = detrend_linear(&x).unwrap();
            let mean = out.iter().sum::<f64>() / out.len() as f64;
            let cov: f64 = out.iter().enumerate().map(|(i, v)| i as f64 * v).sum();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!(cov.abs() < 1e-7);
        }

        #[test]
        fn zscore_is_affine_invariant_up_to_sign(
            x in series(),
            a in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
            b in -50.0f64..50.0,
        ) {
            prop_assume!(zscore(&x).is_ok());
            let base = zscore(&x).unwrap();
            let moved: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let z = zscore(&moved).unwrap();
            let expected: Vec<f64> = base.iter().map(|v| a.signum() * v).collect();
            prop_assert!(close(&z, &expected, 1e-9));
            let mean = z.iter().sum::<f64>() / z.len() as f64;
            let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64).sqrt();
            prop_assert!(mean.abs() <= 1e-9 && (sd - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn padding_preserves_prefix(x in prop::collection::vec(-5.0f64..5.0, 1..=37)) {
            for mode in [PadMode::Zero, PadMode::Repeat] {
                let p = pad_to(&x, 37, mode).unwrap();
                prop_assert_eq!(p.len(), 37);
                prop_assert_eq!(&p[..x.len()], &x[..]);
                for (i, v) in p.iter().enumerate() {
                    match mode {
                        PadMode::Zero if i >= x.len() => prop_assert_eq!(*v, 0.0),
                        PadMode::Repeat => prop_assert_eq!(*v, x[i % x.len()]),
                        _ => {}
                    }
                }
            }
        }
    }
}
