#![allow(dead_code)]

use std::collections::HashMap;

use bold_ts::autodiff::{batch_series, grad_check, GradCheckOptions, GradCheckReport, LayerSpec, LossKind, Sequential, Tensor};
use bold_ts::ingest::{extract_trial, segment_dataset, ExtractConfig, NormalizeScope, TrialSeries};
use bold_ts::synth::{generate, make_schedules, GroundTruth, SynthConfig};
use bold_ts::{PadMode, SegmentSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Dataset {
    pub series: Vec<TrialSeries>,
    pub truth: GroundTruth,
}

impl Dataset {
    pub fn segments(&self, mode: PadMode) -> (Vec<SegmentSample>, Vec<u64>) {
        segment_dataset(&self.series, NormalizeScope::WholeSeries, mode).unwrap()
    }
}

pub fn dataset(cfg: &SynthConfig) -> Dataset {
    let schedules = make_schedules(cfg);
    let out = generate(cfg, &schedules).unwrap();
    let mut series = Vec::new();
    for (vol, schedule) in out.volumes.iter().zip(&schedules) {
        series.extend(extract_trial(vol, schedule, &HashMap::new(), &ExtractConfig::default()).unwrap());
    }
    Dataset { series, truth: out.truth }
}

pub fn random_inputs(batch: usize, steps: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..steps).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect();
    let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
    batch_series(&refs).unwrap()
}

/// Binary targets for BCE, a cycling one-hot for CCE.
pub fn targets(shape: &[usize], kind: LossKind, seed: u64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    let width = shape[1];
    match kind {
        LossKind::Bce => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            t.data_mut().iter_mut().for_each(|v| *v = f64::from(rng.random_bool(0.5)));
        }
        LossKind::Cce => {
            for b in 0..shape[0] {
                t.data_mut()[b * width + b % width] = 1.0;
            }
        }
    }
    t
}

pub fn check_stack(
    specs: Vec<LayerSpec>,
    steps: usize,
    batch: usize,
    kind: LossKind,
    opts: GradCheckOptions,
) -> GradCheckReport {
    let net = Sequential::build(specs, steps, 1, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
    let x = random_inputs(batch, steps, 5);
    let y = net.predict(&x).unwrap();
    let target = targets(y.shape(), kind, 8);
    grad_check(&net, &x, &target, kind, &opts).unwrap()
}
