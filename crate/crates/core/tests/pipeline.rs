mod common;

use std::collections::{BTreeSet, HashMap};

use bold_ts::ingest::{extract_trial, ExtractConfig, NormalizeScope};
use bold_ts::synth::{generate, make_schedules, SynthConfig};
use bold_ts::PadMode;
use common::dataset;

#[test]
fn detection_recovers_the_active_voxels_in_every_trial() {
    let cfg = SynthConfig::default();
    let data = dataset(&cfg);
    let truth: BTreeSet<_> = data.truth.active.iter().copied().collect();
    for trial in 0..cfg.n_trials as u64 {
        let found: BTreeSet<_> = data.series.iter().filter(|s| s.trial_id == trial).map(|s| s.coord).collect();
        assert_eq!(found, truth, "trial {trial}");
    }
}

#[test]
fn labels_follow_the_schedule() {
    let cfg = SynthConfig {
        n_trials: 3,
        ..SynthConfig::default()
    };
    let schedules = make_schedules(&cfg);
    let out = generate(&cfg, &schedules).unwrap();
    for (vol, schedule) in out.volumes.iter().zip(&schedules) {
        for series in extract_trial(vol, schedule, &HashMap::new(), &ExtractConfig::default()).unwrap() {
            assert_eq!(series.labels, schedule.labels());
            assert_eq!(series.values.len(), 37);
        }
    }
}

#[test]
fn segments_partition_each_series() {
    let data = dataset(&SynthConfig {
        n_trials: 4,
        ..SynthConfig::default()
    });
    for series in &data.series {
        let segments = series.segments(NormalizeScope::WholeSeries, PadMode::Zero).unwrap();
        assert_eq!(segments.len(), 3);
        assert_eq!(segments.iter().map(|s| s.raw.len()).sum::<usize>(), 37);
        for seg in &segments {
            let expected: Vec<f64> = series
                .values
                .iter()
                .zip(&series.labels)
                .filter(|(_, &l)| l == seg.label)
                .map(|(&v, _)| v)
                .collect();
            assert_eq!(seg.raw, expected);
            assert_eq!(seg.padded.len(), 37);
            assert!(seg.padded[seg.raw.len()..].iter().all(|&v| v == 0.0));
        }
    }
    let (samples, groups) = data.segments(PadMode::Repeat);
    assert_eq!(samples.len(), 3 * data.series.len());
    assert_eq!(groups.len(), samples.len());
    for s in &samples {
        assert!(s.padded.iter().enumerate().all(|(i, &v)| v == s.raw[i % s.raw.len()]));
    }
}

#[test]
fn noiseless_trials_give_unit_normalized_series() {
    let cfg = SynthConfig {
        n_trials: 2,
        noise_sigma: 0.0,
        drift_slope: 0.0,
        ..SynthConfig::default()
    };
    let data = dataset(&cfg);
    assert_eq!(data.series.len(), 2 * data.truth.active.len());
    for s in &data.series {
        let n = s.values.len() as f64;
        let mean = s.values.iter().sum::<f64>() / n;
        let var = s.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-9);
    }
    // every active voxel sees the same schedule, so a trial's series agree
    for trial in 0..2 {
        let rows: Vec<_> = data.series.iter().filter(|s| s.trial_id == trial).collect();
        for r in &rows[1..] {
            let gap = r.values.iter().zip(&rows[0].values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(gap < 1e-5, "{gap}");
        }
    }
}

#[test]
fn segment_scope_normalizes_each_part() {
    let data = dataset(&SynthConfig {
        n_trials: 2,
        ..SynthConfig::default()
    });
    for seg in data.series[0].segments(NormalizeScope::Segment, PadMode::Zero).unwrap() {
        let n = seg.raw.len() as f64;
        let mean = seg.raw.iter().sum::<f64>() / n;
        assert!(mean.abs() < 1e-9);
    }
}
