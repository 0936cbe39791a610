//! Synthetic 4-D BOLD volumes with class-dependent stimulus responses.
//!
//! Each schedule timestamp marks the sample at which that stimulus' response
//! peaks: a stimulus stamped at index `k` has its onset [`HRF_PEAK_SECONDS`]
//! before `k * TR`. Responses of consecutive stimuli superpose linearly.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::domain::{validate_schedule, BoldVolume4D, ClassLabel, Coord, StimulusSchedule, STIMULI_PER_TRIAL};
use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Latency of the canonical response maximum, used to place stimulus onsets.
pub const HRF_PEAK_SECONDS: f64 = 5.0;
/// Seconds of recording kept after the last stimulus peak.
pub const TAIL_SECONDS: f64 = 20.0;
/// Size of the stimulus id pool that trials draw from.
pub const STIMULUS_POOL: u64 = 5254;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub dims: [usize; 3],
    pub n_trials: usize,
    pub tr_seconds: f64,
    /// Scan samples between consecutive stimulus timestamps.
    pub isi_trs: usize,
    /// Peak response height per class.
    pub class_amplitudes: BTreeMap<ClassLabel, f64>,
    pub noise_sigma: f64,
    pub ar1_rho: f64,
    pub active_fraction: f64,
    /// Linear drift per second of scan time.
    pub drift_slope: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dims: [6, 6, 4],
            n_trials: 20,
            tr_seconds: 2.0,
            isi_trs: 5,
            class_amplitudes: amplitudes(1.0, 0.7, 0.3),
            noise_sigma: 0.2,
            ar1_rho: 0.3,
            active_fraction: 0.05,
            drift_slope: 0.002,
            seed: 0,
        }
    }
}

pub fn amplitudes(coco: f64, imagenet: f64, sun: f64) -> BTreeMap<ClassLabel, f64> {
    BTreeMap::from([
        (ClassLabel::Coco, coco),
        (ClassLabel::Imagenet, imagenet),
        (ClassLabel::Sun, sun),
    ])
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::BadConfig(msg));
        if self.dims.contains(&0) {
            return bad(format!("dims must be positive, got {:?}", self.dims));
        }
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        if !(self.tr_seconds.is_finite() && self.tr_seconds > 0.0) {
            return bad(format!("tr_seconds must be positive, got {}", self.tr_seconds));
        }
        if self.isi_trs == 0 {
            return bad("isi_trs must be at least 1".into());
        }
        for class in ClassLabel::ALL {
            match self.class_amplitudes.get(&class) {
                Some(a) if a.is_finite() => {}
                Some(a) => return bad(format!("amplitude for {class} is not finite: {a}")),
                None => return bad(format!("missing amplitude for class {}", class.code())),
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(0.0..1.0).contains(&self.ar1_rho) {
            return bad(format!("ar1_rho must lie in [0, 1), got {}", self.ar1_rho));
        }
        if !(self.active_fraction > 0.0 && self.active_fraction <= 1.0) {
            return bad(format!("active_fraction must lie in (0, 1], got {}", self.active_fraction));
        }
        if !self.drift_slope.is_finite() {
            return bad("drift_slope must be finite".into());
        }
        Ok(())
    }

    /// First stimulus timestamp; early enough that every onset is at t >= 0.
    pub fn lead_samples(&self) -> usize {
        (HRF_PEAK_SECONDS / self.tr_seconds).ceil() as usize
    }

    pub fn nt(&self) -> usize {
        let tail = (TAIL_SECONDS / self.tr_seconds).ceil() as usize;
        self.lead_samples() + (STIMULI_PER_TRIAL - 1) * self.isi_trs + 1 + tail
    }

    pub fn n_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn n_active(&self) -> usize {
        ((self.active_fraction * self.n_voxels() as f64).ceil() as usize).min(self.n_voxels())
    }
}

fn gamma_pdf(t: f64, shape: f64, rate: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    ((shape - 1.0) * t.ln() + shape * rate.ln() - rate * t - ln_gamma(shape)).exp()
}

/// Double-gamma hemodynamic response `g(t;6,1) - g(t;16,1)/6`.
pub fn canonical_hrf(t: f64) -> Result<f64> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    Ok(gamma_pdf(t, 6.0, 1.0) - gamma_pdf(t, 16.0, 1.0) / 6.0)
}

/// Response kernel scaled to unit height at [`HRF_PEAK_SECONDS`]; zero
/// before onset.
pub fn unit_peak_response(t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let peak = canonical_hrf(HRF_PEAK_SECONDS).expect("positive time");
    canonical_hrf(t).expect("non-negative time") / peak
}

pub fn onset_seconds(timestamp_index: usize, tr_seconds: f64) -> f64 {
    timestamp_index as f64 * tr_seconds - HRF_PEAK_SECONDS
}

/// Superposed responses of a schedule sampled at each TR, with per-stimulus
/// weights.
pub fn convolved_response(
    schedule: &StimulusSchedule,
    nt: usize,
    tr_seconds: f64,
    weight: impl Fn(ClassLabel) -> f64,
) -> Vec<f64> {
    let mut out = vec![0.0; nt];
    for &(ts, _, label) in &schedule.entries {
        let w = weight(label);
        if w == 0.0 {
            continue;
        }
        let onset = onset_seconds(ts, tr_seconds);
        for (t, v) in out.iter_mut().enumerate() {
            *v += w * unit_peak_response(t as f64 * tr_seconds - onset);
        }
    }
    out
}

/// Class-agnostic stimulus regressor: every presentation weighted 1.
pub fn stimulus_regressor(schedule: &StimulusSchedule, nt: usize, tr_seconds: f64) -> Vec<f64> {
    convolved_response(schedule, nt, tr_seconds, |_| 1.0)
}

/// Random schedules with evenly spaced stimuli and uniformly drawn classes;
/// every class is guaranteed to occur.
pub fn make_schedules(cfg: &SynthConfig) -> Vec<StimulusSchedule> {
    (0..cfg.n_trials as u64)
        .map(|trial_id| {
            let mut rng = rng_for(cfg.seed, "schedule", trial_id);
            let labels = loop {
                let labels: Vec<ClassLabel> = (0..STIMULI_PER_TRIAL)
                    .map(|_| ClassLabel::ALL[rng.random_range(0..3)])
                    .collect();
                if ClassLabel::ALL.iter().all(|c| labels.contains(c)) {
                    break labels;
                }
            };
            let ids = sample(&mut rng, STIMULUS_POOL as usize, STIMULI_PER_TRIAL);
            let entries = labels
                .into_iter()
                .zip(ids.iter())
                .enumerate()
                .map(|(k, (label, id))| (cfg.lead_samples() + k * cfg.isi_trs, id as u64, label))
                .collect();
            StimulusSchedule { trial_id, entries }
        })
        .collect()
}

/// Ground-truth set of signal-carrying voxels, in storage order.
pub fn active_voxels(cfg: &SynthConfig) -> Vec<Coord> {
    let [nx, ny, _] = cfg.dims;
    let mut rng = rng_for(cfg.seed, "active", 0);
    let mut picked = sample(&mut rng, cfg.n_voxels(), cfg.n_active()).into_vec();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|i| [i % nx, (i / nx) % ny, i / (nx * ny)])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub active: Vec<Coord>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub volumes: Vec<BoldVolume4D>,
    pub truth: GroundTruth,
}

/// Renders one volume per schedule. Trials are generated in parallel from
/// per-trial random streams, so the output does not depend on thread count.
pub fn generate(cfg: &SynthConfig, schedules: &[StimulusSchedule]) -> Result<SynthOutput> {
    cfg.validate()?;
    let nt = cfg.nt();
    for s in schedules {
        validate_schedule(s, nt)?;
    }
    let active = active_voxels(cfg);
    let volumes = schedules
        .par_iter()
        .map(|s| render_trial(cfg, s, &active))
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthOutput {
        volumes,
        truth: GroundTruth { active },
    })
}

fn render_trial(cfg: &SynthConfig, schedule: &StimulusSchedule, active: &[Coord]) -> Result<BoldVolume4D> {
    let nt = cfg.nt();
    let [nx, ny, nz] = cfg.dims;
    let n_vox = cfg.n_voxels();
    let signal = convolved_response(schedule, nt, cfg.tr_seconds, |c| cfg.class_amplitudes[&c]);
    let drift: Vec<f64> = (0..nt)
        .map(|t| cfg.drift_slope * t as f64 * cfg.tr_seconds)
        .collect();
    let mut is_active = vec![false; n_vox];
    for c in active {
        is_active[c[0] + nx * (c[1] + ny * c[2])] = true;
    }

    let mut rng = rng_for(cfg.seed, "noise", schedule.trial_id);
    let innovation = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
    let stationary_sd = cfg.noise_sigma / (1.0 - cfg.ar1_rho * cfg.ar1_rho).sqrt();
    let mut data = vec![0f32; n_vox * nt];
    for v in 0..n_vox {
        let mut e = if cfg.noise_sigma > 0.0 {
            stationary_sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
        } else {
            0.0
        };
        for t in 0..nt {
            if t > 0 && cfg.noise_sigma > 0.0 {
                e = cfg.ar1_rho * e + innovation.sample(&mut rng);
            }
            let s = if is_active[v] { signal[t] } else { 0.0 };
            data[v + n_vox * t] = (s + drift[t] + e) as f32;
        }
    }
    BoldVolume4D::new([nx, ny, nz, nt], cfg.tr_seconds, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> SynthConfig {
        SynthConfig {
            dims: [3, 2, 2],
            n_trials: 2,
            noise_sigma: 0.0,
            drift_slope: 0.0,
            active_fraction: 0.25,
            seed: 11,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn hrf_examples() {
        assert_eq!(canonical_hrf(0.0).unwrap(), 0.0);
        assert!(matches!(canonical_hrf(-0.1), Err(Error::NegativeTime(_))));

        // grid oracle: t in [0, 30] step 0.1
        let grid: Vec<(f64, f64)> = (0..=300)
            .map(|i| {
                let t = i as f64 * 0.1;
                (t, canonical_hrf(t).unwrap())
            })
            .collect();
        let (t_peak, h_peak) = grid
            .iter()
            .copied()
            .fold((0.0, f64::MIN), |best, p| if p.1 > best.1 { p } else { best });
        assert!((4.5..=5.5).contains(&t_peak), "peak at {t_peak}");
        assert!(canonical_hrf(30.0).unwrap().abs() < 0.01 * h_peak);
        assert!((unit_peak_response(HRF_PEAK_SECONDS) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hrf_matches_closed_form() {
        // Integer shapes: Gamma(6) = 120, Gamma(16) = 15!
        for t in [0.5f64, 3.0, 5.0, 12.0] {
            let direct = t.powi(5) * (-t).exp() / 120.0 - t.powi(15) * (-t).exp() / 1_307_674_368_000.0 / 6.0;
            assert!((canonical_hrf(t).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn silent_config_gives_zero_volumes() {
        let cfg = SynthConfig {
            class_amplitudes: amplitudes(0.0, 0.0, 0.0),
            ..quiet()
        };
        let out = generate(&cfg, &make_schedules(&cfg)).unwrap();
        assert!(out.volumes.iter().all(|v| v.data().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn single_stimulus_traces_the_sampled_hrf() {
        let cfg = SynthConfig {
            class_amplitudes: amplitudes(1.0, 0.0, 0.0),
            ..quiet()
        };
        let mut schedule = make_schedules(&cfg).remove(0);
        // one COCO stimulus; the other classes stay silent
        for (i, e) in schedule.entries.iter_mut().enumerate() {
            e.2 = if i == 0 { ClassLabel::Coco } else if i % 2 == 0 { ClassLabel::Imagenet } else { ClassLabel::Sun };
        }
        let out = generate(&cfg, std::slice::from_ref(&schedule)).unwrap();
        let vol = &out.volumes[0];
        let onset = onset_seconds(schedule.entries[0].0, cfg.tr_seconds);
        for &c in &out.truth.active {
            let ts = vol.voxel_series(c).unwrap();
            for (t, &v) in ts.iter().enumerate() {
                let tau = t as f64 * cfg.tr_seconds - onset;
                let expected = if tau < 0.0 { 0.0 } else { canonical_hrf(tau).unwrap() / canonical_hrf(HRF_PEAK_SECONDS).unwrap() };
                assert!((v as f64 - expected).abs() < 1e-6, "t={t}: {v} vs {expected}");
            }
            assert!((ts[schedule.entries[0].0] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            noise_sigma: 0.3,
            drift_slope: 0.01,
            ..quiet()
        };
        let a = generate(&cfg, &make_schedules(&cfg)).unwrap();
        let b = generate(&cfg, &make_schedules(&cfg)).unwrap();
        assert_eq!(a.volumes, b.volumes);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.truth.active.len(), cfg.n_active());
    }

    #[test]
    fn doubling_amplitudes_doubles_signal() {
        let cfg = quiet();
        let doubled = SynthConfig {
            class_amplitudes: cfg.class_amplitudes.iter().map(|(k, v)| (*k, 2.0 * v)).collect(),
            ..cfg.clone()
        };
        let schedules = make_schedules(&cfg);
        let a = generate(&cfg, &schedules).unwrap();
        let b = generate(&doubled, &schedules).unwrap();
        for (va, vb) in a.volumes.iter().zip(&b.volumes) {
            for (x, y) in va.data().iter().zip(vb.data()) {
                assert!((2.0 * x - y).abs() <= 1e-6 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn schedules_are_valid() {
        let cfg = SynthConfig::default();
        for s in make_schedules(&cfg) {
            validate_schedule(&s, cfg.nt()).unwrap();
            assert!(onset_seconds(s.entries[0].0, cfg.tr_seconds) >= 0.0);
        }
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = SynthConfig::default();
        cfg.class_amplitudes.remove(&ClassLabel::Sun);
        assert!(cfg.validate().is_err());
        let cfg = SynthConfig {
            ar1_rho: 1.0,
            ..SynthConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
