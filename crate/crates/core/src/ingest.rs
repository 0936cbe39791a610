//! Volume I/O, active-voxel detection, whole-series extraction and
//! class-wise splitting.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    validate_schedule, BoldVolume4D, ClassLabel, Coord, PadMode, RoiTag, SegmentSample, StimulusSchedule,
    VoxelTimeSeries, WholeTrialSample,
};
use crate::error::{Error, Result};
use crate::preprocess::{detrend_linear, normalize};
use crate::synth::stimulus_regressor;

pub const VOL4D_MAGIC: [u8; 8] = *b"VOL4D\0\0\x01";
pub const DEFAULT_THRESHOLD: f64 = 0.35;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Vol4dHeader {
    dims: [usize; 4],
    tr: f64,
}

pub fn encode_vol4d(vol: &BoldVolume4D) -> Vec<u8> {
    let header = serde_json::to_string(&Vol4dHeader {
        dims: vol.dims(),
        tr: vol.tr_seconds(),
    })
    .expect("header serializes");
    let mut out = Vec::with_capacity(8 + header.len() + 1 + 4 * vol.data().len());
    out.extend_from_slice(&VOL4D_MAGIC);
    out.extend_from_slice(header.as_bytes());
    out.push(b'\n');
    for v in vol.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_vol4d(bytes: &[u8], path: &Path) -> Result<BoldVolume4D> {
    if bytes.len() < 8 || bytes[..8] != VOL4D_MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    let rest = &bytes[8..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::BadHeader("missing header terminator".into()))?;
    let header: Vol4dHeader = serde_json::from_slice(&rest[..nl]).map_err(|e| Error::BadHeader(e.to_string()))?;
    let payload = &rest[nl + 1..];
    let expected = header.dims.iter().product::<usize>();
    if payload.len() != 4 * expected {
        return Err(Error::DimMismatch {
            expected,
            found: payload.len() / 4,
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    BoldVolume4D::new(header.dims, header.tr, data)
}

pub fn write_vol4d(vol: &BoldVolume4D, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_vol4d(vol)).map_err(|e| Error::io(path, e))
}

pub fn read_vol4d(path: &Path) -> Result<BoldVolume4D> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_vol4d(&bytes, path)
}

/// Reads a ROI sidecar mapping `"x,y,z"` keys to tag names.
pub fn read_roi_map(path: &Path) -> Result<HashMap<Coord, RoiTag>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: BTreeMap<String, String> =
        serde_json::from_str(&text).map_err(|e| Error::BadRecord(format!("{}: {e}", path.display())))?;
    raw.into_iter()
        .map(|(key, tag)| {
            let parts: Vec<usize> = key
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::BadRecord(format!("bad ROI key {key:?}")))?;
            let coord: Coord = parts
                .try_into()
                .map_err(|_| Error::BadRecord(format!("bad ROI key {key:?}")))?;
            Ok((coord, tag.parse()?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveVoxelReport {
    pub coords: Vec<Coord>,
    pub scores: Vec<f64>,
    pub threshold: f64,
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Flags voxels whose series correlates with the stimulus regressor at
/// `|r| >= threshold`, after removing a linear trend from both sides.
/// Result is sorted by descending score, ties by storage order.
pub fn detect_active_voxels(
    vol: &BoldVolume4D,
    schedule: &StimulusSchedule,
    threshold: f64,
) -> Result<ActiveVoxelReport> {
    let regressor = stimulus_regressor(schedule, vol.nt(), vol.tr_seconds());
    detect_with_regressor(vol, &regressor, threshold)
}

/// A linear ramp detrends to rounding noise; such residuals count as
/// zero variance.
fn detrended_or_flat(x: &[f64]) -> Option<Vec<f64>> {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let d = detrend_linear(x).ok()?;
    let resid = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (resid > 1e-9 * (1.0 + scale)).then_some(d)
}

pub fn detect_with_regressor(vol: &BoldVolume4D, regressor: &[f64], threshold: f64) -> Result<ActiveVoxelReport> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::BadConfig(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    if regressor.len() != vol.nt() {
        return Err(Error::LengthMismatch {
            left: regressor.len(),
            right: vol.nt(),
        });
    }
    let coords: Vec<Coord> = vol.coords().collect();
    let Some(regressor) = detrended_or_flat(regressor) else {
        return Ok(ActiveVoxelReport {
            coords: Vec::new(),
            scores: Vec::new(),
            threshold,
        });
    };
    let mut hits: Vec<(usize, f64)> = coords
        .par_iter()
        .enumerate()
        .filter_map(|(i, &c)| {
            let series: Vec<f64> = vol.voxel_series(c).ok()?.into_iter().map(f64::from).collect();
            let r = pearson(&detrended_or_flat(&series)?, &regressor)?.abs();
            (r >= threshold).then_some((i, r))
        })
        .collect();
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ActiveVoxelReport {
        coords: hits.iter().map(|&(i, _)| coords[i]).collect(),
        scores: hits.iter().map(|&(_, r)| r).collect(),
        threshold,
    })
}

/// Samples one voxel at the schedule's timestamps, in schedule order.
pub fn extract_whole_ts(
    vol: &BoldVolume4D,
    coord: Coord,
    schedule: &StimulusSchedule,
    roi: RoiTag,
) -> Result<VoxelTimeSeries> {
    let series = vol.voxel_series(coord)?;
    let samples = schedule
        .timestamps()
        .map(|t| {
            series
                .get(t)
                .map(|&v| f64::from(v))
                .ok_or(Error::ScheduleRange { index: t, nt: vol.nt() })
        })
        .collect::<Result<_>>()?;
    Ok(VoxelTimeSeries { coord, roi, samples })
}

/// Splits a whole series into order-preserving per-class subsequences.
pub fn split_by_class(samples: &[f64], schedule: &StimulusSchedule) -> Result<BTreeMap<ClassLabel, Vec<f64>>> {
    if samples.len() != schedule.entries.len() {
        return Err(Error::LengthMismatch {
            left: samples.len(),
            right: schedule.entries.len(),
        });
    }
    let mut out: BTreeMap<ClassLabel, Vec<f64>> = BTreeMap::new();
    for (&v, e) in samples.iter().zip(&schedule.entries) {
        out.entry(e.2).or_default().push(v);
    }
    Ok(out)
}

/// Padded segments, one per class present, in class order.
pub fn segments(samples: &[f64], schedule: &StimulusSchedule, mode: PadMode) -> Result<Vec<SegmentSample>> {
    split_by_class(samples, schedule)?
        .into_iter()
        .map(|(label, raw)| SegmentSample::new(label, raw, mode))
        .collect()
}

/// Which span detrending and z-scoring see: the whole 37-sample trial
/// series, or each class segment on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NormalizeScope {
    #[default]
    WholeSeries,
    Segment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    pub threshold: f64,
    pub normalize: NormalizeScope,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            normalize: NormalizeScope::WholeSeries,
        }
    }
}

/// One active voxel's series within one trial, as sampled at the schedule
/// timestamps and after whole-series normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSeries {
    pub trial_id: u64,
    pub coord: Coord,
    pub roi: RoiTag,
    pub raw: Vec<f64>,
    pub values: Vec<f64>,
    pub labels: Vec<ClassLabel>,
}

impl TrialSeries {
    pub fn whole(&self) -> Result<WholeTrialSample> {
        WholeTrialSample::new(self.values.clone(), self.labels.clone())
    }

    /// Order-preserving class segments, one per class present, in class
    /// order.
    pub fn segments(&self, scope: NormalizeScope, mode: PadMode) -> Result<Vec<SegmentSample>> {
        let source = match scope {
            NormalizeScope::WholeSeries => &self.values,
            NormalizeScope::Segment => &self.raw,
        };
        let mut parts: BTreeMap<ClassLabel, Vec<f64>> = BTreeMap::new();
        for (&v, &l) in source.iter().zip(&self.labels) {
            parts.entry(l).or_default().push(v);
        }
        parts
            .into_iter()
            .map(|(label, part)| {
                let part = match scope {
                    NormalizeScope::WholeSeries => part,
                    NormalizeScope::Segment => normalize(&part)?,
                };
                SegmentSample::new(label, part, mode)
            })
            .collect()
    }
}

/// Detects active voxels in one trial and extracts and normalizes each of
/// their series. Voxels missing from `roi_map` are tagged `OTHER`.
pub fn extract_trial(
    vol: &BoldVolume4D,
    schedule: &StimulusSchedule,
    roi_map: &HashMap<Coord, RoiTag>,
    cfg: &ExtractConfig,
) -> Result<Vec<TrialSeries>> {
    validate_schedule(schedule, vol.nt())?;
    let report = detect_active_voxels(vol, schedule, cfg.threshold)?;
    let mut coords = report.coords;
    coords.sort_by_key(|c| (c[2], c[1], c[0]));
    coords
        .into_iter()
        .map(|coord| {
            let roi = roi_map.get(&coord).copied().unwrap_or_default();
            let ts = extract_whole_ts(vol, coord, schedule, roi)?;
            Ok(TrialSeries {
                trial_id: schedule.trial_id,
                coord,
                roi,
                values: normalize(&ts.samples)?,
                raw: ts.samples,
                labels: schedule.labels(),
            })
        })
        .collect()
}

/// Segments of every series plus the trial id each came from.
pub fn segment_dataset(
    series: &[TrialSeries],
    scope: NormalizeScope,
    mode: PadMode,
) -> Result<(Vec<SegmentSample>, Vec<u64>)> {
    let mut samples = Vec::new();
    let mut groups = Vec::new();
    for s in series {
        for seg in s.segments(scope, mode)? {
            samples.push(seg);
            groups.push(s.trial_id);
        }
    }
    Ok((samples, groups))
}
