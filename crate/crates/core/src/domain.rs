//! Domain types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Number of stimuli shown per trial, and therefore the length of a whole
/// voxel time series.
pub const STIMULI_PER_TRIAL: usize = 37;

/// Source dataset of a stimulus image. The integer codes are part of every
/// serialized artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    Coco = 1,
    Imagenet = 2,
    Sun = 3,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Coco, ClassLabel::Imagenet, ClassLabel::Sun];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(ClassLabel::Coco),
            2 => Ok(ClassLabel::Imagenet),
            3 => Ok(ClassLabel::Sun),
            other => Err(Error::UnknownClass(other)),
        }
    }

    /// Zero-based position in [`ClassLabel::ALL`].
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Coco => "COCO",
            ClassLabel::Imagenet => "IMAGENET",
            ClassLabel::Sun => "SUN",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "1" | "COCO" => Ok(ClassLabel::Coco),
            "2" | "IMAGENET" => Ok(ClassLabel::Imagenet),
            "3" | "SUN" => Ok(ClassLabel::Sun),
            _ => Err(Error::BadConfig(format!("unknown class label {s:?}"))),
        }
    }
}

impl Serialize for ClassLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for ClassLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let code = u8::deserialize(deserializer)?;
        ClassLabel::from_code(code).map_err(serde::de::Error::custom)
    }
}

/// Visual region of interest a voxel belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum RoiTag {
    Ppa,
    Rsc,
    Opa,
    Ev,
    Loc,
    #[default]
    Other,
}

impl FromStr for RoiTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PPA" => Ok(RoiTag::Ppa),
            "RSC" => Ok(RoiTag::Rsc),
            "OPA" => Ok(RoiTag::Opa),
            "EV" => Ok(RoiTag::Ev),
            "LOC" => Ok(RoiTag::Loc),
            "OTHER" | "OTHERS" => Ok(RoiTag::Other),
            _ => Err(Error::BadRecord(format!("unknown ROI tag {s:?}"))),
        }
    }
}

pub type Coord = [usize; 3];

/// A 4-D BOLD scan. Samples are stored with x varying fastest and t slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct BoldVolume4D {
    dims: [usize; 4],
    tr_seconds: f64,
    data: Vec<f32>,
}

impl BoldVolume4D {
    pub fn new(dims: [usize; 4], tr_seconds: f64, data: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::BadHeader(format!("dimensions must be positive, got {dims:?}")));
        }
        if !(tr_seconds.is_finite() && tr_seconds > 0.0) {
            return Err(Error::BadHeader(format!("repetition time must be positive, got {tr_seconds}")));
        }
        let expected = dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::DimMismatch {
                expected,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volume intensities"));
        }
        Ok(Self {
            dims,
            tr_seconds,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn nt(&self) -> usize {
        self.dims[3]
    }

    pub fn n_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn tr_seconds(&self) -> f64 {
        self.tr_seconds
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn contains(&self, coord: Coord) -> bool {
        coord[0] < self.dims[0] && coord[1] < self.dims[1] && coord[2] < self.dims[2]
    }

    fn spatial_index(&self, coord: Coord) -> usize {
        coord[0] + self.dims[0] * (coord[1] + self.dims[1] * coord[2])
    }

    pub fn value(&self, coord: Coord, t: usize) -> f32 {
        self.data[self.spatial_index(coord) + self.n_voxels() * t]
    }

    /// Full length-`nt` series of one voxel.
    pub fn voxel_series(&self, coord: Coord) -> Result<Vec<f32>> {
        if !self.contains(coord) {
            return Err(Error::CoordOutOfRange {
                x: coord[0],
                y: coord[1],
                z: coord[2],
            });
        }
        let base = self.spatial_index(coord);
        let stride = self.n_voxels();
        Ok((0..self.nt()).map(|t| self.data[base + stride * t]).collect())
    }

    /// All voxel coordinates in storage order.
    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        let [nx, ny, nz, _] = self.dims;
        (0..nz).flat_map(move |z| (0..ny).flat_map(move |y| (0..nx).map(move |x| [x, y, z])))
    }
}

/// One stimulus presentation: sample index, stimulus id, source class.
pub type ScheduleEntry = (usize, u64, ClassLabel);

/// The ordered stimulus presentations of one trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StimulusSchedule {
    pub trial_id: u64,
    pub entries: Vec<ScheduleEntry>,
}

impl StimulusSchedule {
    pub fn timestamps(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn labels(&self) -> Vec<ClassLabel> {
        self.entries.iter().map(|e| e.2).collect()
    }
}

/// Checks a schedule against a series of `nt` samples.
pub fn validate_schedule(schedule: &StimulusSchedule, nt: usize) -> Result<()> {
    let entries = &schedule.entries;
    if entries.len() != STIMULI_PER_TRIAL {
        return Err(Error::ScheduleLength(entries.len()));
    }
    for (i, pair) in entries.windows(2).enumerate() {
        if pair[1].0 <= pair[0].0 {
            return Err(Error::ScheduleOrder {
                index: i + 1,
                prev: pair[0].0,
                next: pair[1].0,
            });
        }
    }
    if let Some(&(index, _, _)) = entries.iter().find(|e| e.0 >= nt) {
        return Err(Error::ScheduleRange { index, nt });
    }
    for class in ClassLabel::ALL {
        if !entries.iter().any(|e| e.2 == class) {
            return Err(Error::ScheduleMissingClass(class.code()));
        }
    }
    Ok(())
}

/// One voxel's intensities sampled once per stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelTimeSeries {
    pub coord: Coord,
    pub roi: RoiTag,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum PadMode {
    #[default]
    Zero,
    Repeat,
}

impl FromStr for PadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ZERO" => Ok(PadMode::Zero),
            "REPEAT" => Ok(PadMode::Repeat),
            _ => Err(Error::BadConfig(format!("unknown pad mode {s:?}"))),
        }
    }
}

/// A class-specific sub-series and its fixed-length padded form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSample {
    pub label: ClassLabel,
    pub raw: Vec<f64>,
    pub padded: Vec<f64>,
    pub pad_mode: PadMode,
}

impl SegmentSample {
    pub fn new(label: ClassLabel, raw: Vec<f64>, pad_mode: PadMode) -> Result<Self> {
        let padded = crate::preprocess::pad_to(&raw, STIMULI_PER_TRIAL, pad_mode)?;
        Ok(Self {
            label,
            raw,
            padded,
            pad_mode,
        })
    }
}

/// A whole normalized trial series with its per-timestamp labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WholeTrialSample {
    pub values: Vec<f64>,
    pub labels: Vec<ClassLabel>,
}

impl WholeTrialSample {
    pub fn new(values: Vec<f64>, labels: Vec<ClassLabel>) -> Result<Self> {
        if values.len() != STIMULI_PER_TRIAL || labels.len() != STIMULI_PER_TRIAL {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: labels.len(),
            });
        }
        Ok(Self { values, labels })
    }

    /// Binary mask of the timestamps labelled `class`.
    pub fn mask(&self, class: ClassLabel) -> Vec<f64> {
        self.labels
            .iter()
            .map(|&l| if l == class { 1.0 } else { 0.0 })
            .collect()
    }
}
