//! Synthetic fMRI BOLD time-series pipeline: volume generation, active-voxel
//! extraction, preprocessing, recurrent classification and temporal
//! segmentation trained from scratch, plus evaluation artifacts.

pub mod autodiff;
pub mod baseline;
pub mod cli;
pub mod domain;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod models;
pub mod preprocess;
pub mod seed;
pub mod synth;

pub use domain::{
    validate_schedule, BoldVolume4D, ClassLabel, Coord, PadMode, RoiTag, SegmentSample, StimulusSchedule,
    VoxelTimeSeries, WholeTrialSample, STIMULI_PER_TRIAL,
};
pub use error::{Error, Result};
