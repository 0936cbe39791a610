//! Subcommand implementations behind the `boldts` binary. Every command
//! reads its inputs, writes its artifacts into an output directory and
//! leaves the inputs untouched.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::checkpoint;
use crate::baseline::{adaboost_predict, adaboost_train, AdaBoostConfig};
use crate::domain::{BoldVolume4D, ClassLabel, Coord, PadMode, RoiTag, SegmentSample, StimulusSchedule, WholeTrialSample};
use crate::error::{Error, Result};
use crate::eval::{confusion_and_accuracy, dice_per_class, emit_ribbon_svg, emit_scatter_svg, tsne, TsneConfig};
use crate::ingest::{extract_trial, read_roi_map, read_vol4d, write_vol4d, ExtractConfig, TrialSeries};
use crate::models::{
    fold_seed, kfold_cv, mean_dice, plan_folds, train_segmenter, ClassifierConfig, FoldReport, SegmenterConfig,
    TrainConfig,
};
use crate::seed::derive_seed;
use crate::synth::{generate, make_schedules, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelChoice {
    #[default]
    Network,
    Adaboost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvConfig {
    pub folds: usize,
    pub model: ModelChoice,
    /// Layers whose fold-0 activations are written for t-SNE.
    pub capture_layers: Vec<String>,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            model: ModelChoice::Network,
            capture_layers: vec!["dense_1".into(), "dense_2".into()],
        }
    }
}

/// Whole-pipeline configuration. Nested `seed` fields are replaced by
/// streams derived from the top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub extract: ExtractConfig,
    pub train: TrainConfig,
    pub classifier: ClassifierConfig,
    pub cv: CvConfig,
    pub segmenter: SegmenterConfig,
    pub adaboost: AdaBoostConfig,
    pub tsne: TsneConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::BadConfig(format!("{}: {e}", path.display())))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.synth.seed = derive_seed(seed, "synth", 0);
        self.train.seed = derive_seed(seed, "train", 0);
        self.tsne.seed = derive_seed(seed, "tsne", 0);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub trial_id: u64,
    pub coord: Coord,
    pub roi: RoiTag,
    pub label: ClassLabel,
    pub raw: Vec<f64>,
    pub zero: Vec<f64>,
    pub repeat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub coord: Coord,
    pub roi: RoiTag,
    pub values: Vec<f64>,
    pub labels: Vec<ClassLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub trial_id: u64,
    pub coord: Coord,
    pub truth: Vec<ClassLabel>,
    pub pred: Vec<ClassLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivationRecord {
    pub layer: String,
    pub trial_id: u64,
    pub label: ClassLabel,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    path: String,
    sha256: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthManifest {
    seed: u64,
    config: SynthConfig,
    files: Vec<ManifestEntry>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::BadRecord(format!("{}: {e}", path.display())))
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).expect("serializable");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::BadRecord(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn trial_stem(id: u64) -> String {
    format!("{id:03}")
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.synth.validate()?;
    create_dir(out)?;
    let schedules = make_schedules(&cfg.synth);
    let generated = generate(&cfg.synth, &schedules)?;
    let mut names = Vec::new();
    for (vol, schedule) in generated.volumes.iter().zip(&schedules) {
        let stem = trial_stem(schedule.trial_id);
        let vol_name = format!("trial_{stem}.vol4d");
        write_vol4d(vol, &out.join(&vol_name))?;
        let sched_name = format!("schedule_{stem}.json");
        write_json(&out.join(&sched_name), schedule)?;
        names.push(vol_name);
        names.push(sched_name);
    }
    write_json(&out.join("truth.json"), &generated.truth)?;
    names.push("truth.json".into());
    let files = names
        .into_iter()
        .map(|name| {
            Ok(ManifestEntry {
                sha256: sha256_file(&out.join(&name))?,
                path: name,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(
        &out.join("manifest.json"),
        &SynthManifest {
            seed: cfg.seed,
            config: cfg.synth.clone(),
            files,
        },
    )?;
    info!("wrote {} trials to {}", schedules.len(), out.display());
    Ok(())
}

/// Schedule files in `dir`, sorted by name, with their matching volumes.
fn trial_inputs(dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut schedules = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(stem) = name.strip_prefix("schedule_").and_then(|n| n.strip_suffix(".json")) {
            let vol = dir.join(format!("trial_{stem}.vol4d"));
            schedules.push((path.clone(), vol));
        }
    }
    schedules.sort();
    if schedules.is_empty() {
        return Err(Error::Empty("schedule files in input directory"));
    }
    Ok(schedules)
}

pub fn cmd_extract(cfg: &RunConfig, input: &Path, roi_map: Option<&Path>, out: &Path) -> Result<()> {
    let rois = match roi_map {
        Some(p) => read_roi_map(p)?,
        None => HashMap::new(),
    };
    let mut series: Vec<TrialSeries> = Vec::new();
    for (sched_path, vol_path) in trial_inputs(input)? {
        let schedule: StimulusSchedule = read_json(&sched_path)?;
        let vol: BoldVolume4D = read_vol4d(&vol_path)?;
        let found = extract_trial(&vol, &schedule, &rois, &cfg.extract)?;
        info!("trial {}: {} active voxels", schedule.trial_id, found.len());
        series.extend(found);
    }
    if series.is_empty() {
        warn!("NO_ACTIVE_VOXELS: no voxel reached |r| >= {}", cfg.extract.threshold);
    }
    let mut segments = Vec::new();
    for s in &series {
        let zero = s.segments(cfg.extract.normalize, PadMode::Zero)?;
        let repeat = s.segments(cfg.extract.normalize, PadMode::Repeat)?;
        for (z, r) in zero.into_iter().zip(repeat) {
            segments.push(SegmentRecord {
                trial_id: s.trial_id,
                coord: s.coord,
                roi: s.roi,
                label: z.label,
                raw: z.raw,
                zero: z.padded,
                repeat: r.padded,
            });
        }
    }
    let trials: Vec<TrialRecord> = series
        .into_iter()
        .map(|s| TrialRecord {
            trial_id: s.trial_id,
            coord: s.coord,
            roi: s.roi,
            values: s.values,
            labels: s.labels,
        })
        .collect();
    create_dir(out)?;
    write_jsonl(&out.join("segments.jsonl"), &segments)?;
    write_jsonl(&out.join("trials.jsonl"), &trials)?;
    info!("{} whole-trial series, {} segments", trials.len(), segments.len());
    Ok(())
}

/// Segments from `segments.jsonl`, padded per `mode`, with their trial ids.
pub fn load_segments(path: &Path, mode: PadMode) -> Result<(Vec<SegmentSample>, Vec<u64>)> {
    let records: Vec<SegmentRecord> = read_jsonl(path)?;
    let mut samples = Vec::with_capacity(records.len());
    let mut groups = Vec::with_capacity(records.len());
    for r in records {
        let padded = match mode {
            PadMode::Zero => r.zero,
            PadMode::Repeat => r.repeat,
        };
        samples.push(SegmentSample {
            label: r.label,
            raw: r.raw,
            padded,
            pad_mode: mode,
        });
        groups.push(r.trial_id);
    }
    Ok((samples, groups))
}

#[derive(Serialize)]
struct CvSummary {
    model: String,
    classes: Vec<ClassLabel>,
    pad_mode: PadMode,
    folds: usize,
    samples: usize,
    mean_accuracy: f64,
}

pub fn cmd_train_cls(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let seg_path = if input.is_dir() { input.join("segments.jsonl") } else { input.to_path_buf() };
    let (samples, groups) = load_segments(&seg_path, cfg.train.pad_mode)?;
    cfg.classifier.validate()?;
    create_dir(out)?;
    let k = cfg.cv.folds;
    let (reports, model_name) = match cfg.cv.model {
        ModelChoice::Network => {
            let run = kfold_cv(&samples, &groups, k, &cfg.classifier, &cfg.train)?;
            let first = &run.folds[0];
            checkpoint::save(&first.model.net, fold_seed(cfg.train.seed, 0), &out.join("model_fold0.json"))?;
            let kept: Vec<SegmentSample> = samples
                .iter()
                .filter(|s| cfg.classifier.classes.contains(&s.label))
                .cloned()
                .collect();
            let kept_groups: Vec<u64> = samples
                .iter()
                .zip(&groups)
                .filter(|(s, _)| cfg.classifier.classes.contains(&s.label))
                .map(|(_, &g)| g)
                .collect();
            let mut records = Vec::new();
            for (layer, rows) in first.model.activations(&kept)? {
                if !cfg.cv.capture_layers.contains(&layer) {
                    continue;
                }
                for ((values, s), &g) in rows.into_iter().zip(&kept).zip(&kept_groups) {
                    records.push(ActivationRecord {
                        layer: layer.clone(),
                        trial_id: g,
                        label: s.label,
                        values,
                    });
                }
            }
            write_jsonl(&out.join("activations_fold0.jsonl"), &records)?;
            (run.reports(), format!("{:?}", cfg.classifier.variant).to_uppercase())
        }
        ModelChoice::Adaboost => (adaboost_cv(&samples, &groups, cfg, out)?, "ADABOOST".to_string()),
    };
    write_jsonl(&out.join("folds.jsonl"), &reports)?;
    let mean = reports.iter().map(|r| r.test_accuracy).sum::<f64>() / reports.len() as f64;
    write_json(
        &out.join("summary.json"),
        &CvSummary {
            model: model_name,
            classes: cfg.classifier.classes.clone(),
            pad_mode: cfg.train.pad_mode,
            folds: k,
            samples: samples.len(),
            mean_accuracy: mean,
        },
    )?;
    info!("mean accuracy over {k} folds: {mean:.4}");
    Ok(())
}

fn adaboost_cv(samples: &[SegmentSample], groups: &[u64], cfg: &RunConfig, out: &Path) -> Result<Vec<FoldReport>> {
    let classes = &cfg.classifier.classes;
    let keep: Vec<usize> = (0..samples.len()).filter(|&i| classes.contains(&samples[i].label)).collect();
    let kept_groups: Vec<u64> = keep.iter().map(|&i| groups[i]).collect();
    let splits = plan_folds(&kept_groups, cfg.cv.folds, cfg.train.seed)?;
    let mut reports = Vec::new();
    for (i, split) in splits.iter().enumerate() {
        let (tr, _, te) = split.indices(&kept_groups);
        let x: Vec<Vec<f64>> = tr.iter().map(|&j| samples[keep[j]].padded.clone()).collect();
        let y: Vec<ClassLabel> = tr.iter().map(|&j| samples[keep[j]].label).collect();
        let (ensemble, _) = adaboost_train(&x, &y, &cfg.adaboost)?;
        if i == 0 {
            write_json(&out.join("ensemble_fold0.json"), &ensemble)?;
        }
        let preds = te
            .iter()
            .map(|&j| adaboost_predict(&ensemble, &samples[keep[j]].padded))
            .collect::<Result<Vec<_>>>()?;
        let truths: Vec<ClassLabel> = te.iter().map(|&j| samples[keep[j]].label).collect();
        let (confusion, acc) = confusion_and_accuracy(&preds, &truths, classes)?;
        reports.push(FoldReport {
            fold_index: i,
            test_accuracy: acc,
            confusion,
            dice_per_class: None,
        });
    }
    Ok(reports)
}

#[derive(Serialize)]
struct SegmentationReport {
    train_trials: Vec<u64>,
    val_trials: Vec<u64>,
    test_trials: Vec<u64>,
    epochs: usize,
    best_epoch: usize,
    dice: BTreeMap<ClassLabel, f64>,
    mean_dice: f64,
}

/// Trains the segmenter on the first fold of the grouped split and writes
/// predictions for its held-out trials.
pub fn cmd_train_seg(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let path = if input.is_dir() { input.join("trials.jsonl") } else { input.to_path_buf() };
    let records: Vec<TrialRecord> = read_jsonl(&path)?;
    let groups: Vec<u64> = records.iter().map(|r| r.trial_id).collect();
    let trials = records
        .iter()
        .map(|r| WholeTrialSample::new(r.values.clone(), r.labels.clone()))
        .collect::<Result<Vec<_>>>()?;
    let split = plan_folds(&groups, cfg.cv.folds, cfg.train.seed)?.remove(0);
    let (tr, va, te) = split.indices(&groups);
    let pick = |idx: &[usize]| idx.iter().map(|&i| trials[i].clone()).collect::<Vec<_>>();
    let test = pick(&te);
    let (model, history) = train_segmenter(&pick(&tr), &pick(&va), &cfg.segmenter, &cfg.train)?;
    let preds = model.predict(&test)?;
    let dice = mean_dice(&preds, &test)?;
    create_dir(out)?;
    checkpoint::save(&model.net, cfg.train.seed, &out.join("segmenter.json"))?;
    let out_records: Vec<PredictionRecord> = te
        .iter()
        .zip(preds)
        .map(|(&i, pred)| PredictionRecord {
            trial_id: records[i].trial_id,
            coord: records[i].coord,
            truth: records[i].labels.clone(),
            pred,
        })
        .collect();
    write_jsonl(&out.join("predictions.jsonl"), &out_records)?;
    let mean = dice.values().sum::<f64>() / dice.len() as f64;
    write_json(
        &out.join("segmentation.json"),
        &SegmentationReport {
            train_trials: split.train.iter().copied().collect(),
            val_trials: split.val.iter().copied().collect(),
            test_trials: split.test.iter().copied().collect(),
            epochs: history.train_loss.len(),
            best_epoch: history.best_epoch,
            dice,
            mean_dice: mean,
        },
    )?;
    info!("held-out mean Dice {mean:.4}");
    Ok(())
}

#[derive(Serialize)]
struct Metrics {
    records: usize,
    accuracy: f64,
    confusion: Vec<Vec<usize>>,
    dice: BTreeMap<ClassLabel, f64>,
}

pub fn cmd_eval(input: &Path, out: &Path) -> Result<()> {
    let path = if input.is_dir() { input.join("predictions.jsonl") } else { input.to_path_buf() };
    let records: Vec<PredictionRecord> = read_jsonl(&path)?;
    if records.is_empty() {
        return Err(Error::Empty("prediction records"));
    }
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    let mut dice_sum: BTreeMap<ClassLabel, f64> = BTreeMap::new();
    for r in &records {
        for (c, d) in dice_per_class(&r.pred, &r.truth)? {
            *dice_sum.entry(c).or_default() += d;
        }
        preds.extend_from_slice(&r.pred);
        truths.extend_from_slice(&r.truth);
    }
    let (confusion, accuracy) = confusion_and_accuracy(&preds, &truths, &ClassLabel::ALL)?;
    let n = records.len() as f64;
    create_dir(out)?;
    write_json(
        &out.join("metrics.json"),
        &Metrics {
            records: records.len(),
            accuracy,
            confusion,
            dice: dice_sum.into_iter().map(|(c, s)| (c, s / n)).collect(),
        },
    )
}

#[derive(Serialize)]
struct Embedding {
    layer: String,
    labels: Vec<ClassLabel>,
    points: Vec<Vec<f64>>,
}

pub fn cmd_tsne(cfg: &RunConfig, input: &Path, layer: Option<&str>, out: &Path) -> Result<()> {
    let path = if input.is_dir() { input.join("activations_fold0.jsonl") } else { input.to_path_buf() };
    let records: Vec<ActivationRecord> = read_jsonl(&path)?;
    let layer = match layer {
        Some(l) => l.to_string(),
        None => records.first().map(|r| r.layer.clone()).ok_or(Error::Empty("activation records"))?,
    };
    let chosen: Vec<&ActivationRecord> = records.iter().filter(|r| r.layer == layer).collect();
    if chosen.is_empty() {
        return Err(Error::BadConfig(format!("no activations recorded for layer {layer:?}")));
    }
    let points: Vec<Vec<f64>> = chosen.iter().map(|r| r.values.clone()).collect();
    let labels: Vec<ClassLabel> = chosen.iter().map(|r| r.label).collect();
    let embedding = tsne(&points, &cfg.tsne)?;
    create_dir(out)?;
    emit_scatter_svg(&embedding, &labels, &out.join(format!("tsne_{layer}.svg")))?;
    write_json(
        &out.join(format!("tsne_{layer}.json")),
        &Embedding {
            layer,
            labels,
            points: embedding,
        },
    )
}

pub fn cmd_ribbon(input: &Path, limit: Option<usize>, out: &Path) -> Result<()> {
    let path = if input.is_dir() { input.join("predictions.jsonl") } else { input.to_path_buf() };
    let records: Vec<PredictionRecord> = read_jsonl(&path)?;
    create_dir(out)?;
    for r in records.iter().take(limit.unwrap_or(usize::MAX)) {
        let [x, y, z] = r.coord;
        let name = format!("ribbon_{}_{x}_{y}_{z}.svg", trial_stem(r.trial_id));
        emit_ribbon_svg(&r.truth, &r.pred, &out.join(name))?;
    }
    Ok(())
}
