use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, LayerSpec, LossKind};
use crate::domain::{ClassLabel, STIMULI_PER_TRIAL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum Variant {
    Lstm,
    #[default]
    Bilstm,
}

fn default_classes() -> Vec<ClassLabel> {
    ClassLabel::ALL.to_vec()
}

fn default_len() -> usize {
    STIMULI_PER_TRIAL
}

fn one() -> usize {
    1
}

/// Divides a layer width, keeping it positive and, for bidirectional
/// layers, even.
fn scaled(width: usize, divisor: usize, even: bool) -> usize {
    let w = (width / divisor).max(1);
    if even {
        (w + w % 2).max(2)
    } else {
        w
    }
}

/// Segment classifier. `classes` lists the two or three labels the model
/// separates; with two, a single sigmoid unit scores the higher code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    #[serde(default)]
    pub variant: Variant,
    #[serde(default = "default_classes")]
    pub classes: Vec<ClassLabel>,
    #[serde(default = "default_len")]
    pub input_len: usize,
    /// Shrinks every hidden width by this factor; 1 is the full model.
    #[serde(default = "one")]
    pub width_divisor: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            variant: Variant::default(),
            classes: default_classes(),
            input_len: default_len(),
            width_divisor: 1,
        }
    }
}

impl ClassifierConfig {
    pub fn binary(variant: Variant, a: ClassLabel, b: ClassLabel) -> Self {
        Self {
            variant,
            classes: vec![a.min(b), a.max(b)],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.classes.len();
        if !(n == 2 || n == 3) || self.classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadConfig(
                "classifier classes must be 2 or 3 distinct labels in ascending order".into(),
            ));
        }
        if self.input_len == 0 || self.width_divisor == 0 {
            return Err(Error::BadConfig("input_len and width_divisor must be positive".into()));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn loss_kind(&self) -> LossKind {
        if self.n_classes() == 3 {
            LossKind::Cce
        } else {
            LossKind::Bce
        }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        let d = self.width_divisor;
        let (rec1, rec2) = match self.variant {
            Variant::Lstm => (LayerSpec::lstm("lstm_1", scaled(64, d, false), true), LayerSpec::lstm("lstm_2", scaled(32, d, false), true)),
            Variant::Bilstm => (
                LayerSpec::bilstm("bilstm_1", scaled(128, d, true), true),
                LayerSpec::bilstm("bilstm_2", scaled(64, d, true), true),
            ),
        };
        let out = if self.n_classes() == 3 {
            LayerSpec::dense("output", 3, Activation::Softmax)
        } else {
            LayerSpec::dense("output", 1, Activation::Sigmoid)
        };
        vec![
            LayerSpec::dense("dense_in", scaled(32, d, false), Activation::Relu),
            rec1,
            LayerSpec::dropout("dropout_1", 0.5),
            rec2,
            LayerSpec::dropout("dropout_2", 0.5),
            LayerSpec::flatten("flatten"),
            LayerSpec::dense("dense_1", scaled(64, d, false), Activation::Relu),
            LayerSpec::dense("dense_2", scaled(32, d, false), Activation::Relu),
            out,
        ]
    }

    fn position(&self, label: ClassLabel) -> Result<usize> {
        self.classes
            .iter()
            .position(|&c| c == label)
            .ok_or(Error::UnknownClass(label.code()))
    }

    /// One-hot row for three classes, `[0|1]` for two.
    pub fn target(&self, label: ClassLabel) -> Result<Vec<f64>> {
        let pos = self.position(label)?;
        Ok(if self.n_classes() == 3 {
            (0..3).map(|i| f64::from(u8::from(i == pos))).collect()
        } else {
            vec![pos as f64]
        })
    }

    /// Argmax over the softmax row, or the higher class when the sigmoid
    /// exceeds one half. Ties go to the lower class code.
    pub fn decode(&self, row: &[f64]) -> ClassLabel {
        if self.n_classes() == 3 {
            self.classes[argmax_first(row)]
        } else if row[0] > 0.5 {
            self.classes[1]
        } else {
            self.classes[0]
        }
    }
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Whole-series segmenter with one 37-unit sigmoid head per class, packed
/// into a single output layer in class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmenterConfig {
    #[serde(default = "default_len")]
    pub input_len: usize,
    #[serde(default = "one")]
    pub width_divisor: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            input_len: default_len(),
            width_divisor: 1,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.width_divisor == 0 {
            return Err(Error::BadConfig("input_len and width_divisor must be positive".into()));
        }
        Ok(())
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        let d = self.width_divisor;
        vec![
            LayerSpec::dense("dense_in", scaled(64, d, false), Activation::Relu),
            LayerSpec::bilstm("bilstm_1", scaled(256, d, true), true),
            LayerSpec::dropout("dropout_1", 0.5),
            LayerSpec::bilstm("bilstm_2", scaled(512, d, true), true),
            LayerSpec::dropout("dropout_2", 0.5),
            LayerSpec::dense("dense_1", scaled(128, d, false), Activation::Relu),
            LayerSpec::dense("dense_2", scaled(64, d, false), Activation::Relu),
            LayerSpec::flatten("flatten"),
            LayerSpec::dense("heads", 3 * self.input_len, Activation::Sigmoid),
        ]
    }

    /// Concatenated per-class masks, the training target for the heads.
    pub fn target(labels: &[ClassLabel]) -> Vec<f64> {
        ClassLabel::ALL
            .iter()
            .flat_map(|&c| labels.iter().map(move |&l| f64::from(u8::from(l == c))))
            .collect()
    }
}

/// Position-wise argmax over the three heads; ties go to the lowest code.
pub fn decode_heads(output: &[f64], len: usize) -> Vec<ClassLabel> {
    (0..len)
        .map(|t| {
            let scores = [output[t], output[len + t], output[2 * len + t]];
            ClassLabel::ALL[argmax_first(&scores)]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::LayerKind;
    use ClassLabel::{Coco, Imagenet, Sun};

    #[test]
    fn classifier_stack_order() {
        let specs = ClassifierConfig::default().specs();
        let kinds: Vec<LayerKind> = specs.iter().map(|s| s.kind).collect();
        use LayerKind::*;
        assert_eq!(kinds, vec![Dense, Bilstm, Dropout, Bilstm, Dropout, Flatten, Dense, Dense, Dense]);
        let units: Vec<usize> = specs.iter().map(|s| s.units).collect();
        assert_eq!(units, vec![32, 128, 0, 64, 0, 0, 64, 32, 3]);
        let lstm = ClassifierConfig {
            variant: Variant::Lstm,
            classes: vec![Coco, Sun],
            ..Default::default()
        };
        let specs = lstm.specs();
        assert_eq!(specs[1].units, 64);
        assert_eq!(specs[3].units, 32);
        assert_eq!(specs[8].units, 1);
        assert_eq!(specs[8].activation, Activation::Sigmoid);
    }

    #[test]
    fn segmenter_stack_order() {
        let units: Vec<usize> = SegmenterConfig::default().specs().iter().map(|s| s.units).collect();
        assert_eq!(units, vec![64, 256, 0, 512, 0, 128, 64, 0, 111]);
    }

    #[test]
    fn reduced_widths_stay_valid() {
        let cfg = ClassifierConfig {
            width_divisor: 100,
            ..Default::default()
        };
        for s in cfg.specs() {
            s.validate().unwrap();
        }
        assert_eq!(cfg.specs()[1].units, 2);
    }

    #[test]
    fn targets_and_decoding() {
        let tri = ClassifierConfig::default();
        assert_eq!(tri.target(Imagenet).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(tri.decode(&[0.2, 0.4, 0.4]), Imagenet);
        let bin = ClassifierConfig::binary(Variant::Bilstm, Sun, Imagenet);
        assert_eq!(bin.classes, vec![Imagenet, Sun]);
        assert_eq!(bin.target(Sun).unwrap(), vec![1.0]);
        assert_eq!(bin.decode(&[0.5]), Imagenet);
        assert_eq!(bin.decode(&[0.51]), Sun);
        assert!(matches!(bin.target(Coco), Err(Error::UnknownClass(1))));
        assert!(ClassifierConfig { classes: vec![Sun, Coco], ..Default::default() }.validate().is_err());
    }

    #[test]
    fn head_decoding() {
        // three positions: clear COCO, exact COCO/IMAGENET tie, clear SUN
        let out = [0.9, 0.5, 0.1, 0.1, 0.5, 0.2, 0.1, 0.2, 0.8];
        assert_eq!(decode_heads(&out, 3), vec![Coco, Coco, Sun]);
        let labels = [Coco, Sun, Imagenet];
        let target = SegmenterConfig::target(&labels);
        assert_eq!(decode_heads(&target, 3), labels.to_vec());
    }

    #[test]
    fn masks_partition_positions() {
        let labels: Vec<ClassLabel> = (0..37).map(|i| ClassLabel::ALL[(i * i) % 3]).collect();
        let target = SegmenterConfig::target(&labels);
        for t in 0..37 {
            let hits: f64 = (0..3).map(|k| target[k * 37 + t]).sum();
            assert_eq!(hits, 1.0);
        }
    }
}
