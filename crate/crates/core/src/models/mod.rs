//! The segment classifier and whole-series segmenter, their training loop
//! and grouped cross-validation.

pub mod arch;
pub mod classifier;
pub mod cv;
pub mod segmenter;
pub mod train;

pub use arch::{decode_heads, ClassifierConfig, SegmenterConfig, Variant};
pub use classifier::{train_classifier, TrainedClassifier};
pub use cv::{fold_seed, kfold_cv, plan_folds, CvRun, FoldOutcome, FoldReport, FoldSplit};
pub use segmenter::{mean_dice, predict_segmentation, train_segmenter, TrainedSegmenter};
pub use train::{dataset_loss, fit, predict_all, Example, History, TrainConfig};
