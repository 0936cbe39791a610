//! Minimal reverse-mode differentiation for the layer set the recurrent
//! models use. Forward passes record a tape of per-layer caches and the
//! backward sweep walks it in reverse, accumulating parameter gradients.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod linalg;
pub mod loss;
pub mod network;
pub mod optim;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_fn, GradCheckOptions, GradCheckReport};
pub use layers::{bilstm_forward, dense_forward, dropout, lstm_forward, Activation, BiLstm, Dense, Lstm};
pub use loss::{loss, loss_difference, loss_grad, LossKind};
pub use network::{batch_series, per_sample, FeatureShape, Layer, LayerKind, LayerSpec, Mode, Sequential, Tape};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use tensor::Tensor;
