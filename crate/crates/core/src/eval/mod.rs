//! Metrics, exact t-SNE and SVG figure emitters.

pub mod metrics;
pub mod svg;
pub mod tsne;

pub use metrics::{confusion_and_accuracy, dice, dice_per_class};
pub use svg::{emit_ribbon_svg, emit_scatter_svg, ribbon_svg, scatter_svg};
pub use tsne::{conditional_affinities, joint_affinities, knn_purity, tsne, TsneConfig};
