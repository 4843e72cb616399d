//! Evaluation metrics: accuracy, victim/thief agreement, silhouette
//! separability, 2-D principal-component projection, and rank correlation.

mod metrics;
mod projection;
mod silhouette;

pub use metrics::{accuracy, agreement, spearman};
pub use projection::{export_projection_csv, project_2d};
pub use silhouette::{silhouette, SILHOUETTE_SUBSAMPLE_CAP};

use crate::numcore::Matrix;

/// Accuracy and agreement for one victim/thief pair on a shared test set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub accuracy: f64,
    pub agreement: f64,
    pub n_test: usize,
}

/// Which embedding a separability report was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSource {
    /// Features of the frozen backbone (penultimate layer).
    BackbonePenultimate,
    /// Pre-softmax logits of the composed model.
    ModelFinal,
}

impl EmbeddingSource {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingSource::BackbonePenultimate => "backbone_penultimate",
            EmbeddingSource::ModelFinal => "model_final",
        }
    }
}

/// Separability diagnostics for one embedding of a labeled sample set.
#[derive(Debug, Clone)]
pub struct SeparabilityReport {
    pub silhouette: f64,
    pub projection_2d: Matrix,
    pub source: EmbeddingSource,
}
