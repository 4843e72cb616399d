//! Backbones, classifier heads, training recipes, and inference.
//!
//! A [`Backbone`] is a small fully connected tanh network whose final
//! hidden activations serve as features, standing in for a pretrained
//! foundation model. "Strength" couples width with pretraining breadth:
//! wider backbones are pretrained on more concepts. A [`ComposedModel`]
//! attaches a linear [`Head`] and is trained either by linear probing
//! (frozen backbone, head only) or full fine-tuning (everything).

mod serialize;
mod train;

pub use serialize::{
    backbone_from_bytes, backbone_to_bytes, load_backbone, load_model, model_from_bytes,
    model_to_bytes, save_backbone, save_model,
};
pub use train::{full_finetune, pretrain_backbone, train_linear_probe, TrainSettings};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{softmax, Matrix, RngStream};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

/// Backbone capacity/pretraining tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrengthTag {
    Shallow,
    Mid,
    Strong,
}

impl StrengthTag {
    pub fn as_str(self) -> &'static str {
        match self {
            StrengthTag::Shallow => "shallow",
            StrengthTag::Mid => "mid",
            StrengthTag::Strong => "strong",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "shallow" => Ok(StrengthTag::Shallow),
            "mid" => Ok(StrengthTag::Mid),
            "strong" => Ok(StrengthTag::Strong),
            other => Err(Error::Config(format!("unknown backbone tier {other:?}"))),
        }
    }
}

/// Architecture plus pretraining-breadth description of a backbone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    pub pretrain_classes: usize,
    pub pretrain_samples_per_class: usize,
    pub strength: StrengthTag,
}

impl BackboneSpec {
    pub fn new(
        input_dim: usize,
        hidden_widths: Vec<usize>,
        pretrain_classes: usize,
        pretrain_samples_per_class: usize,
        strength: StrengthTag,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        if hidden_widths.is_empty() || hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(
                "hidden_widths must be non-empty and positive".into(),
            ));
        }
        if pretrain_classes < 2 {
            return Err(Error::Config("pretrain_classes must be at least 2".into()));
        }
        if pretrain_samples_per_class == 0 {
            return Err(Error::Config(
                "pretrain_samples_per_class must be positive".into(),
            ));
        }
        Ok(Self {
            input_dim,
            hidden_widths,
            activation: Activation::Tanh,
            pretrain_classes,
            pretrain_samples_per_class,
            strength,
        })
    }

    /// Width 16, pretrained on 8 concepts: the conventional-architecture
    /// analog.
    pub fn shallow(input_dim: usize, samples_per_class: usize) -> Self {
        Self::new(input_dim, vec![16, 16], 8, samples_per_class, StrengthTag::Shallow)
            .expect("preset is valid")
    }

    /// Width 64, pretrained on 24 concepts.
    pub fn mid(input_dim: usize, samples_per_class: usize) -> Self {
        Self::new(input_dim, vec![64, 64], 24, samples_per_class, StrengthTag::Mid)
            .expect("preset is valid")
    }

    /// Width 256, pretrained on 64 concepts: the foundation-model analog.
    pub fn strong(input_dim: usize, samples_per_class: usize) -> Self {
        Self::new(input_dim, vec![256, 256], 64, samples_per_class, StrengthTag::Strong)
            .expect("preset is valid")
    }

    pub fn for_tag(tag: StrengthTag, input_dim: usize, samples_per_class: usize) -> Self {
        match tag {
            StrengthTag::Shallow => Self::shallow(input_dim, samples_per_class),
            StrengthTag::Mid => Self::mid(input_dim, samples_per_class),
            StrengthTag::Strong => Self::strong(input_dim, samples_per_class),
        }
    }

    pub fn feature_dim(&self) -> usize {
        *self.hidden_widths.last().expect("non-empty widths")
    }

    pub fn id(&self) -> &'static str {
        self.strength.as_str()
    }
}

/// One fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    pub weight: Matrix, // out x in
    pub bias: Matrix,   // 1 x out
}

impl Dense {
    fn init(out_dim: usize, in_dim: usize, rng: &mut RngStream) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut data = Vec::with_capacity(out_dim * in_dim);
        for _ in 0..out_dim * in_dim {
            data.push((rng.unit_f64() * 2.0 - 1.0) * bound);
        }
        Self {
            weight: Matrix::from_vec(out_dim, in_dim, data).expect("init weights finite"),
            bias: Matrix::zeros(1, out_dim),
        }
    }

    /// `tanh(x W^T + b)` for a batch of rows.
    fn forward(&self, x: &Matrix) -> Matrix {
        let mut z = x.matmul_nt(&self.weight);
        z.add_row_bias(self.bias.row(0));
        z.map_inplace(f64::tanh);
        z
    }
}

/// Frozen (or trainable, during fine-tuning) feature extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    spec: BackboneSpec,
    pub(crate) layers: Vec<Dense>,
    frozen: bool,
}

impl Backbone {
    pub(crate) fn init(spec: &BackboneSpec, rng: &mut RngStream) -> Self {
        let mut layers = Vec::with_capacity(spec.hidden_widths.len());
        let mut in_dim = spec.input_dim;
        for &w in &spec.hidden_widths {
            layers.push(Dense::init(w, in_dim, rng));
            in_dim = w;
        }
        Self {
            spec: spec.clone(),
            layers,
            frozen: false,
        }
    }

    pub(crate) fn from_parts(spec: BackboneSpec, layers: Vec<Dense>, frozen: bool) -> Self {
        Self {
            spec,
            layers,
            frozen,
        }
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn frozen(&self) -> bool {
        self.frozen
    }

    pub(crate) fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn feature_dim(&self) -> usize {
        self.spec.feature_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    /// Forward pass to the final hidden activations. Callers must have
    /// validated `inputs.cols() == input_dim`.
    pub(crate) fn forward(&self, inputs: &Matrix) -> Matrix {
        let mut a = None;
        for layer in &self.layers {
            let x = a.as_ref().unwrap_or(inputs);
            a = Some(layer.forward(x));
        }
        a.expect("at least one layer")
    }

    /// Forward pass keeping every layer's activations (for backprop).
    pub(crate) fn forward_cached(&self, inputs: &Matrix) -> Vec<Matrix> {
        let mut acts = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = acts.last().unwrap_or(inputs);
            acts.push(layer.forward(x));
        }
        acts
    }
}

/// Features of the frozen backbone: the final hidden activations.
pub fn extract_features(backbone: &Backbone, inputs: &Matrix) -> Result<Matrix> {
    if inputs.cols() != backbone.input_dim() {
        return Err(Error::Shape(format!(
            "inputs have {} columns, backbone expects {}",
            inputs.cols(),
            backbone.input_dim()
        )));
    }
    Ok(backbone.forward(inputs))
}

/// Linear classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub(crate) weight: Matrix, // classes x feature_dim
    pub(crate) bias: Matrix,   // 1 x classes
}

impl Head {
    /// Zero bias; weights uniform in +-1/sqrt(feature_dim).
    pub(crate) fn init(classes: usize, feature_dim: usize, rng: &mut RngStream) -> Self {
        let bound = 1.0 / (feature_dim as f64).sqrt();
        let mut data = Vec::with_capacity(classes * feature_dim);
        for _ in 0..classes * feature_dim {
            data.push((rng.unit_f64() * 2.0 - 1.0) * bound);
        }
        Self {
            weight: Matrix::from_vec(classes, feature_dim, data).expect("init weights finite"),
            bias: Matrix::zeros(1, classes),
        }
    }

    pub(crate) fn logits(&self, features: &Matrix) -> Matrix {
        let mut z = features.matmul_nt(&self.weight);
        z.add_row_bias(self.bias.row(0));
        z
    }

    pub fn classes(&self) -> usize {
        self.weight.rows()
    }
}

/// How a composed model was (or will be) trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    LinearProbe,
    FullFinetune,
}

impl TrainingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainingMode::LinearProbe => "probe",
            TrainingMode::FullFinetune => "finetune",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "probe" | "linear_probe" => Ok(TrainingMode::LinearProbe),
            "finetune" | "full_finetune" => Ok(TrainingMode::FullFinetune),
            other => Err(Error::Config(format!("unknown training mode {other:?}"))),
        }
    }
}

/// Whether predictions expose only the top class or the full distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    Hard,
    Soft,
}

impl LabelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelMode::Hard => "hard",
            LabelMode::Soft => "soft",
        }
    }
}

/// Backbone plus head.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedModel {
    pub(crate) backbone: Backbone,
    pub(crate) head: Head,
    pub training_mode: TrainingMode,
}

impl ComposedModel {
    /// Composes a model over a pretrained backbone.
    ///
    /// The backbone is cloned: a linear-probe model keeps its copy frozen,
    /// a full-fine-tune model unfreezes its copy (the source backbone is
    /// never mutated). The head starts with zero bias and fan-in-scaled
    /// uniform weights drawn from `rng`.
    pub fn compose(
        backbone: &Backbone,
        class_count: usize,
        mode: TrainingMode,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::Config("a classifier needs at least 2 classes".into()));
        }
        if mode == TrainingMode::LinearProbe && !backbone.frozen() {
            return Err(Error::State(
                "linear probing requires a frozen backbone".into(),
            ));
        }
        let mut own = backbone.clone();
        own.set_frozen(mode == TrainingMode::LinearProbe);
        Ok(Self {
            head: Head::init(class_count, own.feature_dim(), rng),
            backbone: own,
            training_mode: mode,
        })
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn class_count(&self) -> usize {
        self.head.classes()
    }

    pub fn input_dim(&self) -> usize {
        self.backbone.input_dim()
    }

    /// Pre-softmax logits for a batch.
    pub fn logits(&self, inputs: &Matrix) -> Result<Matrix> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "inputs have {} columns, model expects {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        Ok(self.head.logits(&self.backbone.forward(inputs)))
    }
}

/// Model output in one of the two label modes.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Hard(Vec<usize>),
    Soft(Matrix),
}

impl Prediction {
    pub fn expect_hard(self) -> Vec<usize> {
        match self {
            Prediction::Hard(labels) => labels,
            Prediction::Soft(_) => panic!("expected hard labels"),
        }
    }

    pub fn expect_soft(self) -> Matrix {
        match self {
            Prediction::Soft(probs) => probs,
            Prediction::Hard(_) => panic!("expected probability rows"),
        }
    }
}

/// Deterministic inference. Hard mode returns the argmax class per row
/// (ties toward the lowest class index); soft mode returns softmax rows.
pub fn predict(model: &ComposedModel, inputs: &Matrix, mode: LabelMode) -> Result<Prediction> {
    let logits = model.logits(inputs)?;
    match mode {
        LabelMode::Hard => {
            // argmax of softmax == argmax of logits (softmax is strictly
            // monotone and preserves ties exactly).
            let labels = logits.iter_rows().map(Matrix::row_argmax).collect();
            Ok(Prediction::Hard(labels))
        }
        LabelMode::Soft => {
            let mut probs = Matrix::zeros(logits.rows(), logits.cols());
            for i in 0..logits.rows() {
                let p = softmax(logits.row(i))?;
                probs.row_mut(i).copy_from_slice(&p);
            }
            Ok(Prediction::Soft(probs))
        }
    }
}
