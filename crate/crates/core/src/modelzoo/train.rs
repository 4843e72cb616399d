//! Pretraining, linear probing, and full fine-tuning.
//!
//! All three recipes share the same skeleton: seeded 90/10 train/validation
//! split (where applicable), per-epoch shuffling, minibatch SGD with
//! momentum and weight decay on mean cross-entropy, step-decayed learning
//! rate, and model selection by best validation accuracy with ties broken
//! toward the earliest epoch.

use crate::datagen::{split, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::evalkit::accuracy;
use crate::modelzoo::{Backbone, BackboneSpec, ComposedModel, Head, TrainingMode};
use crate::numcore::{cross_entropy_grad, lr_at_epoch, sgd_step, Matrix, RngStream, SgdHyper};

/// Optimizer plus loop controls for one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub hyper: SgdHyper,
    pub epochs: usize,
    pub batch_size: usize,
}

impl TrainSettings {
    pub fn new(hyper: SgdHyper, epochs: usize, batch_size: usize) -> Result<Self> {
        hyper.validate()?;
        if epochs == 0 {
            return Err(Error::Config("training needs at least 1 epoch".into()));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(Self {
            hyper,
            epochs,
            batch_size,
        })
    }
}

/// Outcome summary of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_validation_accuracy: f64,
    /// 1-based epoch whose snapshot was selected.
    pub selected_epoch: usize,
    /// Mean training loss over the final epoch.
    pub final_train_loss: f64,
    /// Validation accuracy after each epoch (empty for pretraining, which
    /// selects no snapshot).
    pub per_epoch_validation: Vec<f64>,
    pub train_samples: usize,
    pub val_samples: usize,
}

fn require_labeled<'a>(data: &'a Dataset, what: &str) -> Result<&'a [usize]> {
    if data.is_empty() {
        return Err(Error::Data(format!("{what}: dataset is empty")));
    }
    data.labels_or_err()
}

/// Seeded 90/10 split. Datasets too small to leave a validation row fall
/// back to validating on the training slice itself.
fn validation_split(labeled: &Dataset, rng: &mut RngStream) -> Result<(Dataset, Dataset)> {
    let spec = SplitSpec::new(vec![0.9, 0.1], rng.next_u64())?;
    let mut parts = split(labeled, &spec)?;
    let val = parts.pop().expect("two splits");
    let train = parts.pop().expect("two splits");
    if val.is_empty() {
        let val = train.clone();
        Ok((train, val))
    } else {
        Ok((train, val))
    }
}

/// Supervised pretraining of a backbone on a broad mixture.
///
/// Trains all layers plus a temporary classification head on
/// `pretrain_data`, then discards the head and returns the frozen backbone.
/// The report's accuracy field holds the final training accuracy (there is
/// no validation split or snapshot selection here).
pub fn pretrain_backbone(
    spec: &BackboneSpec,
    pretrain_data: &Dataset,
    settings: &TrainSettings,
    rng: &mut RngStream,
) -> Result<(Backbone, TrainReport)> {
    let labels = require_labeled(pretrain_data, "pretrain")?.to_vec();
    if pretrain_data.class_count != spec.pretrain_classes {
        return Err(Error::Config(format!(
            "pretrain data has {} classes, spec expects {}",
            pretrain_data.class_count, spec.pretrain_classes
        )));
    }
    if pretrain_data.dim() != spec.input_dim {
        return Err(Error::Shape(format!(
            "pretrain data dim {} vs spec input_dim {}",
            pretrain_data.dim(),
            spec.input_dim
        )));
    }

    let mut backbone = Backbone::init(spec, rng);
    let mut head = Head::init(spec.pretrain_classes, spec.feature_dim(), rng);
    let mut state = FullState::new(&backbone, &head);

    let mut final_loss = 0.0;
    for epoch in 0..settings.epochs {
        final_loss = run_full_epoch(
            &mut backbone,
            &mut head,
            &mut state,
            &pretrain_data.features,
            &labels,
            settings,
            epoch,
            rng,
        )?;
    }

    let train_preds: Vec<usize> = head
        .logits(&backbone.forward(&pretrain_data.features))
        .iter_rows()
        .map(Matrix::row_argmax)
        .collect();
    let train_acc = accuracy(&train_preds, &labels)?;

    backbone.set_frozen(true);
    Ok((
        backbone,
        TrainReport {
            epochs_run: settings.epochs,
            best_validation_accuracy: train_acc,
            selected_epoch: settings.epochs,
            final_train_loss: final_loss,
            per_epoch_validation: Vec::new(),
            train_samples: pretrain_data.len(),
            val_samples: 0,
        },
    ))
}

/// Trains only a new head over the frozen backbone; 10% of `labeled` is
/// held out for validation-based snapshot selection.
pub fn train_linear_probe(
    backbone: &Backbone,
    labeled: &Dataset,
    settings: &TrainSettings,
    rng: &mut RngStream,
) -> Result<(ComposedModel, TrainReport)> {
    if !backbone.frozen() {
        return Err(Error::State("linear probing requires a frozen backbone".into()));
    }
    require_labeled(labeled, "linear probe")?;
    if labeled.dim() != backbone.input_dim() {
        return Err(Error::Shape(format!(
            "data dim {} vs backbone input_dim {}",
            labeled.dim(),
            backbone.input_dim()
        )));
    }

    let (train, val) = validation_split(labeled, rng)?;
    let train_y = train.labels_or_err()?.to_vec();
    let val_y = val.labels_or_err()?.to_vec();
    // The backbone is frozen: features are computed once.
    let train_f = backbone.forward(&train.features);
    let val_f = backbone.forward(&val.features);
    let (train_samples, val_samples) = (train.len(), val.len());

    let mut head = Head::init(labeled.class_count, backbone.feature_dim(), rng);
    let mut vel_w = Matrix::zeros(head.weight.rows(), head.weight.cols());
    let mut vel_b = Matrix::zeros(1, head.bias.cols());

    let n = train_f.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, usize, Head)> = None;
    let mut per_epoch = Vec::with_capacity(settings.epochs);
    let mut final_loss = 0.0;

    for epoch in 0..settings.epochs {
        let eh = settings
            .hyper
            .with_learning_rate(lr_at_epoch(&settings.hyper, epoch));
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(settings.batch_size) {
            let fb = train_f.gather_rows(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| train_y[i]).collect();
            let (batch_loss, gw, gb) = head_grads(&head, &fb, &yb)?;
            loss_sum += batch_loss;
            sgd_step(&mut head.weight, &gw, &mut vel_w, &eh)?;
            sgd_step(&mut head.bias, &gb, &mut vel_b, &eh)?;
        }
        final_loss = loss_sum / n as f64;
        if !final_loss.is_finite() {
            return Err(Error::NumericInput(format!(
                "training diverged at epoch {}",
                epoch + 1
            )));
        }

        let preds: Vec<usize> = head
            .logits(&val_f)
            .iter_rows()
            .map(Matrix::row_argmax)
            .collect();
        let acc = accuracy(&preds, &val_y)?;
        per_epoch.push(acc);
        if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
            best = Some((acc, epoch + 1, head.clone()));
        }
    }

    let (best_acc, selected_epoch, best_head) = best.expect("at least one epoch");
    let model = ComposedModel {
        backbone: backbone.clone(),
        head: best_head,
        training_mode: TrainingMode::LinearProbe,
    };
    Ok((
        model,
        TrainReport {
            epochs_run: settings.epochs,
            best_validation_accuracy: best_acc,
            selected_epoch,
            final_train_loss: final_loss,
            per_epoch_validation: per_epoch,
            train_samples,
            val_samples,
        },
    ))
}

/// Fine-tunes backbone and head together, with the same validation-based
/// snapshot selection as the probe recipe.
pub fn full_finetune(
    model: ComposedModel,
    labeled: &Dataset,
    settings: &TrainSettings,
    rng: &mut RngStream,
) -> Result<(ComposedModel, TrainReport)> {
    if model.training_mode != TrainingMode::FullFinetune {
        return Err(Error::State(
            "full_finetune requires a model composed for full fine-tuning".into(),
        ));
    }
    require_labeled(labeled, "full fine-tune")?;
    if labeled.dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "data dim {} vs model input_dim {}",
            labeled.dim(),
            model.input_dim()
        )));
    }
    if labeled.class_count != model.class_count() {
        return Err(Error::Config(format!(
            "data has {} classes, model head has {}",
            labeled.class_count,
            model.class_count()
        )));
    }

    let (train, val) = validation_split(labeled, rng)?;
    let train_y = train.labels_or_err()?.to_vec();
    let val_y = val.labels_or_err()?.to_vec();
    let (train_samples, val_samples) = (train.len(), val.len());

    let ComposedModel {
        mut backbone,
        mut head,
        ..
    } = model;
    let mut state = FullState::new(&backbone, &head);

    let mut best: Option<(f64, usize, Backbone, Head)> = None;
    let mut per_epoch = Vec::with_capacity(settings.epochs);
    let mut final_loss = 0.0;

    for epoch in 0..settings.epochs {
        final_loss = run_full_epoch(
            &mut backbone,
            &mut head,
            &mut state,
            &train.features,
            &train_y,
            settings,
            epoch,
            rng,
        )?;

        let preds: Vec<usize> = head
            .logits(&backbone.forward(&val.features))
            .iter_rows()
            .map(Matrix::row_argmax)
            .collect();
        let acc = accuracy(&preds, &val_y)?;
        per_epoch.push(acc);
        if best.as_ref().is_none_or(|(b, _, _, _)| acc > *b) {
            best = Some((acc, epoch + 1, backbone.clone(), head.clone()));
        }
    }

    let (best_acc, selected_epoch, best_backbone, best_head) =
        best.expect("at least one epoch");
    Ok((
        ComposedModel {
            backbone: best_backbone,
            head: best_head,
            training_mode: TrainingMode::FullFinetune,
        },
        TrainReport {
            epochs_run: settings.epochs,
            best_validation_accuracy: best_acc,
            selected_epoch,
            final_train_loss: final_loss,
            per_epoch_validation: per_epoch,
            train_samples,
            val_samples,
        },
    ))
}

/// Momentum buffers for every tensor of a full network.
struct FullState {
    layer_vel: Vec<(Matrix, Matrix)>,
    head_vel: (Matrix, Matrix),
    order: Vec<usize>,
}

impl FullState {
    fn new(backbone: &Backbone, head: &Head) -> Self {
        let layer_vel = backbone
            .layers
            .iter()
            .map(|l| {
                (
                    Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    Matrix::zeros(1, l.bias.cols()),
                )
            })
            .collect();
        Self {
            layer_vel,
            head_vel: (
                Matrix::zeros(head.weight.rows(), head.weight.cols()),
                Matrix::zeros(1, head.bias.cols()),
            ),
            order: Vec::new(),
        }
    }
}

/// One epoch of minibatch SGD through the whole network. Returns the mean
/// training loss of the epoch.
#[allow(clippy::too_many_arguments)]
fn run_full_epoch(
    backbone: &mut Backbone,
    head: &mut Head,
    state: &mut FullState,
    features: &Matrix,
    labels: &[usize],
    settings: &TrainSettings,
    epoch: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    let n = features.rows();
    if state.order.len() != n {
        state.order = (0..n).collect();
    }
    let eh = settings
        .hyper
        .with_learning_rate(lr_at_epoch(&settings.hyper, epoch));
    rng.shuffle(&mut state.order);

    let mut loss_sum = 0.0;
    let order = state.order.clone();
    for chunk in order.chunks(settings.batch_size) {
        let xb = features.gather_rows(chunk);
        let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        let (batch_loss, layer_grads, head_gw, head_gb) =
            full_grads(backbone, head, &xb, &yb)?;
        loss_sum += batch_loss;

        for (layer, ((gw, gb), (vw, vb))) in backbone
            .layers
            .iter_mut()
            .zip(layer_grads.into_iter().zip(state.layer_vel.iter_mut()))
        {
            sgd_step(&mut layer.weight, &gw, vw, &eh)?;
            sgd_step(&mut layer.bias, &gb, vb, &eh)?;
        }
        sgd_step(&mut head.weight, &head_gw, &mut state.head_vel.0, &eh)?;
        sgd_step(&mut head.bias, &head_gb, &mut state.head_vel.1, &eh)?;
    }

    let mean = loss_sum / n as f64;
    if !mean.is_finite() {
        return Err(Error::NumericInput(format!(
            "training diverged at epoch {}",
            epoch + 1
        )));
    }
    Ok(mean)
}

/// Loss sum plus mean-over-batch gradients for the head alone.
fn head_grads(head: &Head, feats: &Matrix, labels: &[usize]) -> Result<(f64, Matrix, Matrix)> {
    let logits = head.logits(feats);
    let (loss_sum, dlogits) = logit_grads(&logits, labels)?;
    let gw = dlogits.matmul_tn(feats);
    let gb = Matrix::from_vec(1, dlogits.cols(), dlogits.column_sums())?;
    Ok((loss_sum, gw, gb))
}

/// Loss sum plus mean-over-batch gradients for every tensor of the network.
type LayerGrads = Vec<(Matrix, Matrix)>;

fn full_grads(
    backbone: &Backbone,
    head: &Head,
    xb: &Matrix,
    yb: &[usize],
) -> Result<(f64, LayerGrads, Matrix, Matrix)> {
    let acts = backbone.forward_cached(xb);
    let feats = acts.last().expect("at least one layer");
    let logits = head.logits(feats);
    let (loss_sum, dlogits) = logit_grads(&logits, yb)?;

    let head_gw = dlogits.matmul_tn(feats);
    let head_gb = Matrix::from_vec(1, dlogits.cols(), dlogits.column_sums())?;

    let mut delta = dlogits.matmul(&head.weight); // d loss / d feats
    let mut grads_rev = Vec::with_capacity(backbone.layers.len());
    for l in (0..backbone.layers.len()).rev() {
        // tanh'(z) = 1 - a^2, expressed through the cached activations.
        delta.zip_map_inplace(&acts[l], |d, a| d * (1.0 - a * a));
        let prev = if l == 0 { xb } else { &acts[l - 1] };
        let gw = delta.matmul_tn(prev);
        let gb = Matrix::from_vec(1, delta.cols(), delta.column_sums())?;
        grads_rev.push((gw, gb));
        if l > 0 {
            delta = delta.matmul(&backbone.layers[l].weight);
        }
    }
    grads_rev.reverse();
    Ok((loss_sum, grads_rev, head_gw, head_gb))
}

/// Per-row cross-entropy; returns (loss sum, gradient rows scaled by 1/B).
fn logit_grads(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let bsz = logits.rows() as f64;
    let mut dlogits = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss_sum = 0.0;
    for i in 0..logits.rows() {
        let (loss, grad) = cross_entropy_grad(logits.row(i), labels[i])?;
        loss_sum += loss;
        for (j, g) in grad.iter().enumerate() {
            dlogits.set(i, j, g / bsz);
        }
    }
    Ok((loss_sum, dlogits))
}
