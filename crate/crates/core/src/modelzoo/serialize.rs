//! Versioned binary model artifacts.
//!
//! Layout after the shared header: the backbone spec fields, the frozen
//! flag, then every weight array as little-endian f64 in declaration order
//! (layer weight, layer bias, ..., head weight, head bias). Backbone-only
//! artifacts stop after the layers; they back the pretraining cache.

use std::path::Path;

use crate::binfmt::{ArtifactKind, Reader, Writer};
use crate::error::{Error, Result};
use crate::modelzoo::{
    Activation, Backbone, BackboneSpec, ComposedModel, Dense, Head, StrengthTag, TrainingMode,
};
use crate::numcore::Matrix;

fn write_spec(w: &mut Writer, spec: &BackboneSpec) {
    w.u32(spec.input_dim as u32);
    w.u32(spec.hidden_widths.len() as u32);
    for &width in &spec.hidden_widths {
        w.u32(width as u32);
    }
    w.u8(match spec.activation {
        Activation::Tanh => 0,
    });
    w.u32(spec.pretrain_classes as u32);
    w.u32(spec.pretrain_samples_per_class as u32);
    w.u8(match spec.strength {
        StrengthTag::Shallow => 0,
        StrengthTag::Mid => 1,
        StrengthTag::Strong => 2,
    });
}

fn read_spec(r: &mut Reader) -> Result<BackboneSpec> {
    let input_dim = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(Error::Format(format!("implausible layer count {n_layers}")));
    }
    let mut hidden_widths = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        hidden_widths.push(r.u32()? as usize);
    }
    let activation = match r.u8()? {
        0 => Activation::Tanh,
        other => return Err(Error::Format(format!("unknown activation tag {other}"))),
    };
    let pretrain_classes = r.u32()? as usize;
    let pretrain_samples_per_class = r.u32()? as usize;
    let strength = match r.u8()? {
        0 => StrengthTag::Shallow,
        1 => StrengthTag::Mid,
        2 => StrengthTag::Strong,
        other => return Err(Error::Format(format!("unknown strength tag {other}"))),
    };
    let mut spec = BackboneSpec::new(
        input_dim,
        hidden_widths,
        pretrain_classes,
        pretrain_samples_per_class,
        strength,
    )
    .map_err(|e| Error::Format(format!("invalid spec in artifact: {e}")))?;
    spec.activation = activation;
    Ok(spec)
}

fn write_layers(w: &mut Writer, backbone: &Backbone) {
    w.u8(u8::from(backbone.frozen()));
    for layer in &backbone.layers {
        w.f64_slice(layer.weight.as_slice());
        w.f64_slice(layer.bias.as_slice());
    }
}

fn read_layers(r: &mut Reader, spec: &BackboneSpec) -> Result<(Vec<Dense>, bool)> {
    let frozen = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("bad frozen flag {other}"))),
    };
    let mut layers = Vec::with_capacity(spec.hidden_widths.len());
    let mut in_dim = spec.input_dim;
    for &width in &spec.hidden_widths {
        let weight = Matrix::from_vec(width, in_dim, r.f64_vec(width * in_dim)?)
            .map_err(|e| Error::Format(format!("corrupt layer weights: {e}")))?;
        let bias = Matrix::from_vec(1, width, r.f64_vec(width)?)
            .map_err(|e| Error::Format(format!("corrupt layer bias: {e}")))?;
        layers.push(Dense { weight, bias });
        in_dim = width;
    }
    Ok((layers, frozen))
}

/// Serializes a composed model to its artifact bytes.
pub fn model_to_bytes(model: &ComposedModel) -> Vec<u8> {
    let mut w = Writer::new(ArtifactKind::Model);
    w.u8(match model.training_mode {
        TrainingMode::LinearProbe => 0,
        TrainingMode::FullFinetune => 1,
    });
    write_spec(&mut w, model.backbone.spec());
    w.u32(model.head.classes() as u32);
    write_layers(&mut w, &model.backbone);
    w.f64_slice(model.head.weight.as_slice());
    w.f64_slice(model.head.bias.as_slice());
    w.into_bytes()
}

/// Parses a composed model from artifact bytes.
pub fn model_from_bytes(bytes: &[u8]) -> Result<ComposedModel> {
    let mut r = Reader::new(bytes, ArtifactKind::Model)?;
    let training_mode = match r.u8()? {
        0 => TrainingMode::LinearProbe,
        1 => TrainingMode::FullFinetune,
        other => return Err(Error::Format(format!("bad training mode {other}"))),
    };
    let spec = read_spec(&mut r)?;
    let classes = r.u32()? as usize;
    if classes < 2 {
        return Err(Error::Format(format!("implausible class count {classes}")));
    }
    let (layers, frozen) = read_layers(&mut r, &spec)?;
    let feature_dim = spec.feature_dim();
    let weight = Matrix::from_vec(classes, feature_dim, r.f64_vec(classes * feature_dim)?)
        .map_err(|e| Error::Format(format!("corrupt head weights: {e}")))?;
    let bias = Matrix::from_vec(1, classes, r.f64_vec(classes)?)
        .map_err(|e| Error::Format(format!("corrupt head bias: {e}")))?;
    r.finish()?;
    Ok(ComposedModel {
        backbone: Backbone::from_parts(spec, layers, frozen),
        head: Head { weight, bias },
        training_mode,
    })
}

pub fn save_model(model: &ComposedModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ComposedModel> {
    model_from_bytes(&std::fs::read(path)?)
}

/// Serializes a backbone alone (pretraining cache artifact).
pub fn backbone_to_bytes(backbone: &Backbone) -> Vec<u8> {
    let mut w = Writer::new(ArtifactKind::Backbone);
    write_spec(&mut w, backbone.spec());
    write_layers(&mut w, backbone);
    w.into_bytes()
}

pub fn backbone_from_bytes(bytes: &[u8]) -> Result<Backbone> {
    let mut r = Reader::new(bytes, ArtifactKind::Backbone)?;
    let spec = read_spec(&mut r)?;
    let (layers, frozen) = read_layers(&mut r, &spec)?;
    r.finish()?;
    Ok(Backbone::from_parts(spec, layers, frozen))
}

pub fn save_backbone(backbone: &Backbone, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, backbone_to_bytes(backbone))?;
    Ok(())
}

pub fn load_backbone(path: impl AsRef<Path>) -> Result<Backbone> {
    backbone_from_bytes(&std::fs::read(path)?)
}
