//! The synthetic task family: a fixed set of concept centers in input
//! space from which pretraining mixtures, downstream tasks, and proxy
//! pools are all drawn.

use crate::datagen::{Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, RngStream};

/// A shared generative world: `concepts` isotropic Gaussian centers in
/// `input_dim` dimensions.
#[derive(Debug, Clone)]
pub struct TaskFamily {
    input_dim: usize,
    concept_means: Matrix,
    concept_scale: f64,
    family_seed: u64,
}

impl TaskFamily {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn concepts(&self) -> usize {
        self.concept_means.rows()
    }

    pub fn scale(&self) -> f64 {
        self.concept_scale
    }

    pub fn seed(&self) -> u64 {
        self.family_seed
    }

    pub fn mean(&self, concept: usize) -> &[f64] {
        self.concept_means.row(concept)
    }

    pub fn means(&self) -> &Matrix {
        &self.concept_means
    }

    pub(crate) fn from_parts(
        input_dim: usize,
        concept_means: Matrix,
        concept_scale: f64,
        family_seed: u64,
    ) -> Self {
        Self {
            input_dim,
            concept_means,
            concept_scale,
            family_seed,
        }
    }
}

/// Samples a task family: concept means are i.i.d. standard normal per
/// coordinate, scaled by `scale`. Deterministic in `seed`.
pub fn make_task_family(
    seed: u64,
    input_dim: usize,
    concepts: usize,
    scale: f64,
) -> Result<TaskFamily> {
    if concepts < 2 {
        return Err(Error::Config(format!(
            "family needs at least 2 concepts, got {concepts}"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!("scale must be positive, got {scale}")));
    }
    if input_dim == 0 {
        return Err(Error::Config("input_dim must be at least 1".into()));
    }
    let mut rng = RngStream::new(seed).derive("family-means");
    let mut data = Vec::with_capacity(concepts * input_dim);
    for _ in 0..concepts * input_dim {
        data.push(rng.normal_f64() * scale);
    }
    Ok(TaskFamily {
        input_dim,
        concept_means: Matrix::from_vec(concepts, input_dim, data)?,
        concept_scale: scale,
        family_seed: seed,
    })
}

/// Draws `class_count` distinct concepts for a downstream task.
pub fn choose_task_concepts(
    family: &TaskFamily,
    class_count: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if class_count > family.concepts() {
        return Err(Error::Config(format!(
            "task wants {class_count} classes but family has {} concepts",
            family.concepts()
        )));
    }
    if class_count < 2 {
        return Err(Error::Config("a task needs at least 2 classes".into()));
    }
    let mut rng = RngStream::new(seed).derive("task-concepts");
    Ok(rng.sample_indices(family.concepts(), class_count))
}

/// Samples a balanced labeled dataset around previously chosen concepts.
/// Class `k` is an isotropic Gaussian (sigma = `noise_sigma`) around
/// `concepts[k]`; rows are class-major.
pub fn sample_with_concepts(
    family: &TaskFamily,
    concepts: &[usize],
    noise_sigma: f64,
    n_per_class: usize,
    noise_seed: u64,
    tag: SplitTag,
) -> Result<Dataset> {
    if concepts.is_empty() || n_per_class == 0 {
        return Err(Error::Config("empty task draw".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Config(format!(
            "noise_sigma must be nonnegative, got {noise_sigma}"
        )));
    }
    let dim = family.input_dim();
    let mut rng = RngStream::new(noise_seed).derive("task-noise");
    let mut data = Vec::with_capacity(concepts.len() * n_per_class * dim);
    let mut labels = Vec::with_capacity(concepts.len() * n_per_class);
    for (class, &concept) in concepts.iter().enumerate() {
        let mean = family.mean(concept);
        for _ in 0..n_per_class {
            for &m in mean {
                data.push(m + noise_sigma * rng.normal_f64());
            }
            labels.push(class);
        }
    }
    let features = Matrix::from_vec(concepts.len() * n_per_class, dim, data)?;
    Dataset::new(features, Some(labels), concepts.len(), tag)
}

/// Samples a downstream classification task: picks `class_count` distinct
/// concepts (deterministic in `concept_subset_seed`), then draws a balanced
/// labeled dataset around them. Returns the dataset together with the
/// chosen concept indices so proxy pools can overlap them.
pub fn sample_classification_task(
    family: &TaskFamily,
    class_count: usize,
    concept_subset_seed: u64,
    noise_sigma: f64,
    n_per_class: usize,
) -> Result<(Dataset, Vec<usize>)> {
    let concepts = choose_task_concepts(family, class_count, concept_subset_seed)?;
    let data = sample_with_concepts(
        family,
        &concepts,
        noise_sigma,
        n_per_class,
        RngStream::new(concept_subset_seed).derive("task-draw").seed(),
        SplitTag::Train,
    )?;
    Ok((data, concepts))
}

/// An unlabeled query pool with generation provenance.
///
/// `origin_concepts` and `from_victim` record which concept produced each
/// row and whether that concept belongs to the victim task. They exist for
/// diagnostics and tests; attack code must treat the pool as unlabeled.
#[derive(Debug, Clone)]
pub struct ProxyPool {
    pub data: Dataset,
    pub origin_concepts: Vec<usize>,
    pub from_victim: Vec<bool>,
}

/// Samples the attacker's proxy pool. A fraction `overlap` of rows is drawn
/// around concepts used by the victim task, the rest around the family's
/// other concepts. No labels are attached.
pub fn sample_proxy_pool(
    family: &TaskFamily,
    victim_concepts: &[usize],
    pool_size: usize,
    overlap: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<ProxyPool> {
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::Config(format!(
            "overlap must be in [0, 1], got {overlap}"
        )));
    }
    let victim: Vec<usize> = victim_concepts.to_vec();
    let others: Vec<usize> = (0..family.concepts())
        .filter(|c| !victim.contains(c))
        .collect();
    if overlap > 0.0 && victim.is_empty() {
        return Err(Error::Config(
            "overlap > 0 requires victim concepts".into(),
        ));
    }
    if overlap < 1.0 && others.is_empty() {
        return Err(Error::Config(
            "overlap < 1 requires concepts outside the victim task".into(),
        ));
    }

    let dim = family.input_dim();
    let mut pick = RngStream::new(seed).derive("pool-pick");
    let mut noise = RngStream::new(seed).derive("pool-noise");
    let mut data = Vec::with_capacity(pool_size * dim);
    let mut origin_concepts = Vec::with_capacity(pool_size);
    let mut from_victim = Vec::with_capacity(pool_size);
    for _ in 0..pool_size {
        let is_victim = pick.unit_f64() < overlap;
        let concept = if is_victim {
            victim[pick.range_usize(victim.len())]
        } else {
            others[pick.range_usize(others.len())]
        };
        let mean = family.mean(concept);
        for &m in mean {
            data.push(m + noise_sigma * noise.normal_f64());
        }
        origin_concepts.push(concept);
        from_victim.push(is_victim);
    }
    let features = Matrix::from_vec(pool_size, dim, data)?;
    Ok(ProxyPool {
        data: Dataset::new(features, None, 0, SplitTag::Pool)?,
        origin_concepts,
        from_victim,
    })
}
