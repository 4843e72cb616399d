//! Synthetic task generation, dataset splits, and dataset file I/O.
//!
//! All sampling is driven by purpose-scoped [`RngStream`]s, so the family,
//! task draws, proxy pools, and splits are independently reproducible:
//! changing the proxy pool size never alters a task draw.

mod family;
mod io;

pub use family::{
    choose_task_concepts, make_task_family, sample_classification_task, sample_proxy_pool,
    sample_with_concepts, ProxyPool, TaskFamily,
};
pub use io::{load_dataset, load_family, save_dataset, save_family};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, RngStream};

/// Role of a dataset within an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitTag {
    Train,
    Val,
    Test,
    Pool,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
            SplitTag::Pool => "pool",
        }
    }
}

/// Feature vectors with optional integer labels; the universal sample
/// container.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Option<Vec<usize>>,
    pub class_count: usize,
    pub split_tag: SplitTag,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Option<Vec<usize>>,
        class_count: usize,
        split_tag: SplitTag,
    ) -> Result<Self> {
        if let Some(ls) = &labels {
            if ls.len() != features.rows() {
                return Err(Error::Data(format!(
                    "{} labels for {} feature rows",
                    ls.len(),
                    features.rows()
                )));
            }
            if let Some(&bad) = ls.iter().find(|&&l| l >= class_count) {
                return Err(Error::Validation(format!(
                    "label {bad} outside [0, {class_count})"
                )));
            }
        }
        Ok(Self {
            features,
            labels,
            class_count,
            split_tag,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn with_tag(mut self, tag: SplitTag) -> Self {
        self.split_tag = tag;
        self
    }

    /// Labels slice; errors if the dataset is unlabeled.
    pub fn labels_or_err(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Data("dataset has no labels".into()))
    }

    /// Per-class sample counts (labeled datasets only).
    pub fn label_histogram(&self) -> Result<Vec<usize>> {
        let labels = self.labels_or_err()?;
        let mut hist = vec![0usize; self.class_count];
        for &l in labels {
            hist[l] += 1;
        }
        Ok(hist)
    }

    /// Subset made of the given rows, in order.
    pub fn take_rows(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.gather_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|ls| indices.iter().map(|&i| ls[i]).collect()),
            class_count: self.class_count,
            split_tag: self.split_tag,
        }
    }
}

/// Fractional split specification with a dedicated shuffle seed.
#[derive(Debug, Clone)]
pub struct SplitSpec {
    pub fractions: Vec<f64>,
    pub shuffle_seed: u64,
}

impl SplitSpec {
    pub fn new(fractions: Vec<f64>, shuffle_seed: u64) -> Result<Self> {
        if fractions.is_empty() {
            return Err(Error::Config("split needs at least one fraction".into()));
        }
        if fractions.iter().any(|&f| f < 0.0 || !f.is_finite()) {
            return Err(Error::Config("split fractions must be nonnegative".into()));
        }
        let mut sum = 0.0;
        for &f in &fractions {
            sum += f;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            fractions,
            shuffle_seed,
        })
    }
}

/// Partitions a dataset after a seeded shuffle.
///
/// Split sizes are `floor(n * fraction)` with the remainder assigned to the
/// first split, so the outputs are always disjoint and exhaustive.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Vec<Dataset>> {
    if dataset.is_empty() {
        return Err(Error::Data("cannot split an empty dataset".into()));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    RngStream::new(spec.shuffle_seed)
        .derive("split-shuffle")
        .shuffle(&mut order);

    let mut sizes: Vec<usize> = spec
        .fractions
        .iter()
        .map(|&f| (n as f64 * f).floor() as usize)
        .collect();
    let assigned: usize = sizes.iter().sum();
    sizes[0] += n - assigned;

    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &sz in &sizes {
        out.push(dataset.take_rows(&order[start..start + sz]));
        start += sz;
    }
    Ok(out)
}
