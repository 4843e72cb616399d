//! Structured experiment configuration (TOML).
//!
//! Every numeric default is overridable from a config file; omitted fields
//! fall back to the defaults below.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modelzoo::{BackboneSpec, StrengthTag, TrainSettings, TrainingMode};
use crate::numcore::SgdHyper;
use crate::thief::{KCenterSpace, StrategyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilySection {
    pub seed: u64,
    pub input_dim: usize,
    pub concepts: usize,
    pub scale: f64,
}

impl Default for FamilySection {
    fn default() -> Self {
        Self {
            seed: 7,
            input_dim: 32,
            concepts: 96,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSection {
    pub classes: usize,
    pub noise_sigma: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            classes: 10,
            noise_sigma: 0.35,
            train_per_class: 100,
            test_per_class: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolSection {
    pub size: usize,
    pub overlap: f64,
}

impl Default for PoolSection {
    fn default() -> Self {
        Self {
            size: 4000,
            overlap: 0.5,
        }
    }
}

/// One optimizer recipe (pretraining, victims, or thieves).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRecipe {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
}

impl TrainRecipe {
    pub fn to_settings(&self) -> Result<TrainSettings> {
        TrainSettings::new(
            SgdHyper::new(
                self.lr,
                self.momentum,
                self.weight_decay,
                self.decay_factor,
                self.decay_every,
            )?,
            self.epochs,
            self.batch_size,
        )
    }
}

impl Default for TrainRecipe {
    fn default() -> Self {
        // Victim recipe; pretrain/thief sections override fields below.
        Self {
            epochs: 100,
            batch_size: 32,
            lr: 0.002,
            momentum: 0.9,
            weight_decay: 5e-4,
            decay_factor: 10.0,
            decay_every: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainSection {
    pub samples_per_class: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub recipe: TrainRecipe,
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self {
            samples_per_class: 50,
            seed: 11,
            recipe: TrainRecipe {
                epochs: 60,
                batch_size: 32,
                lr: 0.02,
                momentum: 0.9,
                weight_decay: 1e-4,
                decay_factor: 10.0,
                decay_every: 40,
            },
        }
    }
}

fn default_thief_recipe() -> TrainRecipe {
    TrainRecipe {
        epochs: 100,
        batch_size: 32,
        lr: 0.001,
        momentum: 0.9,
        weight_decay: 5e-4,
        decay_factor: 10.0,
        decay_every: 50,
    }
}

/// One victim or thief slot in the grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSlot {
    pub backbone: String,
    pub mode: String,
}

impl ModelSlot {
    pub fn new(backbone: &str, mode: &str) -> Self {
        Self {
            backbone: backbone.into(),
            mode: mode.into(),
        }
    }

    pub fn resolve(&self) -> Result<(StrengthTag, TrainingMode)> {
        Ok((
            StrengthTag::parse(&self.backbone)?,
            TrainingMode::parse(&self.mode)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSection {
    pub strategies: Vec<String>,
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub active_rounds: usize,
    pub kcenter_space: String,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            strategies: vec!["random".into()],
            budgets: vec![500],
            seeds: vec![1, 2, 3, 4, 5],
            active_rounds: 5,
            kcenter_space: "probability".into(),
        }
    }
}

/// Top-level experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub family: FamilySection,
    pub task: TaskSection,
    pub pool: PoolSection,
    pub pretrain: PretrainSection,
    pub victim_train: TrainRecipe,
    #[serde(default = "default_thief_recipe")]
    pub thief_train: TrainRecipe,
    pub victims: Vec<ModelSlot>,
    pub thieves: Vec<ModelSlot>,
    pub grid: GridSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let victims = ["shallow", "mid", "strong"]
            .iter()
            .flat_map(|b| {
                ["probe", "finetune"]
                    .iter()
                    .map(move |m| ModelSlot::new(b, m))
            })
            .collect();
        let thieves = ["shallow", "mid", "strong"]
            .iter()
            .map(|b| ModelSlot::new(b, "probe"))
            .collect();
        Self {
            family: FamilySection::default(),
            task: TaskSection::default(),
            pool: PoolSection::default(),
            pretrain: PretrainSection::default(),
            victim_train: TrainRecipe::default(),
            thief_train: default_thief_recipe(),
            victims,
            thieves,
            grid: GridSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.seeds.is_empty() {
            return Err(Error::Config("grid needs at least one seed".into()));
        }
        if self.grid.budgets.is_empty() || self.grid.budgets.iter().any(|&b| b < 10) {
            return Err(Error::Config("every budget must be at least 10".into()));
        }
        if self.victims.is_empty() || self.thieves.is_empty() {
            return Err(Error::Config("grid needs victims and thieves".into()));
        }
        if self.task.classes < 2 || self.task.classes > self.family.concepts {
            return Err(Error::Config(format!(
                "task classes {} must be in [2, {}]",
                self.task.classes, self.family.concepts
            )));
        }
        if self.pool.size < *self.grid.budgets.iter().max().expect("non-empty") {
            return Err(Error::Config(format!(
                "pool size {} cannot cover the largest budget",
                self.pool.size
            )));
        }
        for slot in self.victims.iter().chain(&self.thieves) {
            slot.resolve()?;
        }
        for s in &self.grid.strategies {
            StrategyKind::parse(s)?;
        }
        self.kcenter_space()?;
        if self.grid.active_rounds == 0 {
            return Err(Error::Config("active_rounds must be at least 1".into()));
        }
        self.pretrain.recipe.to_settings()?;
        self.victim_train.to_settings()?;
        self.thief_train.to_settings()?;
        // Pretraining mixtures must fit in the family.
        for slot in self.victims.iter().chain(&self.thieves) {
            let (tag, _) = slot.resolve()?;
            let spec = self.backbone_spec(tag);
            if spec.pretrain_classes > self.family.concepts {
                return Err(Error::Config(format!(
                    "{} backbone pretrains on {} concepts but family has {}",
                    tag.as_str(),
                    spec.pretrain_classes,
                    self.family.concepts
                )));
            }
        }
        Ok(())
    }

    pub fn backbone_spec(&self, tag: StrengthTag) -> BackboneSpec {
        BackboneSpec::for_tag(tag, self.family.input_dim, self.pretrain.samples_per_class)
    }

    pub fn kcenter_space(&self) -> Result<KCenterSpace> {
        match self.grid.kcenter_space.as_str() {
            "probability" => Ok(KCenterSpace::Probability),
            "backbone" | "backbone_feature" => Ok(KCenterSpace::BackboneFeature),
            other => Err(Error::Config(format!("unknown kcenter space {other:?}"))),
        }
    }

    /// Copy with the budget axis replaced (for sweeps).
    pub fn with_budgets(&self, budgets: Vec<usize>) -> Self {
        let mut out = self.clone();
        out.grid.budgets = budgets;
        out
    }
}
