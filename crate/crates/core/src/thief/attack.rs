//! The round-based extraction attack.
//!
//! Round 1 always queries a random seed batch. Later rounds select with the
//! configured strategy using the current substitute, and after every round
//! the substitute is retrained from scratch on all labels gathered so far
//! (10% held out for validation). Retraining from scratch keeps transcripts
//! comparable across strategies and deterministic in the attack seed.

use std::collections::HashSet;
use std::path::Path;

use crate::datagen::{Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::modelzoo::{
    extract_features, full_finetune, train_linear_probe, Backbone, ComposedModel, Prediction,
    TrainSettings, TrainingMode,
};
use crate::numcore::{Matrix, RngStream};
use crate::thief::selection::{select_entropy, select_kcenter, SoftPredictor};
use crate::victim_api::VictimClient;

/// Selection strategy family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Random,
    Entropy,
    KCenter,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Entropy => "entropy",
            StrategyKind::KCenter => "kcenter",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(StrategyKind::Random),
            "entropy" => Ok(StrategyKind::Entropy),
            "kcenter" => Ok(StrategyKind::KCenter),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Round structure of an attack. Random selection is single-shot; the
/// active strategies default to 5 equal rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionStrategy {
    pub kind: StrategyKind,
    pub rounds: usize,
    pub per_round: usize,
}

pub const DEFAULT_ACTIVE_ROUNDS: usize = 5;

impl SelectionStrategy {
    pub fn new(kind: StrategyKind, rounds: usize, per_round: usize) -> Result<Self> {
        if rounds == 0 || per_round == 0 {
            return Err(Error::Config("strategy needs rounds and per_round >= 1".into()));
        }
        if kind == StrategyKind::Random && rounds != 1 {
            return Err(Error::Config("random selection is single-round".into()));
        }
        Ok(Self {
            kind,
            rounds,
            per_round,
        })
    }

    /// Single-shot random selection spending the whole budget.
    pub fn random(budget: usize) -> Result<Self> {
        Self::new(StrategyKind::Random, 1, budget)
    }

    /// Round-based strategy over `budget` queries; any remainder beyond
    /// `rounds * floor(budget / rounds)` is folded into the seed round.
    pub fn active(kind: StrategyKind, rounds: usize, budget: usize) -> Result<Self> {
        if budget < rounds {
            return Err(Error::Config(format!(
                "budget {budget} smaller than round count {rounds}"
            )));
        }
        Self::new(kind, rounds, budget / rounds)
    }

    pub fn for_kind(kind: StrategyKind, budget: usize) -> Result<Self> {
        match kind {
            StrategyKind::Random => Self::random(budget),
            _ => Self::active(kind, DEFAULT_ACTIVE_ROUNDS, budget),
        }
    }

    /// Per-round batch sizes for a given budget; the remainder beyond
    /// `rounds * per_round` goes to the first (random seed) round, so the
    /// sizes always sum to `budget`.
    fn round_sizes(&self, budget: usize) -> Vec<usize> {
        let mut sizes = vec![self.per_round; self.rounds];
        sizes[0] += budget - self.rounds * self.per_round;
        sizes
    }

    fn validate_against(&self, budget: usize) -> Result<()> {
        if self.rounds * self.per_round > budget {
            return Err(Error::Config(format!(
                "{} rounds x {} per round exceeds budget {budget}",
                self.rounds, self.per_round
            )));
        }
        Ok(())
    }
}

/// Which feature space greedy k-center measures distances in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KCenterSpace {
    /// The substitute's soft-probability space.
    #[default]
    Probability,
    /// The thief backbone's feature space.
    BackboneFeature,
}

/// Everything that parameterizes one attack run.
#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub budget: usize,
    pub strategy: SelectionStrategy,
    pub thief_mode: TrainingMode,
    pub train: TrainSettings,
    pub kcenter_space: KCenterSpace,
    pub seed: u64,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget < 10 {
            return Err(Error::Config(
                "budget must be at least 10 to leave a validation slice".into(),
            ));
        }
        self.strategy.validate_against(self.budget)
    }
}

/// Full record of one attack: what was asked, what came back, and how the
/// substitute progressed.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackTranscript {
    pub queried_indices: Vec<usize>,
    pub returned_labels: Vec<usize>,
    pub per_round_validation_accuracy: Vec<f64>,
    pub total_spent: usize,
    /// Set when the endpoint ran out of budget mid-attack.
    pub truncated: bool,
    /// Samples actually queried per completed round.
    pub round_sizes: Vec<usize>,
    pub final_train_size: usize,
    pub final_val_size: usize,
}

impl AttackTranscript {
    /// Writes `round,index,label,spent` rows; `spent` is the cumulative
    /// sample count including the row itself.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("round,index,label,spent\n");
        let mut row = 0usize;
        for (round, &size) in self.round_sizes.iter().enumerate() {
            for _ in 0..size {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    round + 1,
                    self.queried_indices[row],
                    self.returned_labels[row],
                    row + 1
                ));
                row += 1;
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Runs one extraction attack against a query client.
///
/// On `budget_exhausted` from the client the attack truncates gracefully:
/// the transcript is flagged and the substitute trained on the labels
/// gathered so far is returned. Any other client error propagates.
pub fn run_attack(
    config: &AttackConfig,
    backbone: &Backbone,
    client: &dyn VictimClient,
    pool: &Dataset,
) -> Result<(ComposedModel, AttackTranscript)> {
    config.validate()?;
    let info = client.info()?;
    if pool.dim() != info.input_dim {
        return Err(Error::Shape(format!(
            "pool dim {} vs endpoint input_dim {}",
            pool.dim(),
            info.input_dim
        )));
    }
    if pool.len() < config.budget {
        return Err(Error::Config(format!(
            "pool of {} cannot cover budget {}",
            pool.len(),
            config.budget
        )));
    }
    if backbone.input_dim() != info.input_dim {
        return Err(Error::Shape(format!(
            "thief backbone input_dim {} vs endpoint input_dim {}",
            backbone.input_dim(),
            info.input_dim
        )));
    }

    let root = RngStream::new(config.seed);
    let mut select_rng = root.derive("selection");

    let sizes = config.strategy.round_sizes(config.budget);
    let mut queried: Vec<usize> = Vec::with_capacity(config.budget);
    let mut labels: Vec<usize> = Vec::with_capacity(config.budget);
    let mut queried_set: HashSet<usize> = HashSet::with_capacity(config.budget);
    let mut substitute: Option<ComposedModel> = None;
    let mut per_round_val = Vec::with_capacity(sizes.len());
    let mut actual_sizes = Vec::with_capacity(sizes.len());
    let mut truncated = false;
    let (mut final_train, mut final_val) = (0usize, 0usize);

    for (round, &size) in sizes.iter().enumerate() {
        let chosen: Vec<usize> = if round == 0 {
            // Seed round: uniform random over the whole pool.
            select_rng.sample_indices(pool.len(), size)
        } else {
            let current = substitute
                .as_ref()
                .ok_or_else(|| Error::State("no substitute trained after seed round".into()))?;
            match config.strategy.kind {
                StrategyKind::Random => {
                    let candidates: Vec<usize> =
                        (0..pool.len()).filter(|i| !queried_set.contains(i)).collect();
                    select_rng
                        .sample_indices(candidates.len(), size)
                        .into_iter()
                        .map(|i| candidates[i])
                        .collect()
                }
                StrategyKind::Entropy => select_entropy(pool, current, size, &queried_set)?,
                StrategyKind::KCenter => {
                    let candidates: Vec<usize> =
                        (0..pool.len()).filter(|i| !queried_set.contains(i)).collect();
                    let (cand_feats, sel_feats) = match config.kcenter_space {
                        KCenterSpace::Probability => (
                            current.soft_probs(&pool.features.gather_rows(&candidates))?,
                            current.soft_probs(&pool.features.gather_rows(&queried))?,
                        ),
                        KCenterSpace::BackboneFeature => (
                            extract_features(backbone, &pool.features.gather_rows(&candidates))?,
                            extract_features(backbone, &pool.features.gather_rows(&queried))?,
                        ),
                    };
                    select_kcenter(&cand_feats, &sel_feats, size)?
                        .into_iter()
                        .map(|i| candidates[i])
                        .collect()
                }
            }
        };

        let batch = pool.features.gather_rows(&chosen);
        let answer = match client.query(&batch) {
            Ok(prediction) => prediction,
            Err(Error::BudgetExhausted { .. }) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let batch_labels: Vec<usize> = match answer {
            Prediction::Hard(l) => l,
            // A diagnostics endpoint in soft mode still yields hard labels
            // for the attack.
            Prediction::Soft(p) => p.iter_rows().map(Matrix::row_argmax).collect(),
        };
        if batch_labels.len() != chosen.len() {
            return Err(Error::Validation(format!(
                "endpoint answered {} labels for {} samples",
                batch_labels.len(),
                chosen.len()
            )));
        }
        if let Some(&bad) = batch_labels.iter().find(|&&l| l >= info.num_classes) {
            return Err(Error::Validation(format!(
                "endpoint label {bad} outside [0, {})",
                info.num_classes
            )));
        }

        queried_set.extend(chosen.iter().copied());
        queried.extend_from_slice(&chosen);
        labels.extend_from_slice(&batch_labels);
        actual_sizes.push(chosen.len());

        // Retrain the substitute from scratch on everything labeled so far.
        let labeled = Dataset::new(
            pool.features.gather_rows(&queried),
            Some(labels.clone()),
            info.num_classes,
            SplitTag::Train,
        )?;
        let mut train_rng = root.derive_indexed("train-round", round as u64);
        let (model, report) = match config.thief_mode {
            TrainingMode::LinearProbe => {
                train_linear_probe(backbone, &labeled, &config.train, &mut train_rng)?
            }
            TrainingMode::FullFinetune => {
                let composed = ComposedModel::compose(
                    backbone,
                    info.num_classes,
                    TrainingMode::FullFinetune,
                    &mut train_rng,
                )?;
                full_finetune(composed, &labeled, &config.train, &mut train_rng)?
            }
        };
        per_round_val.push(report.best_validation_accuracy);
        final_train = report.train_samples;
        final_val = report.val_samples;
        substitute = Some(model);
    }

    let substitute = substitute.ok_or(Error::BudgetExhausted { remaining: 0 })?;
    let transcript = AttackTranscript {
        total_spent: queried.len(),
        queried_indices: queried,
        returned_labels: labels,
        per_round_validation_accuracy: per_round_val,
        truncated,
        round_sizes: actual_sizes,
        final_train_size: final_train,
        final_val_size: final_val,
    };
    Ok((substitute, transcript))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelzoo::{model_to_bytes, BackboneSpec, LabelMode, StrengthTag};
    use crate::numcore::SgdHyper;
    use crate::victim_api::{deploy, InProcessClient};
    use std::sync::Arc;

    fn frozen_backbone(seed: u64) -> Backbone {
        let spec = BackboneSpec::new(3, vec![8, 8], 2, 5, StrengthTag::Shallow).unwrap();
        let mut rng = RngStream::new(seed);
        let mut b = Backbone::init(&spec, &mut rng);
        b.set_frozen(true);
        b
    }

    fn victim_client(classes: usize, budget: u64) -> (Arc<crate::victim_api::VictimEndpoint>, InProcessClient) {
        let spec = BackboneSpec::new(3, vec![6, 6], 2, 5, StrengthTag::Shallow).unwrap();
        let mut rng = RngStream::new(77);
        let mut b = Backbone::init(&spec, &mut rng);
        b.set_frozen(true);
        let model =
            ComposedModel::compose(&b, classes, TrainingMode::LinearProbe, &mut rng).unwrap();
        let ep = Arc::new(deploy(model, LabelMode::Hard, budget));
        let client = InProcessClient::new(Arc::clone(&ep));
        (ep, client)
    }

    fn random_pool(n: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed);
        Dataset::new(
            Matrix::from_vec(n, 3, (0..n * 3).map(|_| rng.normal_f64()).collect()).unwrap(),
            None,
            0,
            SplitTag::Pool,
        )
        .unwrap()
    }

    fn quick_settings() -> TrainSettings {
        TrainSettings::new(SgdHyper::new(0.1, 0.9, 1e-4, 10.0, 30).unwrap(), 8, 16).unwrap()
    }

    fn config(strategy: SelectionStrategy, budget: usize, seed: u64) -> AttackConfig {
        AttackConfig {
            budget,
            strategy,
            thief_mode: TrainingMode::LinearProbe,
            train: quick_settings(),
            kcenter_space: KCenterSpace::Probability,
            seed,
        }
    }

    #[test]
    fn random_attack_spends_exact_budget_with_ninety_ten_split() {
        let (ep, client) = victim_client(4, 0);
        let pool = random_pool(600, 1);
        let backbone = frozen_backbone(2);
        let cfg = config(SelectionStrategy::random(500).unwrap(), 500, 3);
        let (_, transcript) = run_attack(&cfg, &backbone, &client, &pool).unwrap();

        assert_eq!(transcript.total_spent, 500);
        assert_eq!(transcript.queried_indices.len(), 500);
        assert_eq!(transcript.final_train_size, 450);
        assert_eq!(transcript.final_val_size, 50);
        assert!(!transcript.truncated);
        assert_eq!(ep.ledger().spent(), 500);
    }

    #[test]
    fn no_index_is_queried_twice_and_accounting_matches_ledger() {
        let (ep, client) = victim_client(3, 0);
        let pool = random_pool(200, 4);
        let backbone = frozen_backbone(5);
        let strategy = SelectionStrategy::active(StrategyKind::Entropy, 5, 100).unwrap();
        let cfg = config(strategy, 100, 6);
        let (_, transcript) = run_attack(&cfg, &backbone, &client, &pool).unwrap();

        let mut sorted = transcript.queried_indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 100, "duplicate pool indices queried");
        assert_eq!(transcript.total_spent as u64, ep.ledger().spent());
        assert_eq!(transcript.per_round_validation_accuracy.len(), 5);
        assert_eq!(transcript.round_sizes, vec![20; 5]);
    }

    #[test]
    fn transcripts_are_deterministic_in_the_seed() {
        let pool = random_pool(150, 7);
        let backbone = frozen_backbone(8);
        let run = |seed: u64| {
            let (_, client) = victim_client(3, 0);
            let strategy = SelectionStrategy::active(StrategyKind::KCenter, 4, 80).unwrap();
            let cfg = config(strategy, 80, seed);
            run_attack(&cfg, &backbone, &client, &pool).unwrap()
        };
        let (m1, t1) = run(9);
        let (m2, t2) = run(9);
        assert_eq!(t1, t2);
        assert_eq!(model_to_bytes(&m1), model_to_bytes(&m2));
        let (_, t3) = run(10);
        assert_ne!(t1.queried_indices, t3.queried_indices);
    }

    #[test]
    fn single_round_active_strategy_equals_pure_random_attack() {
        let pool = random_pool(120, 11);
        let backbone = frozen_backbone(12);
        let run = |strategy: SelectionStrategy| {
            let (_, client) = victim_client(3, 0);
            let cfg = config(strategy, 60, 13);
            run_attack(&cfg, &backbone, &client, &pool).unwrap()
        };
        let (m_random, t_random) = run(SelectionStrategy::random(60).unwrap());
        let (m_entropy, t_entropy) =
            run(SelectionStrategy::new(StrategyKind::Entropy, 1, 60).unwrap());
        assert_eq!(t_random, t_entropy);
        assert_eq!(model_to_bytes(&m_random), model_to_bytes(&m_entropy));
    }

    #[test]
    fn endpoint_exhaustion_truncates_gracefully() {
        // Victim allows only 25 samples; the thief plans 5 rounds of 10.
        let (ep, client) = victim_client(3, 25);
        let pool = random_pool(100, 14);
        let backbone = frozen_backbone(15);
        let strategy = SelectionStrategy::active(StrategyKind::Entropy, 5, 50).unwrap();
        let cfg = config(strategy, 50, 16);
        let (model, transcript) = run_attack(&cfg, &backbone, &client, &pool).unwrap();

        assert!(transcript.truncated);
        assert_eq!(transcript.total_spent, 20);
        assert_eq!(transcript.round_sizes, vec![10, 10]);
        assert_eq!(ep.ledger().spent(), 20);
        assert_eq!(model.class_count(), 3);
    }

    #[test]
    fn exhaustion_before_any_label_is_an_error() {
        let (_, client) = victim_client(3, 5);
        let pool = random_pool(100, 17);
        let backbone = frozen_backbone(18);
        let cfg = config(SelectionStrategy::random(50).unwrap(), 50, 19);
        assert!(matches!(
            run_attack(&cfg, &backbone, &client, &pool),
            Err(Error::BudgetExhausted { .. })
        ));
    }

    #[test]
    fn pool_must_cover_budget() {
        let (_, client) = victim_client(3, 0);
        let pool = random_pool(30, 20);
        let backbone = frozen_backbone(21);
        let cfg = config(SelectionStrategy::random(50).unwrap(), 50, 22);
        assert!(matches!(
            run_attack(&cfg, &backbone, &client, &pool),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn config_invariants_are_enforced() {
        assert!(SelectionStrategy::new(StrategyKind::Random, 2, 10).is_err());
        assert!(SelectionStrategy::new(StrategyKind::Entropy, 0, 10).is_err());
        let cfg = config(SelectionStrategy::random(5).unwrap(), 5, 23);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mismatched = config(
            SelectionStrategy::new(StrategyKind::Entropy, 5, 30).unwrap(),
            100,
            24,
        );
        assert!(matches!(mismatched.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn transcript_csv_has_one_row_per_query() {
        let (_, client) = victim_client(3, 0);
        let pool = random_pool(60, 25);
        let backbone = frozen_backbone(26);
        let strategy = SelectionStrategy::active(StrategyKind::Entropy, 2, 30).unwrap();
        let cfg = config(strategy, 30, 27);
        let (_, transcript) = run_attack(&cfg, &backbone, &client, &pool).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("transcript.csv");
        transcript.save_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "round,index,label,spent");
        assert_eq!(lines.len(), 31);
        assert!(lines[1].starts_with("1,"));
        assert!(lines[30].ends_with(",30"));
        // Rounds 1 and 2 split the rows 15/15.
        assert!(lines[15].starts_with("1,"));
        assert!(lines[16].starts_with("2,"));
    }
}
