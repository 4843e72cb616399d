//! Grid execution: deterministic, cached, and resumable.
//!
//! Backbones are pretrained once per strength tier (keyed by a config
//! fingerprint) and cached on disk, mirroring how every party downloads the
//! same public pretrained weights. The victim task, proxy pool, victim
//! models, and attacks all derive their streams from the replication seed,
//! so a grid cell is a pure function of (config, seed). Cells already
//! present in `results.csv` are skipped; rerunning a finished experiment
//! rewrites identical bytes.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::datagen::{
    choose_task_concepts, load_family, make_task_family, sample_proxy_pool, sample_with_concepts,
    save_family, Dataset, SplitTag, TaskFamily,
};
use crate::error::{Error, Result};
use crate::evalkit::{accuracy, agreement, silhouette};
use crate::experiment::config::ExperimentConfig;
use crate::modelzoo::{
    extract_features, full_finetune, load_backbone, predict, pretrain_backbone, save_backbone,
    train_linear_probe, Backbone, ComposedModel, LabelMode, StrengthTag, TrainingMode,
};
use crate::numcore::RngStream;
use crate::thief::{run_attack, AttackConfig, SelectionStrategy, StrategyKind};
use crate::victim_api::{deploy, InProcessClient};

/// One grid coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellKey {
    pub victim_tag: StrengthTag,
    pub victim_mode: TrainingMode,
    pub thief_tag: StrengthTag,
    pub thief_mode: TrainingMode,
    pub strategy: StrategyKind,
    pub budget: usize,
    pub seed: u64,
}

impl CellKey {
    pub fn id(&self) -> String {
        format!(
            "{}-{}__{}-{}__{}__b{}__s{}",
            self.victim_tag.as_str(),
            self.victim_mode.as_str(),
            self.thief_tag.as_str(),
            self.thief_mode.as_str(),
            self.strategy.as_str(),
            self.budget,
            self.seed
        )
    }
}

/// One (victim, thief, strategy, budget, seed) measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub victim_spec: String,
    pub victim_mode: String,
    pub thief_spec: String,
    pub thief_mode: String,
    pub strategy: String,
    pub budget: usize,
    pub seed: u64,
    pub victim_accuracy: f64,
    pub thief_accuracy: f64,
    pub thief_agreement: f64,
    pub backbone_silhouette: f64,
}

pub const RESULTS_HEADER: &str = "victim_spec,victim_mode,thief_spec,thief_mode,strategy,\
budget,seed,victim_accuracy,thief_accuracy,thief_agreement,backbone_silhouette";

impl ResultRecord {
    fn sort_key(&self) -> (String, String, String, String, String, usize, u64) {
        (
            self.victim_spec.clone(),
            self.victim_mode.clone(),
            self.thief_spec.clone(),
            self.thief_mode.clone(),
            self.strategy.clone(),
            self.budget,
            self.seed,
        )
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            self.victim_spec,
            self.victim_mode,
            self.thief_spec,
            self.thief_mode,
            self.strategy,
            self.budget,
            self.seed,
            self.victim_accuracy,
            self.thief_accuracy,
            self.thief_agreement,
            self.backbone_silhouette
        )
    }

    fn parse_csv_row(line: &str, lineno: usize) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 11 fields, found {}", fields.len()),
            });
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad real {s:?}: {e}"),
            })
        };
        Ok(Self {
            victim_spec: fields[0].into(),
            victim_mode: fields[1].into(),
            thief_spec: fields[2].into(),
            thief_mode: fields[3].into(),
            strategy: fields[4].into(),
            budget: fields[5].parse().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad budget: {e}"),
            })?,
            seed: fields[6].parse().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad seed: {e}"),
            })?,
            victim_accuracy: parse_f(fields[7])?,
            thief_accuracy: parse_f(fields[8])?,
            thief_agreement: parse_f(fields[9])?,
            backbone_silhouette: parse_f(fields[10])?,
        })
    }
}

/// Reads a results file written by [`write_records`].
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == RESULTS_HEADER => {}
        Some((_, other)) => {
            return Err(Error::Format(format!("unexpected results header {other:?}")))
        }
        None => return Err(Error::Format("empty results file".into())),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(idx, l)| ResultRecord::parse_csv_row(l, idx + 1))
        .collect()
}

/// Writes records (sorted canonically) with the standard header.
pub fn write_records(path: impl AsRef<Path>, records: &[ResultRecord]) -> Result<()> {
    let mut sorted: Vec<&ResultRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.sort_key());
    let mut out = String::with_capacity(sorted.len() * 96 + 128);
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for r in sorted {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Outcome of one runner invocation.
#[derive(Debug)]
pub struct RunOutcome {
    /// Every record now present, in canonical order.
    pub records: Vec<ResultRecord>,
    /// Cells that failed this run, as (cell id, error message).
    pub errors: Vec<(String, String)>,
    pub executed: usize,
    pub skipped: usize,
}

/// 16-hex-digit fingerprint of everything a cached artifact depends on.
fn artifact_fingerprint(config: &ExperimentConfig) -> String {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let canon = format!(
        "{:?}|{}|{:?}|{:?}",
        config.family, config.task.noise_sigma, config.pretrain, config.pretrain.samples_per_class
    );
    let mut h = OFFSET;
    for b in canon.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    format!("{h:016x}")
}

/// Loads or regenerates the task family, keeping a cache artifact on disk.
fn family_for(config: &ExperimentConfig, cache_dir: &Path, fp: &str) -> Result<TaskFamily> {
    let path = cache_dir.join(format!("family_{fp}.xlab"));
    if path.exists() {
        if let Ok(family) = load_family(&path) {
            if family.seed() == config.family.seed
                && family.input_dim() == config.family.input_dim
                && family.concepts() == config.family.concepts
                && family.scale() == config.family.scale
            {
                return Ok(family);
            }
        }
    }
    let family = make_task_family(
        config.family.seed,
        config.family.input_dim,
        config.family.concepts,
        config.family.scale,
    )?;
    save_family(&family, &path)?;
    Ok(family)
}

/// Loads or pretrains the backbone for one strength tier.
fn backbone_for(
    config: &ExperimentConfig,
    family: &TaskFamily,
    tag: StrengthTag,
    cache_dir: &Path,
    fp: &str,
) -> Result<Backbone> {
    let path = cache_dir.join(format!("backbone_{}_{fp}.xlab", tag.as_str()));
    if path.exists() {
        if let Ok(backbone) = load_backbone(&path) {
            if backbone.spec() == &config.backbone_spec(tag) && backbone.frozen() {
                return Ok(backbone);
            }
        }
    }
    let spec = config.backbone_spec(tag);
    // Nested pretraining mixtures: tier k uses the first k family concepts,
    // so stronger tiers strictly extend weaker ones.
    let concepts: Vec<usize> = (0..spec.pretrain_classes).collect();
    let data_seed = RngStream::new(config.pretrain.seed)
        .derive(&format!("pretrain-data/{}", tag.as_str()))
        .seed();
    let data = sample_with_concepts(
        family,
        &concepts,
        config.task.noise_sigma,
        config.pretrain.samples_per_class,
        data_seed,
        SplitTag::Train,
    )?;
    let mut rng = RngStream::new(config.pretrain.seed).derive(&format!("pretrain/{}", tag.as_str()));
    let settings = config.pretrain.recipe.to_settings()?;
    let (backbone, _) = pretrain_backbone(&spec, &data, &settings, &mut rng)?;
    save_backbone(&backbone, &path)?;
    Ok(backbone)
}

/// Per-seed task artifacts: the victim's train/test draws, the chosen
/// concepts, and the attacker's proxy pool.
pub struct PreparedSeed {
    pub concepts: Vec<usize>,
    pub train: Dataset,
    pub test: Dataset,
    pub pool: Dataset,
}

/// Regenerates the deterministic per-seed artifacts for a config.
pub fn prepare_seed(config: &ExperimentConfig, family: &TaskFamily, seed: u64) -> Result<PreparedSeed> {
    let base = RngStream::new(seed);
    let concepts = choose_task_concepts(family, config.task.classes, base.derive("task").seed())?;
    let train = sample_with_concepts(
        family,
        &concepts,
        config.task.noise_sigma,
        config.task.train_per_class,
        base.derive("task-train-noise").seed(),
        SplitTag::Train,
    )?;
    let test = sample_with_concepts(
        family,
        &concepts,
        config.task.noise_sigma,
        config.task.test_per_class,
        base.derive("task-test-noise").seed(),
        SplitTag::Test,
    )?;
    let pool = sample_proxy_pool(
        family,
        &concepts,
        config.pool.size,
        config.pool.overlap,
        config.task.noise_sigma,
        base.derive("pool").seed(),
    )?
    .data;
    Ok(PreparedSeed {
        concepts,
        train,
        test,
        pool,
    })
}

/// Loads or regenerates the family for a config, caching under `cache_dir`.
pub fn prepare_family(config: &ExperimentConfig, cache_dir: &Path) -> Result<TaskFamily> {
    std::fs::create_dir_all(cache_dir)?;
    family_for(config, cache_dir, &artifact_fingerprint(config))
}

/// Loads or pretrains one backbone tier, caching under `cache_dir`.
pub fn prepare_backbone(
    config: &ExperimentConfig,
    family: &TaskFamily,
    tag: StrengthTag,
    cache_dir: &Path,
) -> Result<Backbone> {
    std::fs::create_dir_all(cache_dir)?;
    backbone_for(config, family, tag, cache_dir, &artifact_fingerprint(config))
}

struct VictimArtifacts {
    model: Arc<ComposedModel>,
    accuracy: f64,
    test_preds: Vec<usize>,
}

fn train_victim(
    config: &ExperimentConfig,
    backbone: &Backbone,
    arts: &PreparedSeed,
    tag: StrengthTag,
    mode: TrainingMode,
    seed: u64,
) -> Result<VictimArtifacts> {
    let mut rng = RngStream::new(seed).derive(&format!("victim/{}-{}", tag.as_str(), mode.as_str()));
    let settings = config.victim_train.to_settings()?;
    let (model, _report) = match mode {
        TrainingMode::LinearProbe => {
            train_linear_probe(backbone, &arts.train, &settings, &mut rng)?
        }
        TrainingMode::FullFinetune => {
            let composed = ComposedModel::compose(
                backbone,
                config.task.classes,
                TrainingMode::FullFinetune,
                &mut rng,
            )?;
            full_finetune(composed, &arts.train, &settings, &mut rng)?
        }
    };
    let test_preds = predict(&model, &arts.test.features, LabelMode::Hard)?.expect_hard();
    let accuracy = accuracy(&test_preds, arts.test.labels_or_err()?)?;
    Ok(VictimArtifacts {
        model: Arc::new(model),
        accuracy,
        test_preds,
    })
}

fn strategy_for(kind: StrategyKind, budget: usize, active_rounds: usize) -> Result<SelectionStrategy> {
    match kind {
        StrategyKind::Random => SelectionStrategy::random(budget),
        _ => SelectionStrategy::active(kind, active_rounds.min(budget), budget),
    }
}

/// Runs every missing grid cell and rewrites `results.csv` canonically.
/// Cell failures are recorded in `errors.csv` and do not stop the run.
pub fn run_experiment(config: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<RunOutcome> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    let cache_dir = out_dir.join("cache");
    let transcripts_dir = out_dir.join("transcripts");
    std::fs::create_dir_all(&cache_dir)?;
    std::fs::create_dir_all(&transcripts_dir)?;

    let fp = artifact_fingerprint(config);
    let family = family_for(config, &cache_dir, &fp)?;

    // All strength tiers that appear anywhere in the grid.
    let mut tags: Vec<StrengthTag> = Vec::new();
    for slot in config.victims.iter().chain(&config.thieves) {
        let (tag, _) = slot.resolve()?;
        if !tags.contains(&tag) {
            tags.push(tag);
        }
    }
    let mut backbones: HashMap<StrengthTag, Arc<Backbone>> = HashMap::new();
    for &tag in &tags {
        backbones.insert(
            tag,
            Arc::new(backbone_for(config, &family, tag, &cache_dir, &fp)?),
        );
    }

    let results_path = out_dir.join("results.csv");
    let mut existing: HashMap<(String, String, String, String, String, usize, u64), ResultRecord> =
        HashMap::new();
    if results_path.exists() {
        for r in read_records(&results_path)? {
            existing.insert(r.sort_key(), r);
        }
    }

    // Canonical cell enumeration in config order.
    let mut cells: Vec<CellKey> = Vec::new();
    for victim in &config.victims {
        let (victim_tag, victim_mode) = victim.resolve()?;
        for thief in &config.thieves {
            let (thief_tag, thief_mode) = thief.resolve()?;
            for strategy_name in &config.grid.strategies {
                let strategy = StrategyKind::parse(strategy_name)?;
                for &budget in &config.grid.budgets {
                    for &seed in &config.grid.seeds {
                        cells.push(CellKey {
                            victim_tag,
                            victim_mode,
                            thief_tag,
                            thief_mode,
                            strategy,
                            budget,
                            seed,
                        });
                    }
                }
            }
        }
    }

    let thief_settings = config.thief_train.to_settings()?;
    let kcenter_space = config.kcenter_space()?;

    let mut seed_cache: HashMap<u64, Arc<PreparedSeed>> = HashMap::new();
    let mut victim_cache: HashMap<(StrengthTag, TrainingMode, u64), Arc<VictimArtifacts>> =
        HashMap::new();
    let mut silhouette_cache: HashMap<(StrengthTag, u64), f64> = HashMap::new();

    let mut errors: Vec<(String, String)> = Vec::new();
    let mut timings = String::new();
    let (mut executed, mut skipped) = (0usize, 0usize);

    for cell in &cells {
        let key = (
            cell.victim_tag.as_str().to_string(),
            cell.victim_mode.as_str().to_string(),
            cell.thief_tag.as_str().to_string(),
            cell.thief_mode.as_str().to_string(),
            cell.strategy.as_str().to_string(),
            cell.budget,
            cell.seed,
        );
        if existing.contains_key(&key) {
            skipped += 1;
            continue;
        }

        let started = Instant::now();
        let outcome = (|| -> Result<ResultRecord> {
            let arts = match seed_cache.get(&cell.seed) {
                Some(a) => Arc::clone(a),
                None => {
                    let a = Arc::new(prepare_seed(config, &family, cell.seed)?);
                    seed_cache.insert(cell.seed, Arc::clone(&a));
                    a
                }
            };
            let victim_key = (cell.victim_tag, cell.victim_mode, cell.seed);
            let victim = match victim_cache.get(&victim_key) {
                Some(v) => Arc::clone(v),
                None => {
                    let v = Arc::new(train_victim(
                        config,
                        &backbones[&cell.victim_tag],
                        &arts,
                        cell.victim_tag,
                        cell.victim_mode,
                        cell.seed,
                    )?);
                    victim_cache.insert(victim_key, Arc::clone(&v));
                    v
                }
            };

            let sil_key = (cell.victim_tag, cell.seed);
            let backbone_silhouette = match silhouette_cache.get(&sil_key) {
                Some(&s) => s,
                None => {
                    // Separability of the pretrained backbone's features on
                    // the victim test set (the frozen artifact both parties
                    // can download, not the fine-tuned copy).
                    let feats =
                        extract_features(&backbones[&cell.victim_tag], &arts.test.features)?;
                    let s = silhouette(&feats, arts.test.labels_or_err()?)?;
                    silhouette_cache.insert(sil_key, s);
                    s
                }
            };

            let endpoint = Arc::new(deploy(
                (*victim.model).clone(),
                LabelMode::Hard,
                cell.budget as u64,
            ));
            let client = InProcessClient::new(Arc::clone(&endpoint));
            let attack_config = AttackConfig {
                budget: cell.budget,
                strategy: strategy_for(cell.strategy, cell.budget, config.grid.active_rounds)?,
                thief_mode: cell.thief_mode,
                train: thief_settings,
                kcenter_space,
                seed: RngStream::new(cell.seed)
                    .derive(&format!("attack/{}", cell.id()))
                    .seed(),
            };
            let (substitute, transcript) = run_attack(
                &attack_config,
                &backbones[&cell.thief_tag],
                &client,
                &arts.pool,
            )?;
            transcript.save_csv(transcripts_dir.join(format!("{}.csv", cell.id())))?;

            let thief_preds =
                predict(&substitute, &arts.test.features, LabelMode::Hard)?.expect_hard();
            let thief_accuracy = accuracy(&thief_preds, arts.test.labels_or_err()?)?;
            let thief_agreement = agreement(&thief_preds, &victim.test_preds)?;

            Ok(ResultRecord {
                victim_spec: cell.victim_tag.as_str().into(),
                victim_mode: cell.victim_mode.as_str().into(),
                thief_spec: cell.thief_tag.as_str().into(),
                thief_mode: cell.thief_mode.as_str().into(),
                strategy: cell.strategy.as_str().into(),
                budget: cell.budget,
                seed: cell.seed,
                victim_accuracy: victim.accuracy,
                thief_accuracy,
                thief_agreement,
                backbone_silhouette,
            })
        })();

        let _ = writeln!(
            timings,
            "{},{:.3}",
            cell.id(),
            started.elapsed().as_secs_f64()
        );
        match outcome {
            Ok(record) => {
                executed += 1;
                existing.insert(record.sort_key(), record);
            }
            Err(e) => errors.push((cell.id(), e.to_string())),
        }
    }

    let mut records: Vec<ResultRecord> = existing.into_values().collect();
    records.sort_by_key(|r| r.sort_key());
    write_records(&results_path, &records)?;

    // Wall-clock sidecar: intentionally outside results.csv, which must be
    // byte-identical across reruns.
    if !timings.is_empty() {
        use std::io::Write as _;
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(out_dir.join("timings.csv"))?;
        f.write_all(timings.as_bytes())?;
    }

    let errors_path = out_dir.join("errors.csv");
    if errors.is_empty() {
        let _ = std::fs::remove_file(&errors_path);
    } else {
        let mut out = String::from("cell,error\n");
        for (cell, msg) in &errors {
            let _ = writeln!(out, "{},{}", cell, msg.replace(',', ";").replace('\n', " "));
        }
        std::fs::write(&errors_path, out)?;
    }

    Ok(RunOutcome {
        records,
        errors,
        executed,
        skipped,
    })
}

/// One attack per budget against the same victims: the grid with the
/// budget axis replaced. Budgets must be strictly ascending.
pub fn sweep_budget(
    config: &ExperimentConfig,
    budgets: &[usize],
    out_dir: impl AsRef<Path>,
) -> Result<RunOutcome> {
    if budgets.is_empty() || budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("budgets must be strictly ascending".into()));
    }
    run_experiment(&config.with_budgets(budgets.to_vec()), out_dir)
}
