//! Grid-runner behavior on a scaled-down configuration: record counts,
//! resumability, determinism, and cache soundness.

use xlab_core::experiment::{
    prepare_backbone, prepare_family, read_records, run_experiment, sweep_budget,
    ExperimentConfig,
};
use xlab_core::modelzoo::{backbone_to_bytes, StrengthTag};

fn tiny_config() -> ExperimentConfig {
    ExperimentConfig::from_toml(
        r#"
[family]
seed = 3
input_dim = 8
concepts = 30
scale = 1.0

[task]
classes = 3
noise_sigma = 0.5
train_per_class = 15
test_per_class = 10

[pool]
size = 120
overlap = 0.5

[pretrain]
samples_per_class = 10
seed = 11
epochs = 8
batch_size = 16
lr = 0.05
momentum = 0.9
weight_decay = 1e-4
decay_factor = 10.0
decay_every = 5

[victim_train]
epochs = 10
batch_size = 16
lr = 0.05
momentum = 0.9
weight_decay = 5e-4
decay_factor = 10.0
decay_every = 6

[thief_train]
epochs = 8
batch_size = 16
lr = 0.05
momentum = 0.9
weight_decay = 5e-4
decay_factor = 10.0
decay_every = 5

[[victims]]
backbone = "shallow"
mode = "probe"

[[victims]]
backbone = "shallow"
mode = "finetune"

[[thieves]]
backbone = "shallow"
mode = "probe"

[[thieves]]
backbone = "mid"
mode = "probe"

[grid]
strategies = ["random"]
budgets = [20]
seeds = [1, 2, 3]
"#,
    )
    .unwrap()
}

#[test]
fn grid_produces_one_record_per_cell_and_resumes() {
    let config = tiny_config();
    let dir = tempfile::tempdir().unwrap();

    // 2 victims x 2 thieves x 1 strategy x 1 budget x 3 seeds = 12 records.
    let outcome = run_experiment(&config, dir.path()).unwrap();
    assert!(outcome.errors.is_empty(), "{:?}", outcome.errors);
    assert_eq!(outcome.records.len(), 12);
    assert_eq!(outcome.executed, 12);
    assert_eq!(outcome.skipped, 0);

    let results_path = dir.path().join("results.csv");
    let first_bytes = std::fs::read(&results_path).unwrap();
    let parsed = read_records(&results_path).unwrap();
    assert_eq!(parsed.len(), 12);
    for r in &parsed {
        assert!((0.0..=1.0).contains(&r.victim_accuracy));
        assert!((0.0..=1.0).contains(&r.thief_accuracy));
        assert!((0.0..=1.0).contains(&r.thief_agreement));
        assert!((-1.0..=1.0).contains(&r.backbone_silhouette));
    }

    // Rerunning a completed experiment changes no record bytes.
    let again = run_experiment(&config, dir.path()).unwrap();
    assert_eq!(again.executed, 0);
    assert_eq!(again.skipped, 12);
    assert_eq!(std::fs::read(&results_path).unwrap(), first_bytes);

    // Transcripts exist, one per cell.
    let transcripts = std::fs::read_dir(dir.path().join("transcripts")).unwrap().count();
    assert_eq!(transcripts, 12);
}

#[test]
fn identical_configs_produce_byte_identical_results() {
    let config = tiny_config();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_experiment(&config, dir_a.path()).unwrap();
    run_experiment(&config, dir_b.path()).unwrap();
    let a = std::fs::read(dir_a.path().join("results.csv")).unwrap();
    let b = std::fs::read(dir_b.path().join("results.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn cached_backbones_match_fresh_pretraining_bit_for_bit() {
    let config = tiny_config();
    let cache_a = tempfile::tempdir().unwrap();
    let cache_b = tempfile::tempdir().unwrap();

    let family = prepare_family(&config, cache_a.path()).unwrap();
    let fresh = prepare_backbone(&config, &family, StrengthTag::Shallow, cache_a.path()).unwrap();
    // Second call hits the cache file.
    let cached = prepare_backbone(&config, &family, StrengthTag::Shallow, cache_a.path()).unwrap();
    assert_eq!(backbone_to_bytes(&fresh), backbone_to_bytes(&cached));

    // An independent cache dir pretrains from scratch and still agrees.
    let family_b = prepare_family(&config, cache_b.path()).unwrap();
    let independent =
        prepare_backbone(&config, &family_b, StrengthTag::Shallow, cache_b.path()).unwrap();
    assert_eq!(backbone_to_bytes(&fresh), backbone_to_bytes(&independent));
}

#[test]
fn sweep_requires_ascending_budgets_and_multiplies_cells() {
    let config = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    assert!(sweep_budget(&config, &[40, 20], dir.path()).is_err());
    assert!(sweep_budget(&config, &[], dir.path()).is_err());

    let outcome = sweep_budget(&config, &[20, 40], dir.path()).unwrap();
    assert!(outcome.errors.is_empty(), "{:?}", outcome.errors);
    assert_eq!(outcome.records.len(), 24);
}
