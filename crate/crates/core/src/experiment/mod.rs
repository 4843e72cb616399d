//! Experiment orchestration: configs, the grid runner, reports, and trend
//! checks.

pub mod check;
mod config;
mod report;
mod runner;

pub use config::{
    ExperimentConfig, FamilySection, GridSection, ModelSlot, PoolSection, PretrainSection,
    TaskSection, TrainRecipe,
};
pub use report::{
    plotdata, summarize, write_plotdata, write_summary, PLOTDATA_HEADER, SUMMARY_HEADER,
};
pub use runner::{
    prepare_backbone, prepare_family, prepare_seed, read_records, run_experiment, sweep_budget,
    write_records, CellKey, PreparedSeed, ResultRecord, RunOutcome, RESULTS_HEADER,
};
