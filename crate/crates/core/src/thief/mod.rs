//! The attacker: query selection under budget and substitute training.

mod attack;
mod selection;

pub use attack::{
    run_attack, AttackConfig, AttackTranscript, KCenterSpace, SelectionStrategy, StrategyKind,
};
pub use selection::{select_entropy, select_kcenter, select_random, SoftPredictor};
