//! xlab: a desk-scale laboratory for studying model-extraction attacks
//! against black-box prediction APIs.
//!
//! The lab trains small frozen feature extractors ("backbones") of varying
//! strength on synthetic Gaussian-mixture tasks, derives downstream victim
//! classifiers from them by linear probing or full fine-tuning, deploys the
//! victims behind a budgeted hard-label prediction API, and runs extraction
//! attacks that train substitute models from queried labels. An evaluation
//! kit measures test accuracy, victim/thief agreement, and representation
//! separability, and an experiment runner sweeps the victim/thief/strategy/
//! budget grid with seeded replication.
//!
//! Modules:
//! - [`numcore`]: dense matrix kernel, seeded RNG streams, softmax and
//!   cross-entropy gradients, SGD with momentum and step-decay schedule.
//! - [`modelzoo`]: backbones, heads, pretraining, linear probing, full
//!   fine-tuning, prediction, and the binary model format.
//! - [`datagen`]: the synthetic task family, dataset sampling, splits, and
//!   the CSV dataset format.
//! - [`victim_api`]: budget-ledgered black-box endpoints, the HTTP server,
//!   and in-process / remote clients with identical semantics.
//! - [`thief`]: query-selection strategies and the attack loop.
//! - [`evalkit`]: accuracy, agreement, silhouette, 2-D projection, and rank
//!   correlation.
//! - [`experiment`]: structured configs, grid runner, budget sweeps, and
//!   report emission.

mod binfmt;

pub mod datagen;
pub mod error;
pub mod evalkit;
pub mod experiment;
pub mod modelzoo;
pub mod numcore;
pub mod thief;
pub mod victim_api;

pub use error::{Error, Result};
pub use numcore::{Matrix, RngStream, SgdHyper};
