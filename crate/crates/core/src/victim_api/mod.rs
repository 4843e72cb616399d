//! Deployed black-box endpoints with atomic query budgets.
//!
//! A [`VictimEndpoint`] wraps a trained model behind the narrow surface a
//! real prediction API exposes: predictions in the configured label mode,
//! class count, input dimension, and remaining budget. Budget accounting is
//! per sample and reserved atomically before inference, so concurrent
//! callers can never oversell the budget, and a rejected batch leaves the
//! ledger untouched.

mod client;
mod server;

pub use client::{HttpClient, InProcessClient, VictimClient};
pub use server::{serve, ServerHandle};

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modelzoo::{predict, ComposedModel, LabelMode, Prediction};
use crate::numcore::Matrix;

/// Sample-granular query ledger. `budget == 0` means unlimited.
#[derive(Debug)]
pub struct QueryLedger {
    budget: u64,
    spent: AtomicU64,
}

impl QueryLedger {
    fn new(budget: u64) -> Self {
        Self {
            budget,
            spent: AtomicU64::new(0),
        }
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn spent(&self) -> u64 {
        self.spent.load(Ordering::Acquire)
    }

    /// Remaining samples, or `None` when unlimited.
    pub fn remaining(&self) -> Option<u64> {
        if self.budget == 0 {
            None
        } else {
            Some(self.budget - self.spent())
        }
    }

    /// Atomically checks and reserves `n` samples. On rejection the ledger
    /// is unchanged and the current remaining count is reported.
    fn try_reserve(&self, n: u64) -> Result<()> {
        if self.budget == 0 {
            self.spent.fetch_add(n, Ordering::AcqRel);
            return Ok(());
        }
        let mut current = self.spent.load(Ordering::Acquire);
        loop {
            if current + n > self.budget {
                return Err(Error::BudgetExhausted {
                    remaining: self.budget - current,
                });
            }
            match self.spent.compare_exchange(
                current,
                current + n,
                Ordering::AcqRel,
                Ordering::Acquire,
            ) {
                Ok(_) => return Ok(()),
                Err(actual) => current = actual,
            }
        }
    }
}

/// Public metadata of an endpoint; exactly what the wire protocol exposes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointInfo {
    pub num_classes: usize,
    pub input_dim: usize,
    pub label_mode: LabelMode,
    pub remaining_budget: Option<u64>,
}

/// A deployed model. Weights are immutable while deployed and are never
/// reachable through any endpoint operation.
#[derive(Debug)]
pub struct VictimEndpoint {
    model: ComposedModel,
    label_mode: LabelMode,
    ledger: QueryLedger,
    endpoint_id: String,
}

static NEXT_ENDPOINT: AtomicU64 = AtomicU64::new(0);

/// Deploys a trained model as a black box with the given label mode and
/// sample budget (0 = unlimited).
pub fn deploy(model: ComposedModel, label_mode: LabelMode, budget: u64) -> VictimEndpoint {
    let id = NEXT_ENDPOINT.fetch_add(1, Ordering::Relaxed);
    VictimEndpoint {
        model,
        label_mode,
        ledger: QueryLedger::new(budget),
        endpoint_id: format!("endpoint-{id}"),
    }
}

impl VictimEndpoint {
    pub fn endpoint_id(&self) -> &str {
        &self.endpoint_id
    }

    pub fn label_mode(&self) -> LabelMode {
        self.label_mode
    }

    pub fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }

    pub fn info(&self) -> EndpointInfo {
        EndpointInfo {
            num_classes: self.model.class_count(),
            input_dim: self.model.input_dim(),
            label_mode: self.label_mode,
            remaining_budget: self.ledger.remaining(),
        }
    }

    /// Answers a batch. Dimension problems are rejected before any budget
    /// charge; a batch that would exceed the budget is rejected whole.
    pub fn query(&self, batch: &Matrix) -> Result<Prediction> {
        if batch.rows() == 0 {
            return Err(Error::Shape("empty query batch".into()));
        }
        if batch.cols() != self.model.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, endpoint expects {}",
                batch.cols(),
                self.model.input_dim()
            )));
        }
        self.ledger.try_reserve(batch.rows() as u64)?;
        predict(&self.model, batch, self.label_mode)
    }
}
