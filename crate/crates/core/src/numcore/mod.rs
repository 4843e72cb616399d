//! Minimal deterministic dense numerical kernel.
//!
//! Everything runs in f64 with fixed (ascending-index) summation order so
//! that repeated runs produce bit-identical results. There is no threading
//! and no fused reordering inside any public operation.

mod fmt;
mod matrix;
mod ops;
mod rng;

pub use fmt::{format_f64_17, write_f64_17};
pub use matrix::Matrix;
pub use ops::{cross_entropy_grad, lr_at_epoch, sgd_step, softmax, SgdHyper};
pub use rng::RngStream;
