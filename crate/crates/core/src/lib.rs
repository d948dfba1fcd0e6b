//! Training-free student architecture search.
//!
//! Candidate student networks are built at random initialization, run once on
//! a single batch next to a fixed teacher, and ranked by how closely their
//! class-activation Gram matrices and sample-relation Gram matrices match the
//! teacher's. The crate also provides the three search spaces, a constrained
//! evolutionary search, KD-style distance proxies, the matching distillation
//! losses, and rank-correlation tooling for judging any proxy against a table
//! of trained accuracies.
//!
//! Module map:
//!
//! - [`tensor`]: dense `f64` tensors, inference kernels and seeded initializers.
//! - [`arch`]: architecture descriptors, search spaces, cost accounting and the
//!   network builder.
//! - [`proxy`]: similarity metrics and every training-free score.
//! - [`search`]: evolutionary and random search.
//! - [`rank`]: Kendall / Spearman / Pearson and multi-seed reports.
//! - [`data`]: scoring batches and CSV artifacts.
//! - [`losses`]: distillation losses sharing the proxy kernels.

pub mod arch;
pub mod data;
mod error;
pub mod losses;
pub mod proxy;
pub mod rank;
pub mod rng;
pub mod search;
pub mod tensor;

pub use error::{Error, Result};
