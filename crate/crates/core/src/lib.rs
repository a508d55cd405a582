//! Cohort explanations of local feature importances.
//!
//! Given per-sample importance vectors (e.g. SHAP values) and binary tags
//! describing each sample, this crate partitions the samples into `k` cohorts
//! whose importances are similar and whose members share as many tags as
//! possible. Each cohort is reported with the tags all its members carry and
//! its mean importance vector.
//!
//! Pipeline: [`preprocess`] derives tags, [`solver`] finds the cohorts,
//! [`metrics`] scores them on held-out data, [`selection`] picks `k` by
//! cross-validation and [`repid`] provides a decision-tree baseline.

pub mod bits;
pub mod cli;
pub mod error;
pub mod metrics;
pub mod numfmt;
pub mod objective;
pub mod preprocess;
pub mod repid;
pub mod selection;
pub mod solver;
pub mod synthetic;
pub mod types;

pub use bits::TagSet;
pub use error::{Error, Result};
pub use objective::{compactness, derive_tag_sets, descriptiveness};
pub use preprocess::{derive_tags, quantile_edges, Column, FeatureTable};
pub use solver::{solve, SolveMode, SolveResult, SolverOptions};
pub use types::{
    validate_inputs, CohortModel, DescriptorRule, ImportanceMatrix, Partition, TagDerivationConfig,
    TagMatrix, TagRule,
};

pub(crate) fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
