//! Shared domain types: records, datasets, hierarchical seeds, and the
//! signal matrix interchange object.

mod matrix;
mod record;
mod seed;

pub use matrix::{validate_matrix, MatrixKind, SignalMatrix};
pub use record::{Dataset, Record};
pub use seed::{derive_seed, SeedSpec};

pub(crate) use seed::fold_fingerprint as seed_fold;
