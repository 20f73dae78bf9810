//! Aggregate queries over local data, attribution of contributing sources,
//! fee settlement and private-side feature extraction.

mod engine;
mod features;
mod fsum;
mod query;

pub use engine::{
    compute, settlement_entries, split_fee, Computed, MindEngine, MindError, MindPolicy,
    BASIS_POINTS, DEFAULT_K_MIN,
};
pub use features::{derived_id, extract_features};
pub use fsum::{fsum, ExactSum};
pub use query::{Aggregate, Insight, MindQuery, QueryResult, Scalar};
