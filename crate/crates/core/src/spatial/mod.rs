//! Point-to-geography resolution and crosswalk lookups.

mod crosswalk;
mod index;
mod pip;

use thiserror::Error;

use crate::geo::{GeoError, GeoLevel};

pub use crosswalk::{crosswalk_lookup, Crosswalk, CrosswalkManifest};
pub use index::{
    build_index, build_index_with_capacity, resolve_batch, resolve_batch_with, resolve_point, QueryStats, SpatialIndex,
    DEFAULT_NODE_CAPACITY, INDEX_FILE_NAME,
};
pub use pip::shape_contains;

#[derive(Debug, Error)]
pub enum SpatialError {
    #[error("EmptySet: cannot index an empty boundary layer")]
    EmptySet,
    #[error("LevelMismatch: expected a {expected} key, got {found}")]
    LevelMismatch { expected: GeoLevel, found: GeoLevel },
    #[error("CorruptIndex: {0}")]
    Corrupt(String),
    #[error("crosswalk csv: {0}")]
    Csv(String),
    #[error("crosswalk is missing column {0:?}")]
    MissingColumn(String),
    #[error("crosswalk line {line}: {source}")]
    Key {
        line: usize,
        #[source]
        source: GeoError,
    },
    #[error("crosswalk weight {0} is not a fraction in [0, 1]")]
    BadWeight(String),
    #[error("crosswalk weights for {key} sum to {sum}, expected 1")]
    WeightSum { key: String, sum: f64 },
    #[error("io: {0}")]
    Io(String),
}
