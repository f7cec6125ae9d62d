//! Area-level dataset catalog, census geography resolution and cohort linkage.
//!
//! The crate is organised bottom-up:
//!
//! * [`geo`] typed geographic keys and the state/county/tract hierarchy;
//! * [`boundary`] GeoJSON and shapefile polygon layers;
//! * [`spatial`] the packed bbox tree used for point resolution, plus crosswalks;
//! * [`catalog`] the on-disk dataset registry, variable index and value store;
//! * [`ingest`] the CSV-to-catalog pipeline and the built-in registry seed;
//! * [`linkage`] cohort parsing, the join engine and the output archive.
//!
//! Batch loops accept an [`Execution`]; with the default `parallel` feature
//! they fan out over rayon, otherwise they run sequentially.

pub mod boundary;
pub mod catalog;
pub mod exec;
pub mod geo;
pub mod ingest;
pub mod linkage;
pub mod spatial;

pub use exec::Execution;
pub use geo::{parent, parse_geo_key, GeoError, GeoKey, GeoLevel, LonLat};
