//! Dataset registry, variable index and value storage.
//!
//! Layout on disk, one directory per dataset under `<root>/datasets/`:
//!
//! ```text
//! <id>/manifest.json       DatasetDescriptor
//! <id>/variables.csv       name,description,unit,value_kind,concept_code
//! <id>/values/<year>.csv   geo_code,variable,value,quality_flag
//! ```
//!
//! Values are kept as verbatim strings and are immutable once written.

mod store;
mod table;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geo::{GeoKey, GeoLevel};

pub use store::{CatalogFilter, CatalogStore};
pub use table::{WideTable, YearTable};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("DuplicateId: dataset {0:?} is already registered")]
    DuplicateId(String),
    #[error("InvalidDescriptor: {0}")]
    InvalidDescriptor(String),
    #[error("UnknownDataset: {0:?}")]
    UnknownDataset(String),
    #[error("DuplicateVariable: {dataset}.{name}")]
    DuplicateVariable { dataset: String, name: String },
    #[error("UnknownVariable: {dataset}.{name}")]
    UnknownVariable { dataset: String, name: String },
    #[error("LevelMismatch: dataset {dataset} is {scale}-scale, got a {found} key")]
    LevelMismatch { dataset: String, scale: SpatialScale, found: GeoLevel },
    #[error("DuplicateCell: {dataset}.{variable} at {geo} in {year} is already stored")]
    DuplicateCell { dataset: String, variable: String, geo: String, year: i32 },
    #[error("UnknownYear: dataset {dataset} has no values for {year}")]
    UnknownYear { dataset: String, year: i32 },
    #[error("RecordMismatch: {0}")]
    RecordMismatch(String),
    #[error("corrupt catalog file {path}: {message}")]
    Corrupt { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Spatial unit a dataset is published at. Point-scale datasets (monitor
/// locations) are cataloged but carry no geographic key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpatialScale {
    Level(GeoLevel),
    Point,
}

impl SpatialScale {
    pub fn level(self) -> Option<GeoLevel> {
        match self {
            SpatialScale::Level(l) => Some(l),
            SpatialScale::Point => None,
        }
    }
}

impl From<GeoLevel> for SpatialScale {
    fn from(l: GeoLevel) -> Self {
        SpatialScale::Level(l)
    }
}

impl fmt::Display for SpatialScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpatialScale::Level(l) => l.fmt(f),
            SpatialScale::Point => f.write_str("point"),
        }
    }
}

impl FromStr for SpatialScale {
    type Err = crate::geo::GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        if matches!(t.as_str(), "point" | "latitude/longitude" | "lat/lon" | "latlon") {
            return Ok(SpatialScale::Point);
        }
        t.parse().map(SpatialScale::Level)
    }
}

impl Serialize for SpatialScale {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SpatialScale {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "sdoh", alias = "SDoH")]
    SDoH,
    #[serde(rename = "environment", alias = "Environment")]
    Environment,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::SDoH => "sdoh",
            Domain::Environment => "environment",
        })
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sdoh" => Ok(Domain::SDoH),
            "environment" | "env" => Ok(Domain::Environment),
            other => Err(format!("unknown domain {other:?}")),
        }
    }
}

/// Registry row for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub id: String,
    pub display_name: String,
    pub source_org: String,
    pub variable_count: u32,
    pub spatial_scale: SpatialScale,
    pub domain: Domain,
    #[serde(default)]
    pub years: Vec<i32>,
    #[serde(default)]
    pub vintage: String,
    /// Free text; no access control is derived from it.
    #[serde(default)]
    pub access_note: String,
    #[serde(default)]
    pub source_url: String,
}

impl DatasetDescriptor {
    pub fn new(
        id: impl Into<String>,
        display_name: impl Into<String>,
        source_org: impl Into<String>,
        variable_count: u32,
        spatial_scale: impl Into<SpatialScale>,
        domain: Domain,
    ) -> Self {
        DatasetDescriptor {
            id: id.into(),
            display_name: display_name.into(),
            source_org: source_org.into(),
            variable_count,
            spatial_scale: spatial_scale.into(),
            domain,
            years: Vec::new(),
            vintage: String::new(),
            access_note: String::new(),
            source_url: String::new(),
        }
    }

    pub(crate) fn validate(&self) -> Result<(), CatalogError> {
        let valid_id = !self.id.is_empty()
            && self.id.len() <= 64
            && self.id.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
            && !self.id.starts_with(['-', '_']);
        if !valid_id {
            return Err(CatalogError::InvalidDescriptor(format!(
                "id {:?} must be a lowercase slug of [a-z0-9_-]",
                self.id
            )));
        }
        if self.display_name.trim().is_empty() {
            return Err(CatalogError::InvalidDescriptor("display_name is empty".into()));
        }
        if self.source_org.trim().is_empty() {
            return Err(CatalogError::InvalidDescriptor("source_org is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Numeric,
    Categorical,
    Text,
}

impl ValueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::Numeric => "numeric",
            ValueKind::Categorical => "categorical",
            ValueKind::Text => "text",
        }
    }
}

impl FromStr for ValueKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "numeric" => Ok(ValueKind::Numeric),
            "categorical" => Ok(ValueKind::Categorical),
            "text" => Ok(ValueKind::Text),
            other => Err(format!("unknown value kind {other:?}")),
        }
    }
}

/// Variable index row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableDescriptor {
    pub dataset_id: String,
    pub name: String,
    pub description: String,
    pub unit: Option<String>,
    pub value_kind: ValueKind,
    /// Standard-terminology concept code, when mapped.
    pub concept_code: Option<String>,
}

impl VariableDescriptor {
    pub fn new(dataset_id: impl Into<String>, name: impl Into<String>, value_kind: ValueKind) -> Self {
        VariableDescriptor {
            dataset_id: dataset_id.into(),
            name: name.into(),
            description: String::new(),
            unit: None,
            value_kind,
            concept_code: None,
        }
    }
}

/// One stored observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueRecord {
    pub dataset_id: String,
    pub variable_name: String,
    pub geo_key: GeoKey,
    pub year: i32,
    pub value: String,
    pub quality_flag: Option<String>,
}

impl ValueRecord {
    pub fn new(dataset_id: &str, variable_name: &str, geo_key: GeoKey, year: i32, value: impl Into<String>) -> Self {
        ValueRecord {
            dataset_id: dataset_id.to_string(),
            variable_name: variable_name.to_string(),
            geo_key,
            year,
            value: value.into(),
            quality_flag: None,
        }
    }
}
