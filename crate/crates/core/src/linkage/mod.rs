//! Cohort linkage: parse a de-identified cohort file, attach catalog values
//! per row, and package the result.
//!
//! Every selection entry is validated before the first row is touched.
//! Rows are never dropped or reordered; each (row, dataset) pair gets exactly
//! one [`LinkStatus`].

mod cohort;
mod engine;
mod output;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::CatalogError;
use crate::geo::GeoLevel;
use crate::spatial::{Crosswalk, SpatialIndex};

pub use cohort::{parse_cohort, Cohort, Detection, KeyMode, KeySpec};
pub use engine::{link, validate_selection, LinkOptions, LinkedTable};
pub use output::{link_archive, write_output, DICTIONARY_ENTRY, LINKED_ENTRY, SUMMARY_ENTRY};

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("EmptyFile: the cohort has no data rows")]
    EmptyFile,
    #[error("NoKeyColumns: no FIPS column and no longitude/latitude pair found in {0:?}")]
    NoKeyColumns(Vec<String>),
    #[error("AmbiguousKeys: both a FIPS column ({fips}) and coordinates ({lon}, {lat}) are present; declare the key mode")]
    AmbiguousKeys { fips: String, lon: String, lat: String },
    #[error("MissingKeyColumn: declared column {0:?} is not in the header")]
    MissingKeyColumn(String),
    #[error("MultipleCsvInZip: the archive holds {0} CSV entries, expected one")]
    MultipleCsvInZip(usize),
    #[error("NoCsvInZip: the archive holds no CSV entry")]
    NoCsvInZip,
    #[error("MalformedCohort: {0}")]
    MalformedCohort(String),
    #[error("EmptySelection: select at least one dataset")]
    EmptySelection,
    #[error("DuplicateSelection: dataset {0} is selected more than once")]
    DuplicateSelection(String),
    #[error("UnknownDatasetYear: {dataset} has no values for {year}")]
    UnknownDatasetYear { dataset: String, year: i32 },
    #[error("UnknownVariable: {dataset}.{name}")]
    UnknownVariable { dataset: String, name: String },
    #[error("PointScaleDataset: {0} is published at monitor points; point-keyed linkage is not supported")]
    PointScaleDataset(String),
    #[error("IncompatibleScale: {dataset} is {scale}-scale and cannot be derived from {key} keys")]
    IncompatibleScale { dataset: String, scale: GeoLevel, key: GeoLevel },
    #[error("MissingCrosswalk: {dataset} needs a {from} to {to} crosswalk")]
    MissingCrosswalk { dataset: String, from: GeoLevel, to: GeoLevel },
    #[error("MissingIndex: coordinate cohorts need a loaded boundary index")]
    MissingIndex,
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("output: {0}")]
    Output(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LinkStatus {
    Matched,
    NoDataForGeo,
    UnmatchedGeometry,
    BadKey,
}

impl LinkStatus {
    pub const ALL: [LinkStatus; 4] =
        [LinkStatus::Matched, LinkStatus::NoDataForGeo, LinkStatus::UnmatchedGeometry, LinkStatus::BadKey];

    pub const fn as_str(self) -> &'static str {
        match self {
            LinkStatus::Matched => "MATCHED",
            LinkStatus::NoDataForGeo => "NO_DATA_FOR_GEO",
            LinkStatus::UnmatchedGeometry => "UNMATCHED_GEOMETRY",
            LinkStatus::BadKey => "BAD_KEY",
        }
    }
}

impl fmt::Display for LinkStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Variable subset for one selection entry.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum VariableSet {
    #[default]
    All,
    Only(Vec<String>),
}

impl Serialize for VariableSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            VariableSet::All => s.serialize_str("ALL"),
            VariableSet::Only(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for VariableSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            List(Vec<String>),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w.eq_ignore_ascii_case("all") => Ok(VariableSet::All),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("variables must be \"ALL\" or a list, got {w:?}"))),
            Raw::List(v) => Ok(VariableSet::Only(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub dataset_id: String,
    pub year: i32,
    #[serde(default)]
    pub variables: VariableSet,
}

impl SelectionEntry {
    pub fn all(dataset_id: impl Into<String>, year: i32) -> Self {
        SelectionEntry { dataset_id: dataset_id.into(), year, variables: VariableSet::All }
    }

    /// Parses `id:year` or `id:year:var1,var2`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let mut parts = s.splitn(3, ':');
        let id = parts.next().unwrap_or("").trim();
        let year = parts.next().ok_or_else(|| format!("{s:?}: expected dataset:year[:vars]"))?;
        let year: i32 = year.trim().parse().map_err(|_| format!("{s:?}: year {year:?} is not an integer"))?;
        if id.is_empty() {
            return Err(format!("{s:?}: empty dataset id"));
        }
        let variables = match parts.next() {
            None => VariableSet::All,
            Some(v) if v.trim().eq_ignore_ascii_case("all") => VariableSet::All,
            Some(v) => VariableSet::Only(v.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()),
        };
        Ok(SelectionEntry { dataset_id: id.to_string(), year, variables })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSelection {
    pub entries: Vec<SelectionEntry>,
}

impl LinkSelection {
    pub fn new(entries: Vec<SelectionEntry>) -> Self {
        LinkSelection { entries }
    }
}

/// Loaded geometry needed by coordinate cohorts and non-hierarchical scales.
#[derive(Debug, Default)]
pub struct ResolverContext {
    pub index: Option<SpatialIndex>,
    crosswalks: HashMap<(GeoLevel, GeoLevel), Crosswalk>,
}

impl ResolverContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_index(index: SpatialIndex) -> Self {
        ResolverContext { index: Some(index), crosswalks: HashMap::new() }
    }

    pub fn add_crosswalk(&mut self, xw: Crosswalk) {
        self.crosswalks.insert((xw.from_level(), xw.to_level()), xw);
    }

    pub fn crosswalk(&self, from: GeoLevel, to: GeoLevel) -> Option<&Crosswalk> {
        self.crosswalks.get(&(from, to))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub matched: usize,
    pub no_data_for_geo: usize,
    pub unmatched_geometry: usize,
    pub bad_key: usize,
}

impl StatusCounts {
    pub fn add(&mut self, s: LinkStatus) {
        *self.slot(s) += 1;
    }

    pub fn get(&self, s: LinkStatus) -> usize {
        match s {
            LinkStatus::Matched => self.matched,
            LinkStatus::NoDataForGeo => self.no_data_for_geo,
            LinkStatus::UnmatchedGeometry => self.unmatched_geometry,
            LinkStatus::BadKey => self.bad_key,
        }
    }

    fn slot(&mut self, s: LinkStatus) -> &mut usize {
        match s {
            LinkStatus::Matched => &mut self.matched,
            LinkStatus::NoDataForGeo => &mut self.no_data_for_geo,
            LinkStatus::UnmatchedGeometry => &mut self.unmatched_geometry,
            LinkStatus::BadKey => &mut self.bad_key,
        }
    }

    pub fn total(&self) -> usize {
        self.matched + self.no_data_for_geo + self.unmatched_geometry + self.bad_key
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset_id: String,
    pub year: i32,
    pub scale: GeoLevel,
    pub variables: usize,
    pub counts: StatusCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSummary {
    pub rows: usize,
    pub key_mode: String,
    pub detection: Detection,
    pub datasets: Vec<DatasetSummary>,
    pub totals: StatusCounts,
    /// Wall time of the join. Not written to summary.json so that archives
    /// stay byte-reproducible.
    #[serde(skip)]
    pub elapsed_ms: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_entry_syntax() {
        assert_eq!(SelectionEntry::parse("svi:2020").unwrap(), SelectionEntry::all("svi", 2020));
        let e = SelectionEntry::parse("svi:2020:A, B").unwrap();
        assert_eq!(e.variables, VariableSet::Only(vec!["A".into(), "B".into()]));
        assert!(SelectionEntry::parse("svi").is_err());
        assert!(SelectionEntry::parse("svi:20x0").is_err());
        let j: SelectionEntry = serde_json::from_str(r#"{"dataset_id":"x","year":1,"variables":"ALL"}"#).unwrap();
        assert_eq!(j.variables, VariableSet::All);
    }

    #[test]
    fn status_strings() {
        let s: Vec<_> = LinkStatus::ALL.iter().map(|s| serde_json::to_string(s).unwrap()).collect();
        assert_eq!(s, ["\"MATCHED\"", "\"NO_DATA_FOR_GEO\"", "\"UNMATCHED_GEOMETRY\"", "\"BAD_KEY\""]);
    }
}
