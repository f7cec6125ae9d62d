//! Wide CSV to catalog ingestion.
//!
//! One row per geography, one column per variable. Values are stored as the
//! exact source text; only NA tokens are dropped.

mod table1;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{CatalogError, CatalogStore, DatasetDescriptor, ValueKind, VariableDescriptor};
use crate::geo::{parse_geo_key, GeoKey};

pub use table1::{seed_descriptors, seed_table1_registry};

/// Columns with at most this many distinct non-NA values are categorical.
pub const CATEGORICAL_MAX_DISTINCT: usize = 20;
const MAX_REPORTED_INVALID: usize = 100;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("MissingGeoColumn: no column named {0:?}")]
    MissingGeoColumn(String),
    #[error("MissingYearColumn: no column named {0:?}")]
    MissingYearColumn(String),
    #[error("MissingColumn: included column {0:?} is not in the file")]
    MissingColumn(String),
    #[error("HeaderlessCsv: the file has no header row")]
    HeaderlessCsv,
    #[error("AllRowsInvalid: none of {rows} rows carried a valid key and year")]
    AllRowsInvalid { rows: usize },
    #[error("InvalidManifest: {0}")]
    InvalidManifest(String),
    #[error("PointScale: dataset {0} is point-scale and has no geographic key to ingest by")]
    PointScale(String),
    #[error("DuplicateGeoRow: {geo} appears more than once for {year}")]
    DuplicateGeoRow { geo: String, year: i32 },
    #[error("VariableCountMismatch: descriptor declares {declared} variables, file provides {found}")]
    VariableCountMismatch { declared: u32, found: u32 },
    #[error("AlreadyIngested: dataset {0} already has variables")]
    AlreadyIngested(String),
    #[error("NonEmptyRegistry: the built-in registry can only seed an empty catalog")]
    NonEmptyRegistry,
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

/// Which columns become variables.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum IncludeColumns {
    /// Every column except the key and year columns.
    #[default]
    All,
    Only(Vec<String>),
}

impl Serialize for IncludeColumns {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            IncludeColumns::All => s.serialize_str("ALL"),
            IncludeColumns::Only(cols) => cols.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for IncludeColumns {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            List(Vec<String>),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w.eq_ignore_ascii_case("all") => Ok(IncludeColumns::All),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("include_columns must be \"ALL\" or a list, got {w:?}"))),
            Raw::List(cols) => Ok(IncludeColumns::Only(cols)),
        }
    }
}

/// Optional per-variable metadata from a data dictionary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub unit: Option<String>,
    #[serde(default)]
    pub concept_code: Option<String>,
    /// Overrides inference.
    #[serde(default)]
    pub value_kind: Option<ValueKind>,
}

fn default_na() -> Vec<String> {
    ["", "NA", "NULL", ".", "-999"].map(String::from).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub descriptor: DatasetDescriptor,
    pub geo_column: String,
    #[serde(default)]
    pub year: Option<i32>,
    #[serde(default)]
    pub year_column: Option<String>,
    #[serde(default)]
    pub include_columns: IncludeColumns,
    #[serde(default = "default_na")]
    pub na_tokens: Vec<String>,
    /// Restore one dropped leading zero on keys (spreadsheet damage).
    #[serde(default)]
    pub lenient_keys: bool,
    #[serde(default)]
    pub dictionary: BTreeMap<String, DictionaryEntry>,
}

impl IngestManifest {
    pub fn new(descriptor: DatasetDescriptor, geo_column: impl Into<String>, year: i32) -> Self {
        IngestManifest {
            descriptor,
            geo_column: geo_column.into(),
            year: Some(year),
            year_column: None,
            include_columns: IncludeColumns::All,
            na_tokens: default_na(),
            lenient_keys: false,
            dictionary: BTreeMap::new(),
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, IngestError> {
        serde_json::from_slice(bytes).map_err(|e| IngestError::InvalidManifest(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let bytes = std::fs::read(path).map_err(|e| IngestError::InvalidManifest(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }

    fn check(&self) -> Result<(), IngestError> {
        match (&self.year, &self.year_column) {
            (Some(_), Some(_)) => Err(IngestError::InvalidManifest("give either year or year_column, not both".into())),
            (None, None) => Err(IngestError::InvalidManifest("one of year or year_column is required".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub dataset_id: String,
    pub rows_read: usize,
    pub rows_stored: usize,
    pub values_stored: usize,
    pub na_cells: usize,
    pub invalid_geo_rows: usize,
    /// First few offending key strings, for the operator.
    pub invalid_geo_samples: Vec<String>,
    pub invalid_year_rows: usize,
    /// Keys that were accepted only after restoring a leading zero.
    pub padded_keys: usize,
    pub years: Vec<i32>,
    pub variable_count: u32,
    pub inferred_kinds: BTreeMap<String, ValueKind>,
}

/// Decimal literal: optional sign, digits with an optional fraction, optional exponent.
pub fn is_decimal(s: &str) -> bool {
    let b = s.trim().as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - int_start;
    if i < b.len() && b[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        digits += i - frac_start;
    }
    if digits == 0 {
        return false;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        let exp_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return false;
        }
    }
    i == b.len()
}

/// Numeric if every value is a decimal, categorical if there are few
/// distinct values, text otherwise. A column with no values is numeric.
pub fn infer_kind<'a>(values: impl IntoIterator<Item = &'a str>) -> ValueKind {
    let mut numeric = true;
    let mut distinct: HashSet<&str> = HashSet::new();
    for v in values {
        if numeric && !is_decimal(v) {
            numeric = false;
        }
        if distinct.len() <= CATEGORICAL_MAX_DISTINCT {
            distinct.insert(v);
        }
        if !numeric && distinct.len() > CATEGORICAL_MAX_DISTINCT {
            return ValueKind::Text;
        }
    }
    if numeric {
        ValueKind::Numeric
    } else {
        ValueKind::Categorical
    }
}

/// Parses a wide CSV and loads it into `store`.
///
/// Registers the descriptor if it is new. Everything is validated before
/// the first write, so an error leaves the catalog as it was, apart from a
/// fresh registration.
pub fn ingest_dataset(manifest: &IngestManifest, csv_bytes: &[u8], store: &CatalogStore) -> Result<IngestReport, IngestError> {
    manifest.check()?;
    let mut desc = match store.descriptor(&manifest.descriptor.id) {
        Ok(d) => {
            if !store.variables(&d.id)?.is_empty() {
                return Err(IngestError::AlreadyIngested(d.id));
            }
            d
        }
        Err(CatalogError::UnknownDataset(_)) => {
            let mut d = manifest.descriptor.clone();
            d.years.clear();
            d.validate()?;
            d
        }
        Err(e) => return Err(e.into()),
    };
    let Some(level) = desc.spatial_scale.level() else {
        return Err(IngestError::PointScale(desc.id));
    };

    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(csv_bytes);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| IngestError::Csv(e.to_string()))?,
        None => return Err(IngestError::HeaderlessCsv),
    };
    let header: Vec<String> = header.iter().map(|h| h.trim().trim_start_matches('\u{feff}').to_string()).collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(IngestError::HeaderlessCsv);
    }
    let position = |name: &str| header.iter().position(|h| h == name);
    let Some(geo_col) = position(&manifest.geo_column) else {
        // A header made of key-shaped values means the header row is missing.
        if header.iter().any(|h| !h.is_empty() && parse_geo_key(h, level, true).is_ok()) {
            return Err(IngestError::HeaderlessCsv);
        }
        return Err(IngestError::MissingGeoColumn(manifest.geo_column.clone()));
    };
    let year_col = match &manifest.year_column {
        Some(name) => Some(position(name).ok_or_else(|| IngestError::MissingYearColumn(name.clone()))?),
        None => None,
    };
    let cols: Vec<usize> = match &manifest.include_columns {
        IncludeColumns::All => {
            (0..header.len()).filter(|&i| i != geo_col && Some(i) != year_col && !header[i].is_empty()).collect()
        }
        IncludeColumns::Only(names) => {
            names.iter().map(|n| position(n).ok_or_else(|| IngestError::MissingColumn(n.clone()))).collect::<Result<_, _>>()?
        }
    };
    let var_names: Vec<String> = cols.iter().map(|&c| header[c].clone()).collect();
    let mut seen = HashSet::new();
    if let Some(dup) = var_names.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(CatalogError::DuplicateVariable { dataset: desc.id.clone(), name: dup.clone() }.into());
    }
    let found = var_names.len() as u32;
    if desc.variable_count != 0 && desc.variable_count != found {
        return Err(IngestError::VariableCountMismatch { declared: desc.variable_count, found });
    }

    let na: HashSet<&str> = manifest.na_tokens.iter().map(|s| s.trim()).collect();
    let mut report = IngestReport { dataset_id: desc.id.clone(), variable_count: found, ..Default::default() };
    let mut rows: Vec<csv::StringRecord> = Vec::new();
    // year -> (keys, row indices, seen), in first-seen order within a year
    type YearRows = (Vec<GeoKey>, Vec<usize>, HashSet<GeoKey>);
    let mut by_year: BTreeMap<i32, YearRows> = BTreeMap::new();
    for rec in records {
        let rec = rec.map_err(|e| IngestError::Csv(e.to_string()))?;
        report.rows_read += 1;
        let year = match (manifest.year, year_col) {
            (Some(y), _) => Some(y),
            (None, Some(c)) => rec.get(c).and_then(|s| s.trim().parse::<i32>().ok()),
            (None, None) => unreachable!("checked by manifest"),
        };
        let Some(year) = year else {
            report.invalid_year_rows += 1;
            continue;
        };
        let raw = rec.get(geo_col).unwrap_or("");
        let key = match parse_geo_key(raw, level, manifest.lenient_keys) {
            Ok(k) => k,
            Err(_) => {
                report.invalid_geo_rows += 1;
                if report.invalid_geo_samples.len() < MAX_REPORTED_INVALID {
                    report.invalid_geo_samples.push(raw.to_string());
                }
                continue;
            }
        };
        if manifest.lenient_keys && raw.trim().trim_matches(['"', '\'']).len() + 1 == level.width() {
            report.padded_keys += 1;
        }
        let entry = by_year.entry(year).or_default();
        if !entry.2.insert(key) {
            return Err(IngestError::DuplicateGeoRow { geo: key.code().to_string(), year });
        }
        entry.0.push(key);
        entry.1.push(rows.len());
        rows.push(rec);
    }
    if rows.is_empty() {
        return Err(IngestError::AllRowsInvalid { rows: report.rows_read });
    }

    let is_value = |cell: &str| !na.contains(cell.trim());
    let mut variables = Vec::with_capacity(cols.len());
    for (name, &c) in var_names.iter().zip(&cols) {
        let dict = manifest.dictionary.get(name);
        let kind = match dict.and_then(|d| d.value_kind) {
            Some(k) => k,
            None => infer_kind(rows.iter().filter_map(|r| r.get(c)).filter(|v| is_value(v)).map(str::trim)),
        };
        report.inferred_kinds.insert(name.clone(), kind);
        let mut v = VariableDescriptor::new(&desc.id, name, kind);
        if let Some(d) = dict {
            v.description = d.description.clone();
            v.unit = d.unit.clone();
            v.concept_code = d.concept_code.clone();
        }
        variables.push(v);
    }

    if store.descriptor(&desc.id).is_err() {
        desc.variable_count = found;
        store.register_source(&desc)?;
    } else if desc.variable_count == 0 {
        store.set_variable_count(&desc.id, found)?;
    }
    store.add_variables(&desc.id, &variables)?;
    for (&year, (keys, idx, _)) in &by_year {
        let cell = |r: usize, c: usize| rows[idx[r]].get(cols[c]).filter(|v| is_value(v));
        report.values_stored += store.store_rows(&desc.id, year, &var_names, keys, cell)?;
        report.rows_stored += keys.len();
        report.years.push(year);
    }
    report.na_cells = report.rows_stored * cols.len() - report.values_stored;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Domain;
    use crate::geo::GeoLevel;

    fn manifest() -> IngestManifest {
        let d = DatasetDescriptor::new("svi", "Social Vulnerability Index (SVI)", "CDC", 0, GeoLevel::Tract, Domain::SDoH);
        IngestManifest::new(d, "FIPS", 2020)
    }

    fn store() -> (tempfile::TempDir, CatalogStore) {
        let dir = tempfile::tempdir().unwrap();
        let s = CatalogStore::open(dir.path()).unwrap();
        (dir, s)
    }

    #[test]
    fn decimal_grammar() {
        for ok in ["0", "-1", "+2.5", ".5", "5.", "1e3", "1.5E-2", " 7 "] {
            assert!(is_decimal(ok), "{ok}");
        }
        for bad in ["", "-", ".", "1e", "1e+", "abc", "1,000", "0x10", "nan", "inf", "1.2.3"] {
            assert!(!is_decimal(bad), "{bad}");
        }
    }

    #[test]
    fn kind_inference() {
        assert_eq!(infer_kind(["1", "2.5", "-3"]), ValueKind::Numeric);
        assert_eq!(infer_kind(["urban", "rural", "urban"]), ValueKind::Categorical);
        let many: Vec<String> = (0..21).map(|i| format!("v{i}")).collect();
        assert_eq!(infer_kind(many.iter().map(String::as_str)), ValueKind::Text);
        let twenty: Vec<String> = (0..20).map(|i| format!("v{i}")).collect();
        assert_eq!(infer_kind(twenty.iter().map(String::as_str)), ValueKind::Categorical);
    }

    #[test]
    fn ingests_wide_csv() {
        let (_d, s) = store();
        let csv = "FIPS,RPL_THEMES,E_TOTPOP,LABEL\n12001000100,0.53,4012,a\n12001000200,NA,15,b\n1001020100,0.10,-999,a\nbad,1,1,a\n";
        let mut m = manifest();
        m.lenient_keys = true;
        let r = ingest_dataset(&m, csv.as_bytes(), &s).unwrap();
        assert_eq!((r.rows_read, r.rows_stored, r.invalid_geo_rows, r.padded_keys), (4, 3, 1, 1));
        assert_eq!(r.invalid_geo_samples, vec!["bad".to_string()]);
        assert_eq!((r.values_stored, r.na_cells), (7, 2));
        assert_eq!(r.inferred_kinds["RPL_THEMES"], ValueKind::Numeric);
        assert_eq!(r.inferred_kinds["LABEL"], ValueKind::Categorical);
        assert_eq!(s.descriptor("svi").unwrap().variable_count, 3);
        assert_eq!(s.descriptor("svi").unwrap().years, vec![2020]);

        let k = GeoKey::new(GeoLevel::Tract, "01001020100").unwrap();
        let t = s.load_year("svi", 2020).unwrap();
        assert_eq!(t.get(&k, t.variable_index("RPL_THEMES").unwrap()), Some("0.10"));
        assert_eq!(t.get(&k, t.variable_index("E_TOTPOP").unwrap()), None);

        assert!(matches!(ingest_dataset(&m, csv.as_bytes(), &s), Err(IngestError::AlreadyIngested(_))));
    }

    #[test]
    fn strict_keys_reject_short_codes() {
        let (_d, s) = store();
        let csv = "FIPS,X\n1001020100,1\n12001000100,2\n";
        let r = ingest_dataset(&manifest(), csv.as_bytes(), &s).unwrap();
        assert_eq!((r.invalid_geo_rows, r.padded_keys, r.rows_stored), (1, 0, 1));
    }

    #[test]
    fn rejects_bad_inputs_before_writing() {
        let (_d, s) = store();
        let m = manifest();
        assert!(matches!(ingest_dataset(&m, b"", &s), Err(IngestError::HeaderlessCsv)));
        assert!(matches!(ingest_dataset(&m, b"12001000100,1\n", &s), Err(IngestError::HeaderlessCsv)));
        assert!(matches!(ingest_dataset(&m, b"GEOID,X\nfoo,1\n", &s), Err(IngestError::MissingGeoColumn(_))));
        assert!(matches!(ingest_dataset(&m, b"FIPS,X\nfoo,1\nbar,2\n", &s), Err(IngestError::AllRowsInvalid { rows: 2 })));
        let dup = b"FIPS,X\n12001000100,1\n12001000100,2\n";
        assert!(matches!(ingest_dataset(&m, dup, &s), Err(IngestError::DuplicateGeoRow { .. })));
        let mut declared = manifest();
        declared.descriptor.variable_count = 5;
        assert!(matches!(
            ingest_dataset(&declared, b"FIPS,X\n12001000100,1\n", &s),
            Err(IngestError::VariableCountMismatch { declared: 5, found: 1 })
        ));
        assert!(s.is_empty().unwrap());
    }

    #[test]
    fn year_column_and_include_list() {
        let (_d, s) = store();
        let mut m = manifest();
        m.year = None;
        m.year_column = Some("YEAR".into());
        m.include_columns = IncludeColumns::Only(vec!["B".into()]);
        let csv = "FIPS,YEAR,A,B\n12001000100,2019,1,2\n12001000100,2020,3,4\n12001000200,x,5,6\n";
        let r = ingest_dataset(&m, csv.as_bytes(), &s).unwrap();
        assert_eq!((r.years.clone(), r.invalid_year_rows, r.variable_count), (vec![2019, 2020], 1, 1));
        let names: Vec<_> = s.variables("svi").unwrap().into_iter().map(|v| v.name).collect();
        assert_eq!(names, vec!["B"]);
        let k = GeoKey::new(GeoLevel::Tract, "12001000100").unwrap();
        let t = s.load_year("svi", 2019).unwrap();
        assert_eq!(t.get(&k, 0), Some("2"));
    }

    #[test]
    fn manifest_json() {
        let j = br#"{"descriptor":{"id":"adi","display_name":"Area Deprivation Index (ADI)","source_org":"x",
            "variable_count":0,"spatial_scale":"blockgroup","domain":"sdoh"},
            "geo_column":"FIPS","year":2021,"include_columns":"ALL"}"#;
        let m = IngestManifest::from_json(j).unwrap();
        assert_eq!(m.include_columns, IncludeColumns::All);
        assert_eq!(m.na_tokens, default_na());
        assert!(IngestManifest::from_json(br#"{"geo_column":1}"#).is_err());
    }

    #[test]
    fn point_scale_refused() {
        let (_d, s) = store();
        let d = DatasetDescriptor::new("ozone_daily", "Ozone (daily)", "EPA", 28, crate::catalog::SpatialScale::Point, Domain::Environment);
        let m = IngestManifest::new(d, "site", 2020);
        assert!(matches!(ingest_dataset(&m, b"site,x\n1,2\n", &s), Err(IngestError::PointScale(_))));
    }
}
