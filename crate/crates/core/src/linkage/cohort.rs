use std::collections::HashMap;
use std::fmt;
use std::io::{Cursor, Read};

use serde::{Deserialize, Serialize};

use super::LinkError;
use crate::geo::GeoLevel;

const FIPS_NAMES: [&str; 4] = ["fips", "geoid", "fips11", "tract_fips"];
const LON_NAMES: [&str; 3] = ["lon", "lng", "longitude"];
const LAT_NAMES: [&str; 2] = ["lat", "latitude"];

/// How each cohort row is keyed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum KeyMode {
    FipsColumn { name: String, level: GeoLevel },
    LonLatColumns { lon: String, lat: String },
}

impl fmt::Display for KeyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyMode::FipsColumn { name, level } => write!(f, "fips column {name:?} at {level} level"),
            KeyMode::LonLatColumns { lon, lat } => write!(f, "coordinates {lon:?}, {lat:?}"),
        }
    }
}

/// Key mode as requested by the caller.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum KeySpec {
    #[default]
    Auto,
    /// `level: None` infers the level from value widths.
    Fips { column: String, level: Option<GeoLevel> },
    LonLat { lon: String, lat: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detection {
    Auto,
    Declared,
}

/// A parsed cohort file. Rows are kept as read; key columns are located
/// but not yet interpreted.
#[derive(Debug, Clone)]
pub struct Cohort {
    columns: Vec<String>,
    rows: Vec<csv::StringRecord>,
    key_mode: KeyMode,
    detection: Detection,
    key_cols: (usize, Option<usize>),
}

impl Cohort {
    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &csv::StringRecord {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[csv::StringRecord] {
        &self.rows
    }

    pub fn key_mode(&self) -> &KeyMode {
        &self.key_mode
    }

    pub fn detection(&self) -> Detection {
        self.detection
    }

    /// Raw key text of row `i`: the FIPS cell, or (lon, lat).
    pub fn key_cells(&self, i: usize) -> (&str, Option<&str>) {
        let r = &self.rows[i];
        (r.get(self.key_cols.0).unwrap_or(""), self.key_cols.1.map(|c| r.get(c).unwrap_or("")))
    }
}

fn is_zip(bytes: &[u8]) -> bool {
    bytes.starts_with(b"PK\x03\x04") || bytes.starts_with(b"PK\x05\x06")
}

fn unzip_single_csv(bytes: &[u8]) -> Result<Vec<u8>, LinkError> {
    let mut zip = zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| LinkError::MalformedCohort(e.to_string()))?;
    let mut csv_entries = Vec::new();
    for i in 0..zip.len() {
        let entry = zip.by_index(i).map_err(|e| LinkError::MalformedCohort(e.to_string()))?;
        let name = entry.name().map_err(|e| LinkError::MalformedCohort(e.to_string()))?.to_string();
        let base = name.rsplit('/').next().unwrap_or("");
        let junk = name.starts_with("__MACOSX/") || base.starts_with("._");
        if entry.is_file() && !junk && base.to_ascii_lowercase().ends_with(".csv") {
            csv_entries.push(i);
        }
    }
    match csv_entries.as_slice() {
        [] => Err(LinkError::NoCsvInZip),
        [i] => {
            let mut entry = zip.by_index(*i).map_err(|e| LinkError::MalformedCohort(e.to_string()))?;
            let mut out = Vec::new();
            entry.read_to_end(&mut out).map_err(|e| LinkError::MalformedCohort(e.to_string()))?;
            Ok(out)
        }
        many => Err(LinkError::MultipleCsvInZip(many.len())),
    }
}

fn find(header: &[String], names: &[&str]) -> Option<usize> {
    names.iter().find_map(|n| header.iter().position(|h| h.trim().eq_ignore_ascii_case(n)))
}

fn find_declared(header: &[String], name: &str) -> Result<usize, LinkError> {
    header
        .iter()
        .position(|h| h == name)
        .or_else(|| header.iter().position(|h| h.trim().eq_ignore_ascii_case(name.trim())))
        .ok_or_else(|| LinkError::MissingKeyColumn(name.to_string()))
}

/// Level implied by the most common value width. One-short widths count
/// toward the level they would pad to.
pub(crate) fn infer_level<'a>(values: impl Iterator<Item = &'a str>) -> GeoLevel {
    let order = [GeoLevel::Tract, GeoLevel::BlockGroup, GeoLevel::County, GeoLevel::State];
    let mut counts: HashMap<GeoLevel, usize> = HashMap::new();
    for v in values {
        let v = v.trim().trim_matches(['"', '\'']);
        if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) {
            continue;
        }
        let level = match v.len() {
            10 | 11 => GeoLevel::Tract,
            12 => GeoLevel::BlockGroup,
            4 | 5 => GeoLevel::County,
            1 | 2 => GeoLevel::State,
            _ => continue,
        };
        *counts.entry(level).or_default() += 1;
    }
    let (mut best, mut best_n) = (GeoLevel::Tract, 0);
    for l in order {
        let n = counts.get(&l).copied().unwrap_or(0);
        if n > best_n {
            (best, best_n) = (l, n);
        }
    }
    best
}

/// Parses a CSV, or a ZIP holding exactly one CSV, and locates the key columns.
pub fn parse_cohort(bytes: &[u8], spec: &KeySpec) -> Result<Cohort, LinkError> {
    let owned;
    let mut data = bytes;
    if is_zip(data) {
        owned = unzip_single_csv(data)?;
        data = &owned;
    }
    let data = data.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(data);
    if data.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(LinkError::EmptyFile);
    }

    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(data);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| LinkError::MalformedCohort(e.to_string()))?,
        None => return Err(LinkError::EmptyFile),
    };
    let columns: Vec<String> = header.iter().map(str::to_string).collect();
    let width = columns.len();
    let mut rows = Vec::new();
    for (n, rec) in records.enumerate() {
        let mut rec = rec.map_err(|e| LinkError::MalformedCohort(e.to_string()))?;
        if rec.len() > width {
            return Err(LinkError::MalformedCohort(format!(
                "data row {} has {} fields, the header has {width}",
                n + 1,
                rec.len()
            )));
        }
        while rec.len() < width {
            rec.push_field("");
        }
        rows.push(rec);
    }
    if rows.is_empty() {
        return Err(LinkError::EmptyFile);
    }

    let level_of = |col: usize| infer_level(rows.iter().map(|r| r.get(col).unwrap_or("")));
    let (key_mode, key_cols, detection) = match spec {
        KeySpec::Auto => {
            let fips = find(&columns, &FIPS_NAMES);
            let lonlat = find(&columns, &LON_NAMES).zip(find(&columns, &LAT_NAMES));
            match (fips, lonlat) {
                (Some(f), Some((lo, la))) => {
                    return Err(LinkError::AmbiguousKeys {
                        fips: columns[f].clone(),
                        lon: columns[lo].clone(),
                        lat: columns[la].clone(),
                    })
                }
                (Some(f), None) => {
                    (KeyMode::FipsColumn { name: columns[f].clone(), level: level_of(f) }, (f, None), Detection::Auto)
                }
                (None, Some((lo, la))) => (
                    KeyMode::LonLatColumns { lon: columns[lo].clone(), lat: columns[la].clone() },
                    (lo, Some(la)),
                    Detection::Auto,
                ),
                (None, None) => return Err(LinkError::NoKeyColumns(columns)),
            }
        }
        KeySpec::Fips { column, level } => {
            let f = find_declared(&columns, column)?;
            let level = level.unwrap_or_else(|| level_of(f));
            (KeyMode::FipsColumn { name: columns[f].clone(), level }, (f, None), Detection::Declared)
        }
        KeySpec::LonLat { lon, lat } => {
            let lo = find_declared(&columns, lon)?;
            let la = find_declared(&columns, lat)?;
            (KeyMode::LonLatColumns { lon: columns[lo].clone(), lat: columns[la].clone() }, (lo, Some(la)), Detection::Declared)
        }
    };
    Ok(Cohort { columns, rows, key_mode, detection, key_cols })
}
