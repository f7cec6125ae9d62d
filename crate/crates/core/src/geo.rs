//! Census geography identifiers.
//!
//! Every area-level record in the system is addressed by a [`GeoKey`]: a
//! [`GeoLevel`] plus a fixed-width digit string. State, county, tract and
//! block group codes nest positionally (2 + 3 + 6 + 1 digits), so a coarser
//! key is always a prefix of a finer one. ZCTA and CBSA codes live in their
//! own namespaces and only relate to the hierarchy through crosswalks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAX_WIDTH: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeoError {
    #[error("NonDigit: {0:?} contains a non-digit character")]
    NonDigit(String),
    #[error("WrongWidth: {text:?} has {found} digits, {level} codes have {expected}")]
    WrongWidth {
        text: String,
        level: GeoLevel,
        expected: usize,
        found: usize,
    },
    #[error("Empty: geographic code is empty")]
    Empty,
    #[error("NotHierarchical: {0} is not part of the state/county/tract/block group hierarchy")]
    NotHierarchical(GeoLevel),
    #[error("NotAncestor: {target} is not an ancestor of {level}")]
    NotAncestor { level: GeoLevel, target: GeoLevel },
    #[error("InvalidCoordinate: {0}")]
    InvalidCoordinate(String),
    #[error("UnknownLevel: {0:?}")]
    UnknownLevel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeoLevel {
    State,
    County,
    Tract,
    #[serde(rename = "blockgroup", alias = "block_group")]
    BlockGroup,
    Zcta,
    Cbsa,
}

impl GeoLevel {
    pub const ALL: [GeoLevel; 6] = [
        GeoLevel::State,
        GeoLevel::County,
        GeoLevel::Tract,
        GeoLevel::BlockGroup,
        GeoLevel::Zcta,
        GeoLevel::Cbsa,
    ];

    /// Number of digits in a code at this level.
    pub const fn width(self) -> usize {
        match self {
            GeoLevel::State => 2,
            GeoLevel::County => 5,
            GeoLevel::Tract => 11,
            GeoLevel::BlockGroup => 12,
            GeoLevel::Zcta => 5,
            GeoLevel::Cbsa => 5,
        }
    }

    /// Position in the prefix hierarchy (state = 0), or `None` for ZCTA/CBSA.
    pub const fn depth(self) -> Option<u8> {
        match self {
            GeoLevel::State => Some(0),
            GeoLevel::County => Some(1),
            GeoLevel::Tract => Some(2),
            GeoLevel::BlockGroup => Some(3),
            GeoLevel::Zcta | GeoLevel::Cbsa => None,
        }
    }

    pub const fn is_hierarchical(self) -> bool {
        self.depth().is_some()
    }

    /// True when `self` is `other` or one of its hierarchical ancestors.
    pub fn is_ancestor_or_self(self, other: GeoLevel) -> bool {
        match (self.depth(), other.depth()) {
            (Some(a), Some(b)) => a <= b,
            _ => false,
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            GeoLevel::State => "state",
            GeoLevel::County => "county",
            GeoLevel::Tract => "tract",
            GeoLevel::BlockGroup => "blockgroup",
            GeoLevel::Zcta => "zcta",
            GeoLevel::Cbsa => "cbsa",
        }
    }
}

impl fmt::Display for GeoLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeoLevel {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, '_' | '-' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match norm.as_str() {
            "state" => GeoLevel::State,
            "county" => GeoLevel::County,
            "tract" | "censustract" => GeoLevel::Tract,
            "blockgroup" | "censusblockgroup" | "bg" => GeoLevel::BlockGroup,
            "zcta" => GeoLevel::Zcta,
            "cbsa" => GeoLevel::Cbsa,
            _ => return Err(GeoError::UnknownLevel(s.to_string())),
        })
    }
}

/// A typed geographic identifier. Cheap to copy; the digits are stored inline.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GeoKey {
    level: GeoLevel,
    digits: [u8; MAX_WIDTH],
}

impl GeoKey {
    /// Builds a key from an exact-width digit string.
    pub fn new(level: GeoLevel, code: &str) -> Result<Self, GeoError> {
        parse_geo_key(code, level, false)
    }

    pub fn level(&self) -> GeoLevel {
        self.level
    }

    pub fn code(&self) -> &str {
        // Only ASCII digits are ever stored.
        std::str::from_utf8(&self.digits[..self.level.width()]).expect("ascii digits")
    }

    fn from_digits(level: GeoLevel, digits: &[u8]) -> Self {
        debug_assert_eq!(digits.len(), level.width());
        let mut buf = [0u8; MAX_WIDTH];
        buf[..digits.len()].copy_from_slice(digits);
        GeoKey { level, digits: buf }
    }
}

impl fmt::Debug for GeoKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.level, self.code())
    }
}

impl fmt::Display for GeoKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    for q in ['"', '\''] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return s[1..s.len() - 1].trim();
        }
    }
    s
}

/// Parses `text` as a code at `level`.
///
/// Surrounding whitespace and one pair of surrounding quotes are ignored. In
/// lenient mode a code exactly one digit short is left-padded with a single
/// zero, which undoes the usual spreadsheet damage (`01001` read as `1001`).
/// Any other width mismatch is rejected in both modes.
pub fn parse_geo_key(text: &str, level: GeoLevel, lenient: bool) -> Result<GeoKey, GeoError> {
    let s = strip_quotes(text);
    if s.is_empty() {
        return Err(GeoError::Empty);
    }
    if !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(GeoError::NonDigit(s.to_string()));
    }
    let width = level.width();
    let n = s.len();
    if n == width {
        Ok(GeoKey::from_digits(level, s.as_bytes()))
    } else if lenient && n + 1 == width {
        let mut buf = [b'0'; MAX_WIDTH];
        buf[1..width].copy_from_slice(s.as_bytes());
        Ok(GeoKey::from_digits(level, &buf[..width]))
    } else {
        Err(GeoError::WrongWidth {
            text: s.to_string(),
            level,
            expected: width,
            found: n,
        })
    }
}

/// Truncates a hierarchical key to one of its ancestor levels.
pub fn parent(key: GeoKey, target: GeoLevel) -> Result<GeoKey, GeoError> {
    if !key.level.is_hierarchical() {
        return Err(GeoError::NotHierarchical(key.level));
    }
    if !target.is_hierarchical() {
        return Err(GeoError::NotHierarchical(target));
    }
    if !target.is_ancestor_or_self(key.level) {
        return Err(GeoError::NotAncestor {
            level: key.level,
            target,
        });
    }
    Ok(GeoKey::from_digits(target, &key.digits[..target.width()]))
}

/// A WGS84 longitude/latitude pair in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

impl LonLat {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeoError> {
        if !lon.is_finite() || !lat.is_finite() {
            return Err(GeoError::InvalidCoordinate(format!(
                "non-finite coordinate ({lon}, {lat})"
            )));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::InvalidCoordinate(format!(
                "longitude {lon} outside [-180, 180]"
            )));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::InvalidCoordinate(format!(
                "latitude {lat} outside [-90, 90]"
            )));
        }
        Ok(LonLat { lon, lat })
    }

    /// Parses a pair of text cells, as found in cohort and point files.
    pub fn parse(lon: &str, lat: &str) -> Result<Self, GeoError> {
        let num = |s: &str| {
            let s = strip_quotes(s);
            s.parse::<f64>()
                .map_err(|_| GeoError::InvalidCoordinate(format!("{s:?} is not a number")))
        };
        LonLat::new(num(lon)?, num(lat)?)
    }
}
