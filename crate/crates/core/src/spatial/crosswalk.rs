use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SpatialError;
use crate::geo::{parse_geo_key, GeoKey, GeoLevel};

/// Sidecar manifest describing a crosswalk CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosswalkManifest {
    pub from_level: GeoLevel,
    pub to_level: GeoLevel,
    /// CSV file name, relative to the manifest.
    pub file: String,
    #[serde(default)]
    pub vintage: String,
}

/// Tabular mapping between two geography systems, optionally weighted.
#[derive(Debug, Clone, PartialEq)]
pub struct Crosswalk {
    from_level: GeoLevel,
    to_level: GeoLevel,
    weighted: bool,
    pairs: BTreeMap<GeoKey, Vec<(GeoKey, f64)>>,
}

const WEIGHT_TOLERANCE: f64 = 1e-9;

impl Crosswalk {
    pub fn new(from_level: GeoLevel, to_level: GeoLevel) -> Self {
        Crosswalk { from_level, to_level, weighted: false, pairs: BTreeMap::new() }
    }

    pub fn from_level(&self) -> GeoLevel {
        self.from_level
    }

    pub fn to_level(&self) -> GeoLevel {
        self.to_level
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Adds one pair without validating weight sums; see [`Crosswalk::check_weights`].
    pub fn insert(&mut self, from: GeoKey, to: GeoKey, weight: f64) -> Result<(), SpatialError> {
        if from.level() != self.from_level || to.level() != self.to_level {
            return Err(SpatialError::LevelMismatch { expected: self.from_level, found: from.level() });
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(SpatialError::BadWeight(format!("{from}->{to}: {weight}")));
        }
        self.pairs.entry(from).or_default().push((to, weight));
        Ok(())
    }

    /// Parses a `from_code,to_code[,weight]` CSV. A missing or empty weight is 1.0.
    pub fn from_csv(bytes: &[u8], from_level: GeoLevel, to_level: GeoLevel) -> Result<Self, SpatialError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
        let headers = rdr.headers().map_err(|e| SpatialError::Csv(e.to_string()))?.clone();
        let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
        let from_col = col("from_code").ok_or_else(|| SpatialError::MissingColumn("from_code".into()))?;
        let to_col = col("to_code").ok_or_else(|| SpatialError::MissingColumn("to_code".into()))?;
        let weight_col = col("weight");

        let mut xw = Crosswalk::new(from_level, to_level);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| SpatialError::Csv(e.to_string()))?;
            let from = parse_geo_key(rec.get(from_col).unwrap_or(""), from_level, true)
                .map_err(|e| SpatialError::Key { line: line + 2, source: e })?;
            let to = parse_geo_key(rec.get(to_col).unwrap_or(""), to_level, true)
                .map_err(|e| SpatialError::Key { line: line + 2, source: e })?;
            let weight = match weight_col.and_then(|c| rec.get(c)).filter(|s| !s.is_empty()) {
                Some(w) => {
                    xw.weighted = true;
                    w.parse::<f64>().map_err(|_| SpatialError::BadWeight(format!("line {}: {w:?}", line + 2)))?
                }
                None => 1.0,
            };
            xw.insert(from, to, weight)?;
        }
        if xw.weighted {
            xw.check_weights()?;
        }
        Ok(xw)
    }

    /// Loads the CSV named by a sidecar manifest.
    pub fn load(manifest_path: &Path) -> Result<Self, SpatialError> {
        let text = std::fs::read(manifest_path).map_err(|e| SpatialError::Io(format!("{}: {e}", manifest_path.display())))?;
        let manifest: CrosswalkManifest =
            serde_json::from_slice(&text).map_err(|e| SpatialError::Csv(format!("{}: {e}", manifest_path.display())))?;
        let csv_path = manifest_path.parent().unwrap_or(Path::new(".")).join(&manifest.file);
        let bytes = std::fs::read(&csv_path).map_err(|e| SpatialError::Io(format!("{}: {e}", csv_path.display())))?;
        Self::from_csv(&bytes, manifest.from_level, manifest.to_level)
    }

    /// Weighted crosswalks must sum to one per source key.
    pub fn check_weights(&self) -> Result<(), SpatialError> {
        for (from, targets) in &self.pairs {
            let sum: f64 = targets.iter().map(|(_, w)| w).sum();
            if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
                return Err(SpatialError::WeightSum { key: from.code().to_string(), sum });
            }
        }
        Ok(())
    }

    /// Highest-weight target for `key`; ties go to the smaller code.
    pub fn best_target(&self, key: &GeoKey) -> Option<GeoKey> {
        self.pairs.get(key)?.iter().fold(None, |best: Option<(GeoKey, f64)>, &(k, w)| match best {
            Some((bk, bw)) if bw > w || (bw == w && bk <= k) => Some((bk, bw)),
            _ => Some((k, w)),
        })
        .map(|(k, _)| k)
    }
}

/// Mapped targets for `key`, or an empty slice when it is not in the crosswalk.
pub fn crosswalk_lookup<'a>(xw: &'a Crosswalk, key: &GeoKey) -> Result<&'a [(GeoKey, f64)], SpatialError> {
    if key.level() != xw.from_level {
        return Err(SpatialError::LevelMismatch { expected: xw.from_level, found: key.level() });
    }
    Ok(xw.pairs.get(key).map(Vec::as_slice).unwrap_or(&[]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tract(c: &str) -> GeoKey {
        GeoKey::new(GeoLevel::Tract, c).unwrap()
    }

    fn zcta(c: &str) -> GeoKey {
        GeoKey::new(GeoLevel::Zcta, c).unwrap()
    }

    #[test]
    fn direct_hit_miss_and_level_mismatch() {
        let xw = Crosswalk::from_csv(b"from_code,to_code,weight\n12086009801,33139,1.0\n", GeoLevel::Tract, GeoLevel::Zcta).unwrap();
        assert_eq!(crosswalk_lookup(&xw, &tract("12086009801")).unwrap(), &[(zcta("33139"), 1.0)]);
        assert!(crosswalk_lookup(&xw, &tract("12086009802")).unwrap().is_empty());
        let county = GeoKey::new(GeoLevel::County, "12086").unwrap();
        assert!(matches!(crosswalk_lookup(&xw, &county), Err(SpatialError::LevelMismatch { .. })));
    }

    #[test]
    fn weights_default_and_sum_check() {
        let xw = Crosswalk::from_csv(b"from_code,to_code\n12086009801,33139\n12086009801,33140\n", GeoLevel::Tract, GeoLevel::Zcta).unwrap();
        assert!(!xw.is_weighted());
        assert_eq!(crosswalk_lookup(&xw, &tract("12086009801")).unwrap().len(), 2);

        let bad = Crosswalk::from_csv(b"from_code,to_code,weight\n12086009801,33139,0.5\n12086009801,33140,0.4\n", GeoLevel::Tract, GeoLevel::Zcta);
        assert!(matches!(bad, Err(SpatialError::WeightSum { .. })));
        let out_of_range = Crosswalk::from_csv(b"from_code,to_code,weight\n12086009801,33139,1.5\n", GeoLevel::Tract, GeoLevel::Zcta);
        assert!(matches!(out_of_range, Err(SpatialError::BadWeight(_))));
        assert!(matches!(
            Crosswalk::from_csv(b"tract,zip\n1,2\n", GeoLevel::Tract, GeoLevel::Zcta),
            Err(SpatialError::MissingColumn(_))
        ));
    }

    #[test]
    fn best_target_prefers_weight_then_code() {
        let xw = Crosswalk::from_csv(
            b"from_code,to_code,weight\n12086009801,33140,0.4\n12086009801,33139,0.2\n12086009801,33141,0.4\n",
            GeoLevel::Tract,
            GeoLevel::Zcta,
        )
        .unwrap();
        assert_eq!(xw.best_target(&tract("12086009801")), Some(zcta("33140")));
        assert_eq!(xw.best_target(&tract("12086009899")), None);
    }
}
