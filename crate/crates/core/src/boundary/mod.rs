//! Polygon boundary layers keyed by [`GeoKey`].
//!
//! Boundaries come from GeoJSON feature collections or ESRI shapefile
//! (`.shp` + `.dbf`) pairs. Rings are kept exactly as read; containment
//! downstream uses the even-odd rule, so winding order and the split between
//! exterior rings and holes never matter.

mod geojson;
mod shapefile;
mod validate;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geo::{GeoError, GeoKey, GeoLevel, LonLat};

pub use self::geojson::{load_geojson, to_geojson};
pub use self::shapefile::{load_shapefile, DbfField, DbfTable};
pub use self::validate::{validate_boundaries, IssueKind, ValidationIssue, ValidationReport};

#[derive(Debug, Error)]
pub enum BoundaryError {
    #[error("MalformedJson: {0}")]
    MalformedJson(String),
    #[error("UnsupportedGeometry: feature {feature} has geometry type {kind}")]
    UnsupportedGeometry { feature: usize, kind: String },
    #[error("MissingIdProperty: feature {feature} has no property {property:?}")]
    MissingIdProperty { feature: usize, property: String },
    #[error("DuplicateKey: {0} appears more than once")]
    DuplicateKey(String),
    #[error("InvalidKey: record {record}: {source}")]
    InvalidKey {
        record: usize,
        #[source]
        source: GeoError,
    },
    #[error("InvalidCoordinate: record {record}: {source}")]
    InvalidCoordinate {
        record: usize,
        #[source]
        source: GeoError,
    },
    #[error("BadFileCode: expected 9994, found {0}")]
    BadFileCode(i32),
    #[error("UnsupportedShapeType: {0} (only 5 = Polygon and 0 = Null are supported)")]
    UnsupportedShapeType(i32),
    #[error("UnsupportedDbfVersion: 0x{0:02x}")]
    UnsupportedDbfVersion(u8),
    #[error("UnsupportedDbfField: field {name:?} has type {kind:?} (only 'C' and 'N' are supported)")]
    UnsupportedDbfField { name: String, kind: char },
    #[error("DbfFieldMissing: no field named {0:?}")]
    DbfFieldMissing(String),
    #[error("RecordCountMismatch: .shp has {shp} records, .dbf has {dbf}")]
    RecordCountMismatch { shp: usize, dbf: usize },
    #[error("Truncated: {0}")]
    Truncated(String),
    #[error("EmptySet: boundary layer has no polygons")]
    EmptySet,
}

/// Axis-aligned bounding box in lon/lat degrees (min lon, min lat, max lon, max lat).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BBox {
    pub const EMPTY: BBox = BBox {
        min_lon: f64::INFINITY,
        min_lat: f64::INFINITY,
        max_lon: f64::NEG_INFINITY,
        max_lat: f64::NEG_INFINITY,
    };

    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Self {
        BBox { min_lon, min_lat, max_lon, max_lat }
    }

    pub fn of_points<'a>(points: impl IntoIterator<Item = &'a LonLat>) -> Self {
        let mut b = BBox::EMPTY;
        for p in points {
            b.expand_point(*p);
        }
        b
    }

    pub fn expand_point(&mut self, p: LonLat) {
        self.min_lon = self.min_lon.min(p.lon);
        self.min_lat = self.min_lat.min(p.lat);
        self.max_lon = self.max_lon.max(p.lon);
        self.max_lat = self.max_lat.max(p.lat);
    }

    pub fn expand(&mut self, other: &BBox) {
        self.min_lon = self.min_lon.min(other.min_lon);
        self.min_lat = self.min_lat.min(other.min_lat);
        self.max_lon = self.max_lon.max(other.max_lon);
        self.max_lat = self.max_lat.max(other.max_lat);
    }

    /// Closed containment: points on the box edge are inside.
    #[inline]
    pub fn contains(&self, p: LonLat) -> bool {
        p.lon >= self.min_lon && p.lon <= self.max_lon && p.lat >= self.min_lat && p.lat <= self.max_lat
    }

    pub fn is_empty(&self) -> bool {
        self.min_lon > self.max_lon || self.min_lat > self.max_lat
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.min_lon + self.max_lon) * 0.5, (self.min_lat + self.max_lat) * 0.5)
    }
}

/// A linear ring. Closed (first vertex repeated last) once validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring {
    vertices: Vec<LonLat>,
}

impl Ring {
    pub fn new(vertices: Vec<LonLat>) -> Self {
        Ring { vertices }
    }

    pub fn vertices(&self) -> &[LonLat] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        match (self.vertices.first(), self.vertices.last()) {
            (Some(a), Some(b)) => self.vertices.len() > 1 && a == b,
            _ => false,
        }
    }

    /// Shoelace area; sign follows winding.
    pub fn signed_area(&self) -> f64 {
        let v = &self.vertices;
        if v.len() < 3 {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..v.len() {
            let a = v[i];
            let b = v[(i + 1) % v.len()];
            acc += a.lon * b.lat - b.lon * a.lat;
        }
        acc * 0.5
    }

    pub(crate) fn close(&mut self) {
        if let Some(first) = self.vertices.first().copied() {
            self.vertices.push(first);
        }
    }
}

/// One polygonal area: any number of rings, interpreted with the even-odd rule.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonShape {
    rings: Vec<Ring>,
    /// Ring counts of the source polygons (`[3]` for one polygon with two
    /// holes, `[1, 1]` for a two-part multipolygon). Only used on export.
    parts: Vec<usize>,
    bbox: BBox,
}

impl PolygonShape {
    /// Builds a shape from source polygons, each a list of rings.
    pub fn from_polygons(polygons: Vec<Vec<Ring>>) -> Self {
        let parts = polygons.iter().map(Vec::len).collect();
        let rings: Vec<Ring> = polygons.into_iter().flatten().collect();
        let bbox = BBox::of_points(rings.iter().flat_map(|r| r.vertices.iter()));
        PolygonShape { rings, parts, bbox }
    }

    /// A single polygon whose rings are all listed together.
    pub fn from_rings(rings: Vec<Ring>) -> Self {
        Self::from_polygons(vec![rings])
    }

    pub fn rings(&self) -> &[Ring] {
        &self.rings
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub(crate) fn rings_mut(&mut self) -> &mut [Ring] {
        &mut self.rings
    }

    pub fn vertex_count(&self) -> usize {
        self.rings.iter().map(Ring::len).sum()
    }
}

/// A boundary layer: one polygon per key, all at the same level.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySet {
    level: GeoLevel,
    vintage: String,
    entries: BTreeMap<GeoKey, PolygonShape>,
}

impl BoundarySet {
    pub fn new(level: GeoLevel, vintage: impl Into<String>) -> Self {
        BoundarySet { level, vintage: vintage.into(), entries: BTreeMap::new() }
    }

    /// Inserts a polygon. Keys must match the layer level and be unique.
    pub fn insert(&mut self, key: GeoKey, shape: PolygonShape) -> Result<(), BoundaryError> {
        if key.level() != self.level {
            return Err(BoundaryError::InvalidKey {
                record: self.entries.len(),
                source: GeoError::WrongWidth {
                    text: key.code().to_string(),
                    level: self.level,
                    expected: self.level.width(),
                    found: key.level().width(),
                },
            });
        }
        if self.entries.contains_key(&key) {
            return Err(BoundaryError::DuplicateKey(key.code().to_string()));
        }
        self.entries.insert(key, shape);
        Ok(())
    }

    pub fn level(&self) -> GeoLevel {
        self.level
    }

    pub fn vintage(&self) -> &str {
        &self.vintage
    }

    pub fn set_vintage(&mut self, vintage: impl Into<String>) {
        self.vintage = vintage.into();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &GeoKey) -> Option<&PolygonShape> {
        self.entries.get(key)
    }

    /// Entries in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&GeoKey, &PolygonShape)> {
        self.entries.iter()
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&GeoKey, &mut PolygonShape)> {
        self.entries.iter_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lon: f64, lat: f64) -> LonLat {
        LonLat { lon, lat }
    }

    #[test]
    fn bbox_folds_all_parts() {
        let a = Ring::new(vec![p(0., 0.), p(1., 0.), p(1., 1.), p(0., 0.)]);
        let b = Ring::new(vec![p(5., -2.), p(6., -2.), p(6., 3.), p(5., -2.)]);
        let shape = PolygonShape::from_polygons(vec![vec![a], vec![b]]);
        assert_eq!(shape.bbox(), BBox::new(0., -2., 6., 3.));
        assert_eq!(shape.parts(), &[1, 1]);
        assert_eq!(shape.vertex_count(), 8);
    }

    #[test]
    fn insert_rejects_duplicates_and_foreign_levels() {
        let mut set = BoundarySet::new(GeoLevel::County, "test");
        let shape = PolygonShape::from_rings(vec![Ring::new(vec![p(0., 0.), p(1., 0.), p(0., 1.), p(0., 0.)])]);
        let key = GeoKey::new(GeoLevel::County, "12001").unwrap();
        set.insert(key, shape.clone()).unwrap();
        assert!(matches!(set.insert(key, shape.clone()), Err(BoundaryError::DuplicateKey(_))));
        let tract = GeoKey::new(GeoLevel::Tract, "12001000100").unwrap();
        assert!(matches!(set.insert(tract, shape), Err(BoundaryError::InvalidKey { .. })));
    }

    #[test]
    fn ring_area_and_closure() {
        let r = Ring::new(vec![p(0., 0.), p(2., 0.), p(2., 2.), p(0., 2.), p(0., 0.)]);
        assert!(r.is_closed());
        assert_eq!(r.signed_area(), 4.0);
        let open = Ring::new(vec![p(0., 0.), p(2., 0.), p(2., 2.)]);
        assert!(!open.is_closed());
    }
}
