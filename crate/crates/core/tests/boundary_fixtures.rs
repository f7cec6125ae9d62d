use std::collections::BTreeMap;
use std::path::PathBuf;

use arealink_core::boundary::{load_geojson, load_shapefile, to_geojson, BoundaryError, BoundarySet};
use arealink_core::GeoLevel;

fn fixture(name: &str) -> Vec<u8> {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/boundaries").join(name);
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

const PAIRS: [(&str, GeoLevel); 5] = [
    ("grid3", GeoLevel::Tract),
    ("holes", GeoLevel::County),
    ("multipart", GeoLevel::State),
    ("dense", GeoLevel::Tract),
    ("blockgroups", GeoLevel::BlockGroup),
];

type Rings = Vec<Vec<[f64; 2]>>;

fn rings_of(set: &BoundarySet) -> BTreeMap<String, Rings> {
    set.iter()
        .map(|(k, s)| {
            let rings = s.rings().iter().map(|r| r.vertices().iter().map(|v| [v.lon, v.lat]).collect()).collect();
            (k.code().to_string(), rings)
        })
        .collect()
}

fn expected() -> BTreeMap<String, BTreeMap<String, Rings>> {
    serde_json::from_slice(&fixture("expected.json")).unwrap()
}

#[test]
fn shapefile_matches_reference_vertices() {
    let expected = expected();
    for (name, level) in PAIRS {
        let set = load_shapefile(&fixture(&format!("{name}.shp")), &fixture(&format!("{name}.dbf")), level, "GEOID").unwrap();
        assert_eq!(rings_of(&set), expected[name], "{name}");
    }
}

#[test]
fn geojson_and_shapefile_agree() {
    for (name, level) in PAIRS {
        let shp = load_shapefile(&fixture(&format!("{name}.shp")), &fixture(&format!("{name}.dbf")), level, "GEOID").unwrap();
        let gj = load_geojson(&fixture(&format!("{name}.geojson")), level, "GEOID").unwrap();
        assert_eq!(rings_of(&shp), rings_of(&gj), "{name}");
        for (k, s) in gj.iter() {
            assert_eq!(s.bbox(), shp.get(k).unwrap().bbox(), "{name} {k:?}");
        }
    }
}

#[test]
fn null_records_are_skipped() {
    let set = load_shapefile(&fixture("blockgroups.shp"), &fixture("blockgroups.dbf"), GeoLevel::BlockGroup, "GEOID").unwrap();
    assert_eq!(set.len(), 5);
}

#[test]
fn grid_bboxes_enclose_corners() {
    let set = load_geojson(&fixture("grid3.geojson"), GeoLevel::Tract, "GEOID").unwrap();
    assert_eq!(set.len(), 3);
    for (i, (_, s)) in set.iter().enumerate() {
        let b = s.bbox();
        assert_eq!((b.min_lon, b.min_lat, b.max_lon, b.max_lat), (i as f64, 0.0, i as f64 + 1.0, 1.0));
    }
}

#[test]
fn export_round_trips_every_fixture() {
    for (name, level) in PAIRS {
        let set = load_geojson(&fixture(&format!("{name}.geojson")), level, "GEOID").unwrap();
        let again = load_geojson(&to_geojson(&set, "GEOID"), level, "GEOID").unwrap();
        assert_eq!(set, again, "{name}");
    }
}

#[test]
fn malformed_shapefiles_raise_specific_errors() {
    let dbf = fixture("grid3.dbf");
    let shp = fixture("grid3.shp");
    let t = GeoLevel::Tract;
    assert!(matches!(load_shapefile(&fixture("bad_filecode.shp"), &dbf, t, "GEOID"), Err(BoundaryError::BadFileCode(9995))));
    assert!(matches!(
        load_shapefile(&fixture("points.shp"), &fixture("points.dbf"), t, "GEOID"),
        Err(BoundaryError::UnsupportedShapeType(1))
    ));
    assert!(matches!(load_shapefile(&shp, &fixture("bad_version.dbf"), t, "GEOID"), Err(BoundaryError::UnsupportedDbfVersion(0x30))));
    assert!(matches!(load_shapefile(&shp, &dbf, t, "TRACTCE"), Err(BoundaryError::DbfFieldMissing(_))));
    assert!(matches!(
        load_shapefile(&shp, &fixture("short_dbf.dbf"), t, "GEOID"),
        Err(BoundaryError::RecordCountMismatch { shp: 3, dbf: 2 })
    ));
    assert!(matches!(load_shapefile(&fixture("truncated.shp"), &dbf, t, "GEOID"), Err(BoundaryError::Truncated(_))));
}

#[test]
fn malformed_geojson_raise_specific_errors() {
    let t = GeoLevel::Tract;
    assert!(matches!(load_geojson(&fixture("broken.geojson"), t, "GEOID"), Err(BoundaryError::MalformedJson(_))));
    assert!(matches!(
        load_geojson(&fixture("linestring.geojson"), t, "GEOID"),
        Err(BoundaryError::UnsupportedGeometry { .. })
    ));
    assert!(matches!(load_geojson(&fixture("no_id.geojson"), t, "GEOID"), Err(BoundaryError::MissingIdProperty { .. })));
    assert!(matches!(load_geojson(&fixture("duplicate.geojson"), t, "GEOID"), Err(BoundaryError::DuplicateKey(_))));
}
