use arealink_core::catalog::{CatalogFilter, CatalogStore, DatasetDescriptor, Domain, SpatialScale, ValueKind};
use arealink_core::ingest::{ingest_dataset, IngestManifest};
use arealink_core::{GeoKey, GeoLevel};
use proptest::prelude::*;
use rand::Rng;

fn store() -> (tempfile::TempDir, CatalogStore) {
    let dir = tempfile::tempdir().unwrap();
    let s = CatalogStore::open(dir.path()).unwrap();
    (dir, s)
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[test]
fn every_cell_survives_ingest_and_query() {
    let (_d, s) = store();
    let mut rng = arealink_testkit::rng(21);
    let vars: Vec<String> = (0..20).map(|i| format!("X{i:02}")).collect();
    let geos: Vec<String> = (0..100).map(|i| format!("12{:03}{:06}", 1 + i % 3, 100 * (i + 1))).collect();
    let mut grid: Vec<Vec<String>> = Vec::new();
    let mut csv = format!("GEOID,{}\n", vars.join(","));
    for g in &geos {
        let row: Vec<String> = (0..vars.len())
            .map(|v| match rng.random_range(0..10) {
                0 => "NA".to_string(),
                1 => "-999".to_string(),
                // shortest round-trip repr of a random double
                2..=5 => format!("{}", rng.random::<f64>() * 10f64.powi(rng.random_range(-8..8))),
                6 => format!("{:e}", rng.random_range(-1e300..1e300)),
                7 => rng.random_range(i64::MIN..i64::MAX).to_string(),
                _ => format!("v{v} \"q\", {}", rng.random_range(0..5)),
            })
            .collect();
        csv.push_str(g);
        for c in &row {
            csv.push(',');
            csv.push_str(&quote(c));
        }
        csv.push('\n');
        grid.push(row);
    }
    let desc = DatasetDescriptor::new("roundtrip", "Round trip", "Test org", 20, GeoLevel::Tract, Domain::SDoH);
    let report = ingest_dataset(&IngestManifest::new(desc, "GEOID", 2019), csv.as_bytes(), &s).unwrap();
    assert_eq!(report.rows_stored, 100);
    let na = grid.iter().flatten().filter(|c| *c == "NA" || *c == "-999").count();
    assert_eq!(report.na_cells, na);
    assert_eq!(report.values_stored, report.rows_stored * vars.len() - report.na_cells);

    let keys: Vec<GeoKey> = geos.iter().map(|g| GeoKey::new(GeoLevel::Tract, g).unwrap()).collect();
    let wide = s.query_values("roundtrip", 2019, &keys, None).unwrap();
    assert_eq!(wide.columns, vars);
    let mut compared = 0;
    for ((key, cells), want) in wide.rows.iter().zip(&grid) {
        assert!(geos.contains(&key.code().to_string()));
        for (got, want) in cells.iter().zip(want) {
            let want = if want == "NA" || want == "-999" { "" } else { want.as_str() };
            assert_eq!(got.as_bytes(), want.as_bytes());
            if !want.is_empty() && want.parse::<f64>().is_ok() {
                assert_eq!(got.parse::<f64>().unwrap().to_bits(), want.parse::<f64>().unwrap().to_bits());
            }
            compared += 1;
        }
    }
    assert_eq!(compared, 2_000);

    // persisted state is what a fresh handle sees
    let reopened = CatalogStore::open(s.root()).unwrap();
    assert_eq!(reopened.query_values("roundtrip", 2019, &keys, None).unwrap(), wide);
    let vs = reopened.variables("roundtrip").unwrap();
    assert_eq!(vs.len(), 20);
    assert!(vs.iter().all(|v| v.value_kind == ValueKind::Text || v.value_kind == ValueKind::Categorical || v.value_kind == ValueKind::Numeric));
}

#[test]
fn reingest_is_refused_and_catalog_unchanged() {
    let (_d, s) = store();
    let desc = DatasetDescriptor::new("once", "Once", "Org", 0, GeoLevel::County, Domain::Environment);
    let m = IngestManifest::new(desc, "fips", 2021);
    ingest_dataset(&m, b"fips,a\n12001,1\n", &s).unwrap();
    let before = s.load_year("once", 2021).unwrap().get(&GeoKey::new(GeoLevel::County, "12001").unwrap(), 0).map(str::to_string);
    assert!(ingest_dataset(&m, b"fips,a\n12001,2\n", &s).is_err());
    let after = s.load_year("once", 2021).unwrap().get(&GeoKey::new(GeoLevel::County, "12001").unwrap(), 0).map(str::to_string);
    assert_eq!(before, after);
    let listed = s.list_catalog(&CatalogFilter { scale: Some(SpatialScale::from(GeoLevel::County)), ..Default::default() }).unwrap();
    assert_eq!(listed.len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn arbitrary_values_round_trip(
        cells in proptest::collection::vec(proptest::collection::vec("[ -~]{0,12}", 3), 1..30),
    ) {
        let (_d, s) = store();
        let desc = DatasetDescriptor::new("prop", "Prop", "Org", 3, GeoLevel::County, Domain::SDoH);
        let mut csv = "fips,a,b,c\n".to_string();
        let mut keys = Vec::new();
        for (i, row) in cells.iter().enumerate() {
            let code = format!("{:05}", 1000 + i);
            keys.push(GeoKey::new(GeoLevel::County, &code).unwrap());
            csv.push_str(&code);
            for c in row {
                csv.push(',');
                csv.push_str(&format!("\"{}\"", c.replace('"', "\"\"")));
            }
            csv.push('\n');
        }
        let report = ingest_dataset(&IngestManifest::new(desc, "fips", 2020), csv.as_bytes(), &s).unwrap();
        let na = ["", "NA", "NULL", ".", "-999"];
        let expected_na = cells.iter().flatten().filter(|c| na.contains(&c.trim())).count();
        prop_assert_eq!(report.na_cells, expected_na);
        prop_assert_eq!(report.values_stored, cells.len() * 3 - expected_na);
        let wide = s.query_values("prop", 2020, &keys, None).unwrap();
        for ((_, got), want) in wide.rows.iter().zip(&cells) {
            for (g, w) in got.iter().zip(want) {
                let w = if na.contains(&w.trim()) { "" } else { w.as_str() };
                prop_assert_eq!(g.as_str(), w);
            }
        }
    }
}
