#![allow(dead_code)]

use std::sync::Arc;

use arealink_core::catalog::{CatalogStore, DatasetDescriptor, Domain};
use arealink_core::ingest::{ingest_dataset, IngestManifest};
use arealink_core::GeoLevel;
use arealink_service::{ManualClock, Service, ServiceConfig};
use axum::body::Body;
use axum::http::Request;
use chrono::{DateTime, TimeZone, Utc};

pub const TOKEN_A: &str = "token-a-0123456789abcdef";
pub const TOKEN_B: &str = "token-b-0123456789abcdef";
pub const BOUNDARY: &str = "----arealink-test-boundary";

pub const COHORT: &[u8] = b"person_id,fips\n1,12001000100\n2,12001000200\n3,bad\n4,12003000100\n";

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 3, 1, 12, 0, 0).unwrap()
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub clock: Arc<ManualClock>,
    pub service: Service,
    pub config: ServiceConfig,
}

pub fn seed_catalog(root: &std::path::Path) {
    let store = CatalogStore::open(root).unwrap();
    let svi = DatasetDescriptor::new("svi", "Social Vulnerability Index (SVI)", "CDC", 2, GeoLevel::Tract, Domain::SDoH);
    ingest_dataset(
        &IngestManifest::new(svi, "FIPS", 2020),
        b"FIPS,RPL_THEMES,E_TOTPOP\n12001000100,0.53,4012\n12001000200,NA,15\n",
        &store,
    )
    .unwrap();
    let food = DatasetDescriptor::new("food_env", "Food Environment Atlas", "USDA", 1, GeoLevel::County, Domain::SDoH);
    ingest_dataset(&IngestManifest::new(food, "fips", 2020), b"fips,GROCPTH\n12001,0.2\n", &store).unwrap();
}

pub fn config_in(dir: &std::path::Path, extra: &str) -> ServiceConfig {
    let tokens = format!(
        "[[tokens]]\ntoken = \"{TOKEN_A}\"\nowner = \"site-a\"\n\n[[tokens]]\ntoken = \"{TOKEN_B}\"\nowner = \"site-b\"\n"
    );
    std::fs::write(dir.join("tokens.toml"), tokens).unwrap();
    let text = format!("data_dir = \"tasks\"\ncatalog_dir = \"catalog\"\ntoken_file = \"tokens.toml\"\n{extra}");
    ServiceConfig::from_toml(&text, dir).unwrap()
}

pub fn fixture_with(extra: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    seed_catalog(&dir.path().join("catalog"));
    let config = config_in(dir.path(), extra);
    let clock = Arc::new(ManualClock::new(t0()));
    let service = Service::build(&config, clock.clone()).unwrap();
    Fixture { dir, clock, service, config }
}

pub fn fixture() -> Fixture {
    fixture_with("")
}

pub fn multipart(parts: &[(&str, Option<&str>, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, filename, data) in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        match filename {
            Some(f) => body.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"{f}\"\r\nContent-Type: text/csv\r\n\r\n")
                    .as_bytes(),
            ),
            None => body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes()),
        }
        body.extend_from_slice(data);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

pub fn submit_request(token: Option<&str>, cohort: &[u8], selection: &str) -> Request<Body> {
    let body = multipart(&[("file", Some("cohort.csv"), cohort), ("selection", None, selection.as_bytes())]);
    let mut b = Request::post("/api/tasks")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .header("content-length", body.len());
    if let Some(t) = token {
        b = b.header("authorization", format!("Bearer {t}"));
    }
    b.body(Body::from(body)).unwrap()
}

pub fn get(token: Option<&str>, uri: &str) -> Request<Body> {
    let mut b = Request::get(uri);
    if let Some(t) = token {
        b = b.header("authorization", format!("Bearer {t}"));
    }
    b.body(Body::empty()).unwrap()
}

pub const SVI_SELECTION: &str = r#"{"entries":[{"dataset_id":"svi","year":2020,"variables":"ALL"},{"dataset_id":"food_env","year":2020}]}"#;
