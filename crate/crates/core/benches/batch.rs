use std::hint::black_box;

use arealink_core::catalog::{CatalogStore, DatasetDescriptor, Domain};
use arealink_core::ingest::{ingest_dataset, IngestManifest};
use arealink_core::linkage::{link, parse_cohort, KeySpec, LinkOptions, LinkSelection, ResolverContext, SelectionEntry};
use arealink_core::spatial::{build_index, resolve_batch_with};
use arealink_core::{Execution, LonLat};
use arealink_testkit::geometry::Mesh;
use arealink_testkit::link_oracle::random_instance;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn resolve(c: &mut Criterion) {
    let mesh = Mesh::florida_like(10_000);
    let index = build_index(&mesh.boundary_set()).unwrap();
    let points: Vec<LonLat> = mesh
        .random_points(20_000, &mut arealink_testkit::rng(5))
        .into_iter()
        .map(|(x, y)| LonLat::new(x, y).unwrap())
        .collect();
    let mut g = c.benchmark_group("resolve_batch_20k");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| resolve_batch_with(&index, black_box(&points), exec))
        });
    }
    g.finish();
}

fn linkage(c: &mut Criterion) {
    let inst = random_instance(5, 20_000);
    let dir = tempfile::tempdir().unwrap();
    let store = CatalogStore::open(dir.path()).unwrap();
    let mut entries = Vec::new();
    for d in &inst.datasets {
        let desc = DatasetDescriptor::new(&d.id, &d.id, "bench", 0, d.level, Domain::SDoH);
        ingest_dataset(&IngestManifest::new(desc, &d.geo_column, d.year), &d.to_csv(), &store).unwrap();
        entries.push(SelectionEntry::all(&d.id, d.year));
    }
    let selection = LinkSelection::new(entries);
    let cohort = parse_cohort(&inst.cohort.to_csv(), &KeySpec::Auto).unwrap();
    let ctx = ResolverContext::new();
    let mut g = c.benchmark_group("link_20k");
    for (name, execution) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &execution, |b, &execution| {
            b.iter(|| link(&cohort, &selection, &store, &ctx, &LinkOptions { execution }).unwrap())
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = resolve, linkage
}
criterion_main!(benches);
