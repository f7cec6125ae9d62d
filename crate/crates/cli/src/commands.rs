use std::error::Error;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use arealink_core::boundary::{load_geojson, load_shapefile, validate_boundaries};
use arealink_core::catalog::{CatalogFilter, CatalogStore};
use arealink_core::ingest::{ingest_dataset, seed_table1_registry, IngestManifest};
use arealink_core::linkage::{link_archive, parse_cohort, KeyMode, KeySpec, LinkOptions, LinkStatus, ResolverContext};
use arealink_core::spatial::{build_index, resolve_batch, Crosswalk, SpatialError, SpatialIndex};
use arealink_core::{parent, GeoKey, GeoLevel, LonLat};
use arealink_service::api::parse_selection;
use arealink_service::{ServiceConfig, ServiceError};

use crate::{BoundariesCommand, BoundaryIngestArgs, CatalogCommand, Cli, Command, DatasetCommand, LinkArgs, ResolveArgs};

/// Why a command stopped. `User` covers bad input and every engine
/// rejection; `Internal` is reserved for the filesystem and the runtime.
#[derive(Debug)]
pub enum Fail {
    User(String),
    Internal(String),
}

impl Fail {
    pub fn code(&self) -> u8 {
        match self {
            Fail::User(_) => 1,
            Fail::Internal(_) => 2,
        }
    }

    fn user(msg: impl fmt::Display) -> Self {
        Fail::User(msg.to_string())
    }

    /// Engine errors are the caller's problem unless an I/O error sits
    /// somewhere in the source chain.
    fn engine(e: impl Error) -> Self {
        let mut src = e.source();
        while let Some(s) = src {
            if s.is::<io::Error>() {
                return Fail::Internal(e.to_string());
            }
            src = s.source();
        }
        Fail::User(e.to_string())
    }
}

impl fmt::Display for Fail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fail::User(m) | Fail::Internal(m) => f.write_str(m),
        }
    }
}

type Result<T> = std::result::Result<T, Fail>;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Fail::Internal(format!("{}: {e}", path.display())))
}

/// Writes through a sibling temp file so a failed run never leaves a
/// truncated output behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |e: io::Error| Fail::Internal(format!("{}: {e}", path.display()));
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Fail::Internal(e.to_string()))?;
    }
    match cli.command {
        Command::Boundaries(BoundariesCommand::Ingest(args)) => boundaries_ingest(args),
        Command::Dataset(DatasetCommand::Ingest { catalog, manifest, input }) => dataset_ingest(&catalog, &manifest, &input),
        Command::Catalog(CatalogCommand::List { catalog, scale, year, domain, json }) => {
            catalog_list(&catalog, CatalogFilter { scale, year, domain }, json)
        }
        Command::Catalog(CatalogCommand::Seed { catalog }) => {
            let store = CatalogStore::open(&catalog).map_err(Fail::engine)?;
            let n = seed_table1_registry(&store).map_err(Fail::engine)?;
            log::info!("registered {n} datasets in {}", catalog.display());
            Ok(())
        }
        Command::Resolve(args) => resolve(args),
        Command::Link(args) => link(args),
        Command::Serve { config } => serve(&config),
    }
}

fn boundaries_ingest(args: BoundaryIngestArgs) -> Result<()> {
    let ext = args.input.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let mut set = match ext.as_str() {
        "shp" => {
            let dbf = args.dbf.clone().unwrap_or_else(|| args.input.with_extension("dbf"));
            load_shapefile(&read(&args.input)?, &read(&dbf)?, args.level, &args.id_field)
        }
        "geojson" | "json" => load_geojson(&read(&args.input)?, args.level, &args.id_field),
        _ => return Err(Fail::user(format!("{}: expected a .shp, .geojson or .json file", args.input.display()))),
    }
    .map_err(Fail::engine)?;
    if let Some(v) = &args.vintage {
        set.set_vintage(v.as_str());
    }
    let report = validate_boundaries(&mut set);
    for issue in &report.issues {
        log::warn!("{issue:?}");
    }
    if report.has_errors() {
        return Err(Fail::user(format!(
            "InvalidBoundaries: {} of {} issues are errors; no index written",
            report.issues.iter().filter(|i| i.kind.is_error()).count(),
            report.issues.len()
        )));
    }
    let index = build_index(&set).map_err(Fail::engine)?;
    fs::create_dir_all(&args.out).map_err(|e| Fail::Internal(format!("{}: {e}", args.out.display())))?;
    let path = index.save(&args.out).map_err(|e| Fail::Internal(e.to_string()))?;
    let out = serde_json::json!({
        "index": path,
        "level": set.level(),
        "vintage": set.vintage(),
        "polygons": index.len(),
        "issues": report.issues,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("plain json"));
    Ok(())
}

fn dataset_ingest(catalog: &Path, manifest: &Path, input: &Path) -> Result<()> {
    let manifest = IngestManifest::from_json(&read(manifest)?).map_err(Fail::engine)?;
    let store = CatalogStore::open(catalog).map_err(Fail::engine)?;
    let report = ingest_dataset(&manifest, &read(input)?, &store).map_err(Fail::engine)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("plain json"));
    Ok(())
}

fn catalog_list(catalog: &Path, filter: CatalogFilter, json: bool) -> Result<()> {
    let store = CatalogStore::open(catalog).map_err(Fail::engine)?;
    let list = store.list_catalog(&filter).map_err(Fail::engine)?;
    let mut out = io::stdout().lock();
    let io = |e: io::Error| Fail::Internal(format!("stdout: {e}"));
    if json {
        serde_json::to_writer_pretty(&mut out, &list).map_err(|e| Fail::Internal(e.to_string()))?;
        writeln!(out).map_err(io)?;
        return Ok(());
    }
    writeln!(out, "{:<28} {:<10} {:>9} {:<12} {:<16} NAME", "ID", "SCALE", "VARIABLES", "DOMAIN", "YEARS").map_err(io)?;
    for d in &list {
        let years = match (d.years.first(), d.years.last()) {
            (Some(a), Some(b)) if a != b => format!("{a}-{b}"),
            (Some(a), _) => a.to_string(),
            _ => "-".into(),
        };
        writeln!(
            out,
            "{:<28} {:<10} {:>9} {:<12} {:<16} {}",
            d.id,
            d.spatial_scale.to_string(),
            d.variable_count,
            d.domain.to_string(),
            years,
            d.display_name
        )
        .map_err(io)?;
    }
    Ok(())
}

fn load_index(path: &Path) -> Result<SpatialIndex> {
    SpatialIndex::load(path).map_err(|e| match e {
        SpatialError::Io(_) => Fail::Internal(e.to_string()),
        _ => Fail::user(format!("{}: {e}", path.display())),
    })
}

fn ancestor(key: &GeoKey, level: GeoLevel) -> String {
    parent(*key, level).map(|k| k.code().to_string()).unwrap_or_default()
}

fn resolve(args: ResolveArgs) -> Result<()> {
    let index = load_index(&args.index)?;
    let spec = match (args.lon, args.lat) {
        (Some(lon), Some(lat)) => KeySpec::LonLat { lon, lat },
        _ => KeySpec::Auto,
    };
    let cohort = parse_cohort(&read(&args.input)?, &spec).map_err(Fail::engine)?;
    if let KeyMode::FipsColumn { name, .. } = cohort.key_mode() {
        return Err(Fail::user(format!("NoCoordinates: resolve needs lon/lat columns, found FIPS column {name:?}")));
    }
    let parsed: Vec<Option<LonLat>> = (0..cohort.len())
        .map(|i| {
            let (lon, lat) = cohort.key_cells(i);
            LonLat::parse(lon, lat.unwrap_or("")).ok()
        })
        .collect();
    let valid: Vec<LonLat> = parsed.iter().flatten().copied().collect();
    let mut hits = resolve_batch(&index, &valid).into_iter();

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Fail::Internal(e.to_string());
    let mut header: Vec<&str> = cohort.columns().iter().map(String::as_str).collect();
    header.extend(["fips_tract", "fips_county", "fips_state", "match_status"]);
    w.write_record(&header).map_err(csv_err)?;
    let mut matched = 0usize;
    for (i, p) in parsed.iter().enumerate() {
        let mut rec: Vec<String> = cohort.row(i).iter().map(str::to_string).collect();
        rec.resize(cohort.columns().len(), String::new());
        let (keys, status) = match p.map(|_| hits.next().flatten()) {
            None => ([String::new(), String::new(), String::new()], LinkStatus::BadKey),
            Some(None) => ([String::new(), String::new(), String::new()], LinkStatus::UnmatchedGeometry),
            Some(Some(k)) => {
                matched += 1;
                ([ancestor(&k, GeoLevel::Tract), ancestor(&k, GeoLevel::County), ancestor(&k, GeoLevel::State)], LinkStatus::Matched)
            }
        };
        rec.extend(keys);
        rec.push(status.as_str().to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Fail::Internal(e.to_string()))?;
    match &args.out {
        Some(path) => write_atomic(path, &bytes)?,
        None => io::stdout().lock().write_all(&bytes).map_err(|e| Fail::Internal(format!("stdout: {e}")))?,
    }
    log::info!("resolved {matched} of {} rows against {} {} polygons", cohort.len(), index.len(), index.level());
    Ok(())
}

fn selection_text(select: &str) -> Result<String> {
    let t = select.trim_start();
    if t.starts_with('{') || t.starts_with('[') {
        return Ok(select.to_string());
    }
    let path = PathBuf::from(select);
    String::from_utf8(read(&path)?).map_err(|_| Fail::user(format!("{select}: selection file is not UTF-8")))
}

fn link(args: LinkArgs) -> Result<()> {
    let selection = parse_selection(&selection_text(&args.select)?).map_err(Fail::engine)?;
    let spec = match (args.key_column, args.lon, args.lat) {
        (Some(column), _, _) => KeySpec::Fips { column, level: args.key_level },
        (None, Some(lon), Some(lat)) => KeySpec::LonLat { lon, lat },
        _ => KeySpec::Auto,
    };
    let store = CatalogStore::open(&args.catalog).map_err(Fail::engine)?;
    let mut ctx = ResolverContext::new();
    if let Some(p) = &args.index {
        ctx.index = Some(load_index(p)?);
    }
    for p in &args.crosswalk {
        ctx.add_crosswalk(Crosswalk::load(p).map_err(|e| match e {
            SpatialError::Io(_) => Fail::Internal(e.to_string()),
            _ => Fail::user(format!("{}: {e}", p.display())),
        })?);
    }
    let upload = read(&args.input)?;
    let (bytes, summary) = link_archive(&upload, &spec, &selection, &store, &ctx, &LinkOptions::default()).map_err(Fail::engine)?;
    write_atomic(&args.out, &bytes)?;
    log::info!(
        "linked {} rows to {} datasets ({} matched cells) into {}",
        summary.rows,
        summary.datasets.len(),
        summary.totals.get(LinkStatus::Matched),
        args.out.display()
    );
    Ok(())
}

fn serve(config: &Path) -> Result<()> {
    let config = ServiceConfig::load(config).map_err(Fail::engine)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| Fail::Internal(e.to_string()))?;
    rt.block_on(arealink_service::serve(config)).map_err(|e| match e {
        ServiceError::Io(_) => Fail::Internal(e.to_string()),
        _ => Fail::User(e.to_string()),
    })
}
