//! `arealink`: boundary ingest, point resolution and cohort linkage on the
//! local machine. Only `serve` ever opens a socket.
//!
//! Exit codes: 0 success, 1 usage or engine error, 2 I/O fault or panic.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use arealink_core::catalog::{Domain, SpatialScale};
use arealink_core::GeoLevel;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "arealink", version, about = "Area-level catalog, census geography resolution and cohort linkage")]
pub struct Cli {
    /// Worker threads for batch resolution and linkage (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Boundary layers.
    #[command(subcommand)]
    Boundaries(BoundariesCommand),
    /// Area-level datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// The dataset registry.
    #[command(subcommand)]
    Catalog(CatalogCommand),
    /// Append census keys to a CSV of coordinates.
    Resolve(ResolveArgs),
    /// Link a cohort file to catalog datasets and write the result archive.
    Link(LinkArgs),
    /// Run the HTTP task service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum BoundariesCommand {
    /// Load a shapefile or GeoJSON layer, validate it and write a spatial index.
    Ingest(BoundaryIngestArgs),
}

#[derive(Debug, Args)]
pub struct BoundaryIngestArgs {
    /// `.shp` or `.geojson` / `.json`.
    #[arg(long)]
    pub input: PathBuf,
    /// Attribute table for a shapefile; defaults to the `.dbf` next to it.
    #[arg(long)]
    pub dbf: Option<PathBuf>,
    #[arg(long)]
    pub level: GeoLevel,
    #[arg(long, default_value = "GEOID")]
    pub id_field: String,
    #[arg(long)]
    pub vintage: Option<String>,
    /// Directory that receives the index file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Ingest one CSV according to a JSON manifest; prints the ingest report.
    Ingest {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum CatalogCommand {
    /// List registered datasets, optionally filtered.
    List {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        scale: Option<SpatialScale>,
        #[arg(long)]
        year: Option<i32>,
        #[arg(long)]
        domain: Option<Domain>,
        #[arg(long)]
        json: bool,
    },
    /// Register the built-in dataset descriptors in an empty catalog.
    Seed {
        #[arg(long)]
        catalog: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ResolveArgs {
    /// Directory (or file) holding a boundary index.
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, requires = "lat")]
    pub lon: Option<String>,
    #[arg(long, requires = "lon")]
    pub lat: Option<String>,
}

#[derive(Debug, Args)]
pub struct LinkArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    /// Selection JSON, inline or as a file path.
    #[arg(long)]
    pub select: String,
    /// Cohort CSV, or a ZIP holding one.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Boundary index, needed for coordinate cohorts.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Crosswalk manifest; repeatable.
    #[arg(long)]
    pub crosswalk: Vec<PathBuf>,
    #[arg(long, conflicts_with_all = ["lon", "lat"])]
    pub key_column: Option<String>,
    #[arg(long, requires = "key_column")]
    pub key_level: Option<GeoLevel>,
    #[arg(long, requires = "lat")]
    pub lon: Option<String>,
    #[arg(long, requires = "lon")]
    pub lat: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(move || commands::run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(fail)) => {
            eprintln!("error: {fail}");
            ExitCode::from(fail.code())
        }
        // the panic hook has already printed the message
        Err(_) => ExitCode::from(2),
    }
}
