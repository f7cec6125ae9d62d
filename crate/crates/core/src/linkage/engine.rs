use std::collections::HashSet;
use std::io::Write;
use std::time::Instant;

use super::cohort::{Cohort, KeyMode};
use super::{
    DatasetSummary, LinkError, LinkSelection, LinkStatus, LinkSummary, ResolverContext, StatusCounts, VariableSet,
};
use crate::catalog::{CatalogStore, SpatialScale, VariableDescriptor, YearTable};
use crate::exec::Execution;
use crate::geo::{parent, parse_geo_key, GeoKey, GeoLevel, LonLat};
use crate::spatial::{resolve_batch_with, Crosswalk};

#[derive(Debug, Clone, Copy, Default)]
pub struct LinkOptions {
    pub execution: Execution,
}

/// How a dataset-scale key is derived from the cohort's base key.
#[derive(Clone, Copy)]
enum Route<'a> {
    Same,
    Parent(GeoLevel),
    Crosswalk(&'a Crosswalk),
}

impl Route<'_> {
    fn derive(self, base: GeoKey) -> Option<GeoKey> {
        match self {
            Route::Same => Some(base),
            Route::Parent(level) => parent(base, level).ok(),
            Route::Crosswalk(xw) => xw.best_target(&base),
        }
    }
}

/// Per-row base resolution shared by every dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Base {
    Key(GeoKey),
    Bad,
    Unmatched,
}

#[derive(Debug)]
struct LinkedDataset {
    id: String,
    table: YearTable,
    cols: Vec<usize>,
    /// Derived key per row; only kept for crosswalk routes.
    derived: Option<Vec<Option<GeoKey>>>,
    hits: Vec<Option<u32>>,
    status: Vec<LinkStatus>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DictionaryRow {
    pub column: String,
    pub year: i32,
    pub variable: VariableDescriptor,
}

enum ResolvedCol {
    Level(GeoLevel),
    Derived(usize),
}

/// The joined cohort. Cells are read from the loaded year tables on demand
/// rather than copied.
pub struct LinkedTable {
    columns: Vec<String>,
    rows: Vec<csv::StringRecord>,
    base: Vec<Base>,
    resolved: Vec<ResolvedCol>,
    datasets: Vec<LinkedDataset>,
    dictionary: Vec<DictionaryRow>,
}

impl std::fmt::Debug for LinkedTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinkedTable").field("columns", &self.columns).field("rows", &self.rows.len()).finish()
    }
}

impl LinkedTable {
    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dataset_ids(&self) -> Vec<&str> {
        self.datasets.iter().map(|d| d.id.as_str()).collect()
    }

    /// Status of row `row` against the `dataset`-th selection entry.
    pub fn status(&self, row: usize, dataset: usize) -> LinkStatus {
        self.datasets[dataset].status[row]
    }

    pub(crate) fn dictionary(&self) -> &[DictionaryRow] {
        &self.dictionary
    }

    fn resolved_cell(&self, row: usize, col: &ResolvedCol) -> Option<GeoKey> {
        match col {
            ResolvedCol::Level(level) => match self.base[row] {
                Base::Key(k) if k.level() == *level => Some(k),
                Base::Key(k) => parent(k, *level).ok(),
                _ => None,
            },
            ResolvedCol::Derived(d) => self.datasets[*d].derived.as_ref().and_then(|v| v[row]),
        }
    }

    /// Every row as owned strings. Convenient for tests and small outputs.
    pub fn to_rows(&self) -> Vec<Vec<String>> {
        (0..self.len()).map(|i| self.row(i)).collect()
    }

    /// All cells of one output row, in column order.
    pub fn row(&self, i: usize) -> Vec<String> {
        let mut out = Vec::with_capacity(self.columns.len());
        out.extend(self.rows[i].iter().map(str::to_string));
        for col in &self.resolved {
            out.push(self.resolved_cell(i, col).map(|k| k.code().to_string()).unwrap_or_default());
        }
        for d in &self.datasets {
            let hit = d.hits[i];
            for &c in &d.cols {
                out.push(hit.and_then(|r| d.table.cell(r, c)).unwrap_or("").to_string());
            }
            out.push(d.status[i].as_str().to_string());
        }
        out
    }

    /// Writes the table as RFC 4180 CSV with a header row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<W, LinkError> {
        let out_err = |e: csv::Error| LinkError::Output(e.to_string());
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w);
        wtr.write_record(&self.columns).map_err(out_err)?;
        let mut keys: Vec<Option<GeoKey>> = Vec::with_capacity(self.resolved.len());
        for i in 0..self.len() {
            keys.clear();
            keys.extend(self.resolved.iter().map(|c| self.resolved_cell(i, c)));
            for f in self.rows[i].iter() {
                wtr.write_field(f).map_err(out_err)?;
            }
            for k in &keys {
                wtr.write_field(k.as_ref().map(|k| k.code()).unwrap_or("")).map_err(out_err)?;
            }
            for d in &self.datasets {
                let hit = d.hits[i];
                for &c in &d.cols {
                    wtr.write_field(hit.and_then(|r| d.table.cell(r, c)).unwrap_or("")).map_err(out_err)?;
                }
                wtr.write_field(d.status[i].as_str()).map_err(out_err)?;
            }
            wtr.write_record(None::<&[u8]>).map_err(out_err)?;
        }
        wtr.into_inner().map_err(|e| LinkError::Output(e.error().to_string()))
    }
}

fn unique_name(taken: &mut HashSet<String>, wanted: String) -> String {
    let mut name = wanted.clone();
    let mut n = 2;
    while !taken.insert(name.clone()) {
        name = format!("{wanted}_{n}");
        n += 1;
    }
    name
}

struct Plan<'a> {
    id: String,
    year: i32,
    scale: GeoLevel,
    route: Route<'a>,
    vars: Vec<VariableDescriptor>,
}

fn plan<'a>(
    selection: &LinkSelection,
    store: &CatalogStore,
    ctx: &'a ResolverContext,
    base_level: GeoLevel,
) -> Result<Vec<Plan<'a>>, LinkError> {
    if selection.entries.is_empty() {
        return Err(LinkError::EmptySelection);
    }
    let mut seen = HashSet::new();
    let mut plans = Vec::with_capacity(selection.entries.len());
    for e in &selection.entries {
        if !seen.insert(e.dataset_id.as_str()) {
            return Err(LinkError::DuplicateSelection(e.dataset_id.clone()));
        }
        let unknown = || LinkError::UnknownDatasetYear { dataset: e.dataset_id.clone(), year: e.year };
        let desc = store.descriptor(&e.dataset_id)?;
        if !desc.years.contains(&e.year) {
            return Err(unknown());
        }
        let SpatialScale::Level(scale) = desc.spatial_scale else {
            return Err(LinkError::PointScaleDataset(desc.id));
        };
        let registered = store.variables(&desc.id)?;
        let vars = match &e.variables {
            VariableSet::All => registered,
            VariableSet::Only(names) => {
                let mut picked = Vec::with_capacity(names.len());
                let mut dup = HashSet::new();
                for n in names {
                    let v = registered
                        .iter()
                        .find(|v| &v.name == n)
                        .ok_or_else(|| LinkError::UnknownVariable { dataset: desc.id.clone(), name: n.clone() })?;
                    if dup.insert(n.as_str()) {
                        picked.push(v.clone());
                    }
                }
                picked
            }
        };
        let route = if scale == base_level {
            Route::Same
        } else if scale.is_hierarchical() && base_level.is_hierarchical() {
            if scale.is_ancestor_or_self(base_level) {
                Route::Parent(scale)
            } else {
                return Err(LinkError::IncompatibleScale { dataset: desc.id, scale, key: base_level });
            }
        } else {
            match ctx.crosswalk(base_level, scale) {
                Some(xw) => Route::Crosswalk(xw),
                None => return Err(LinkError::MissingCrosswalk { dataset: desc.id, from: base_level, to: scale }),
            }
        };
        plans.push(Plan { id: desc.id, year: e.year, scale, route, vars });
    }
    Ok(plans)
}

fn base_level(cohort: &Cohort, ctx: &ResolverContext) -> Result<GeoLevel, LinkError> {
    match cohort.key_mode() {
        KeyMode::FipsColumn { level, .. } => Ok(*level),
        KeyMode::LonLatColumns { .. } => Ok(ctx.index.as_ref().ok_or(LinkError::MissingIndex)?.level()),
    }
}

/// Runs every selection check `link` performs, without loading values.
pub fn validate_selection(
    cohort: &Cohort,
    selection: &LinkSelection,
    store: &CatalogStore,
    ctx: &ResolverContext,
) -> Result<(), LinkError> {
    plan(selection, store, ctx, base_level(cohort, ctx)?).map(|_| ())
}

/// Joins `cohort` against every selected dataset.
pub fn link(
    cohort: &Cohort,
    selection: &LinkSelection,
    store: &CatalogStore,
    ctx: &ResolverContext,
    options: &LinkOptions,
) -> Result<(LinkedTable, LinkSummary), LinkError> {
    let started = Instant::now();
    let exec = options.execution;
    let base_level = base_level(cohort, ctx)?;
    let plans = plan(selection, store, ctx, base_level)?;
    let tables: Vec<YearTable> = plans.iter().map(|p| store.load_year(&p.id, p.year)).collect::<Result<_, _>>()?;

    let n = cohort.len();
    let base: Vec<Base> = match cohort.key_mode() {
        KeyMode::FipsColumn { level, .. } => exec.map_range(n, |i| match parse_geo_key(cohort.key_cells(i).0, *level, true) {
            Ok(k) => Base::Key(k),
            Err(_) => Base::Bad,
        }),
        KeyMode::LonLatColumns { .. } => {
            let index = ctx.index.as_ref().expect("checked above");
            let parsed: Vec<Option<LonLat>> = exec.map_range(n, |i| {
                let (lon, lat) = cohort.key_cells(i);
                LonLat::parse(lon, lat.unwrap_or("")).ok()
            });
            let valid: Vec<LonLat> = parsed.iter().flatten().copied().collect();
            let mut hits = resolve_batch_with(index, &valid, exec).into_iter();
            parsed
                .iter()
                .map(|p| match p {
                    None => Base::Bad,
                    Some(_) => match hits.next().expect("one result per valid point") {
                        Some(k) => Base::Key(k),
                        None => Base::Unmatched,
                    },
                })
                .collect()
        }
    };

    let mut taken: HashSet<String> = HashSet::new();
    let mut columns: Vec<String> = cohort.columns().iter().map(|c| unique_name(&mut taken, c.clone())).collect();
    let mut resolved = Vec::new();
    if base_level.is_hierarchical() {
        for level in [GeoLevel::BlockGroup, GeoLevel::Tract, GeoLevel::County, GeoLevel::State] {
            if level.is_ancestor_or_self(base_level) {
                resolved.push(ResolvedCol::Level(level));
                columns.push(unique_name(&mut taken, format!("fips_{level}")));
            }
        }
    } else {
        resolved.push(ResolvedCol::Level(base_level));
        columns.push(unique_name(&mut taken, format!("fips_{base_level}")));
    }
    let mut xw_levels = HashSet::new();
    for (d, p) in plans.iter().enumerate() {
        if matches!(p.route, Route::Crosswalk(_)) && xw_levels.insert(p.scale) {
            resolved.push(ResolvedCol::Derived(d));
            columns.push(unique_name(&mut taken, format!("fips_{}", p.scale)));
        }
    }

    let mut datasets = Vec::with_capacity(plans.len());
    let mut dictionary = Vec::new();
    let mut summaries = Vec::with_capacity(plans.len());
    let mut totals = StatusCounts::default();
    for (p, table) in plans.into_iter().zip(tables) {
        let cols: Vec<usize> =
            p.vars.iter().map(|v| table.variable_index(&v.name).expect("variable registered for table")).collect();
        for v in &p.vars {
            let column = unique_name(&mut taken, format!("{}.{}", p.id, v.name));
            columns.push(column.clone());
            dictionary.push(DictionaryRow { column, year: p.year, variable: v.clone() });
        }
        columns.push(unique_name(&mut taken, format!("{}.link_status", p.id)));

        let route = p.route;
        let per_row: Vec<(Option<GeoKey>, Option<u32>, LinkStatus)> = exec.map_range(n, |i| match base[i] {
            Base::Bad => (None, None, LinkStatus::BadKey),
            Base::Unmatched => (None, None, LinkStatus::UnmatchedGeometry),
            Base::Key(k) => match route.derive(k) {
                None => (None, None, LinkStatus::UnmatchedGeometry),
                Some(key) => match table.row_of(&key) {
                    Some(r) if cols.is_empty() || cols.iter().any(|&c| table.cell(r, c).is_some()) => {
                        (Some(key), Some(r), LinkStatus::Matched)
                    }
                    _ => (Some(key), None, LinkStatus::NoDataForGeo),
                },
            },
        });
        let mut counts = StatusCounts::default();
        let mut hits = Vec::with_capacity(n);
        let mut status = Vec::with_capacity(n);
        let mut derived = matches!(route, Route::Crosswalk(_)).then(|| Vec::with_capacity(n));
        for (key, hit, s) in per_row {
            counts.add(s);
            totals.add(s);
            hits.push(hit);
            status.push(s);
            if let Some(d) = derived.as_mut() {
                d.push(key);
            }
        }
        summaries.push(DatasetSummary {
            dataset_id: p.id.clone(),
            year: p.year,
            scale: p.scale,
            variables: cols.len(),
            counts,
        });
        datasets.push(LinkedDataset { id: p.id, table, cols, derived, hits, status });
    }

    let table = LinkedTable { columns, rows: cohort.rows().to_vec(), base, resolved, datasets, dictionary };
    let summary = LinkSummary {
        rows: n,
        key_mode: cohort.key_mode().to_string(),
        detection: cohort.detection(),
        datasets: summaries,
        totals,
        elapsed_ms: started.elapsed().as_millis() as u64,
    };
    Ok((table, summary))
}
