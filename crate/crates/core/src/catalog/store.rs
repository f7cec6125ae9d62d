use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use super::table::{WideTable, YearTable};
use super::{CatalogError, DatasetDescriptor, Domain, SpatialScale, ValueRecord, VariableDescriptor};
use crate::geo::GeoKey;

const MANIFEST: &str = "manifest.json";
const VARIABLES: &str = "variables.csv";
const VALUES_DIR: &str = "values";
pub(crate) const VARIABLES_HEADER: [&str; 5] = ["name", "description", "unit", "value_kind", "concept_code"];
pub(crate) const VALUES_HEADER: [&str; 4] = ["geo_code", "variable", "value", "quality_flag"];

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Conjunctive catalog filter; `None` fields match everything.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CatalogFilter {
    pub scale: Option<SpatialScale>,
    pub year: Option<i32>,
    pub domain: Option<Domain>,
}

/// File-backed catalog. One writer per dataset at a time; readers only ever
/// see files that were renamed into place whole.
#[derive(Debug)]
pub struct CatalogStore {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CatalogError + '_ {
    move |source| CatalogError::Io { path: path.display().to_string(), source }
}

fn corrupt(path: &Path, message: impl ToString) -> CatalogError {
    CatalogError::Corrupt { path: path.display().to_string(), message: message.to_string() }
}

fn tmp_path(path: &Path) -> PathBuf {
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("file");
    path.with_file_name(format!(".{name}.tmp-{}-{n}", std::process::id()))
}

/// Writes `bytes` next to `path` and renames over it.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CatalogError> {
    let tmp = tmp_path(path);
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.map_err(io_err(path))
}

fn opt(s: &str) -> Option<String> {
    if s.is_empty() {
        None
    } else {
        Some(s.to_string())
    }
}

impl CatalogStore {
    /// Opens (creating if needed) a catalog rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CatalogError> {
        let root = root.into();
        let datasets = root.join("datasets");
        fs::create_dir_all(&datasets).map_err(io_err(&datasets))?;
        Ok(CatalogStore { root, locks: Mutex::new(HashMap::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dataset_dir(&self, id: &str) -> PathBuf {
        self.root.join("datasets").join(id)
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks.lock().unwrap().entry(id.to_string()).or_default().clone()
    }

    fn require_dir(&self, id: &str) -> Result<PathBuf, CatalogError> {
        let dir = self.dataset_dir(id);
        let safe = !id.is_empty() && !id.contains(['/', '\\']) && !id.starts_with('.');
        if safe && dir.join(MANIFEST).is_file() {
            Ok(dir)
        } else {
            Err(CatalogError::UnknownDataset(id.to_string()))
        }
    }

    /// Adds a dataset to the registry.
    pub fn register_source(&self, d: &DatasetDescriptor) -> Result<String, CatalogError> {
        d.validate()?;
        let lock = self.lock(&d.id);
        let _guard = lock.lock().unwrap();
        let dir = self.dataset_dir(&d.id);
        if dir.exists() {
            return Err(CatalogError::DuplicateId(d.id.clone()));
        }
        // Stage the whole directory, then rename it into place.
        let staging = tmp_path(&dir);
        let res = (|| {
            fs::create_dir_all(staging.join(VALUES_DIR)).map_err(io_err(&staging))?;
            let mut desc = d.clone();
            desc.years.sort_unstable();
            desc.years.dedup();
            write_atomic(&staging.join(MANIFEST), &manifest_bytes(&desc))?;
            write_atomic(&staging.join(VARIABLES), &variables_bytes(&[]))?;
            fs::rename(&staging, &dir).map_err(io_err(&dir))
        })();
        if res.is_err() {
            let _ = fs::remove_dir_all(&staging);
        }
        res.map(|_| d.id.clone())
    }

    pub fn descriptor(&self, id: &str) -> Result<DatasetDescriptor, CatalogError> {
        let path = self.require_dir(id)?.join(MANIFEST);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        serde_json::from_slice(&bytes).map_err(|e| corrupt(&path, e))
    }

    fn write_descriptor(&self, d: &DatasetDescriptor) -> Result<(), CatalogError> {
        write_atomic(&self.dataset_dir(&d.id).join(MANIFEST), &manifest_bytes(d))
    }

    pub(crate) fn set_variable_count(&self, id: &str, count: u32) -> Result<(), CatalogError> {
        let lock = self.lock(id);
        let _guard = lock.lock().unwrap();
        let mut d = self.descriptor(id)?;
        d.variable_count = count;
        self.write_descriptor(&d)
    }

    /// Variable index rows, in registration order.
    pub fn variables(&self, id: &str) -> Result<Vec<VariableDescriptor>, CatalogError> {
        let path = self.require_dir(id)?.join(VARIABLES);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let mut rdr = csv::Reader::from_reader(bytes.as_slice());
        let mut out = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| corrupt(&path, e))?;
            if rec.len() != VARIABLES_HEADER.len() {
                return Err(corrupt(&path, "wrong column count"));
            }
            out.push(VariableDescriptor {
                dataset_id: id.to_string(),
                name: rec[0].to_string(),
                description: rec[1].to_string(),
                unit: opt(&rec[2]),
                value_kind: rec[3].parse().map_err(|e: String| corrupt(&path, e))?,
                concept_code: opt(&rec[4]),
            });
        }
        Ok(out)
    }

    /// Appends variables. The whole call is rejected if any name is already
    /// registered or repeated within `vars`.
    pub fn add_variables(&self, dataset_id: &str, vars: &[VariableDescriptor]) -> Result<usize, CatalogError> {
        self.require_dir(dataset_id)?;
        let lock = self.lock(dataset_id);
        let _guard = lock.lock().unwrap();
        let mut all = self.variables(dataset_id)?;
        let mut seen: HashSet<String> = all.iter().map(|v| v.name.clone()).collect();
        for v in vars {
            if v.name.trim().is_empty() {
                return Err(CatalogError::RecordMismatch("variable name is empty".into()));
            }
            if !seen.insert(v.name.clone()) {
                return Err(CatalogError::DuplicateVariable { dataset: dataset_id.to_string(), name: v.name.clone() });
            }
        }
        all.extend(vars.iter().map(|v| VariableDescriptor { dataset_id: dataset_id.to_string(), ..v.clone() }));
        write_atomic(&self.dataset_dir(dataset_id).join(VARIABLES), &variables_bytes(&all))?;
        Ok(vars.len())
    }

    fn values_path(&self, id: &str, year: i32) -> PathBuf {
        self.dataset_dir(id).join(VALUES_DIR).join(format!("{year}.csv"))
    }

    /// Stores a batch of cells for one year. Validation happens before any
    /// write and the batch lands in a single rename, so a failed call leaves
    /// the catalog untouched.
    pub fn store_values(&self, dataset_id: &str, year: i32, records: &[ValueRecord]) -> Result<usize, CatalogError> {
        self.require_dir(dataset_id)?;
        let lock = self.lock(dataset_id);
        let _guard = lock.lock().unwrap();
        let mut desc = self.descriptor(dataset_id)?;
        let known: HashSet<String> = self.variables(dataset_id)?.into_iter().map(|v| v.name).collect();

        for r in records {
            if r.dataset_id != dataset_id || r.year != year {
                return Err(CatalogError::RecordMismatch(format!(
                    "record for {}/{} in a {dataset_id}/{year} batch",
                    r.dataset_id, r.year
                )));
            }
            if !known.contains(&r.variable_name) {
                return Err(CatalogError::UnknownVariable { dataset: dataset_id.to_string(), name: r.variable_name.clone() });
            }
            if desc.spatial_scale.level() != Some(r.geo_key.level()) {
                return Err(CatalogError::LevelMismatch {
                    dataset: dataset_id.to_string(),
                    scale: desc.spatial_scale,
                    found: r.geo_key.level(),
                });
            }
        }

        let path = self.values_path(dataset_id, year);
        let existing = if path.is_file() { Some(fs::read(&path).map_err(io_err(&path))?) } else { None };
        let mut cells: HashSet<(GeoKey, &str)> = HashSet::with_capacity(records.len());
        let mut existing_cells: HashSet<(String, String)> = HashSet::new();
        if let Some(bytes) = &existing {
            let mut rdr = csv::Reader::from_reader(bytes.as_slice());
            for rec in rdr.records() {
                let rec = rec.map_err(|e| corrupt(&path, e))?;
                existing_cells.insert((rec[0].to_string(), rec[1].to_string()));
            }
        }
        let dup = |r: &ValueRecord| CatalogError::DuplicateCell {
            dataset: dataset_id.to_string(),
            variable: r.variable_name.clone(),
            geo: r.geo_key.code().to_string(),
            year,
        };
        for r in records {
            if !cells.insert((r.geo_key, r.variable_name.as_str())) {
                return Err(dup(r));
            }
            if !existing_cells.is_empty() && existing_cells.contains(&(r.geo_key.code().to_string(), r.variable_name.clone())) {
                return Err(dup(r));
            }
        }

        let mut wtr = csv::Writer::from_writer(existing.unwrap_or_default());
        if existing_cells.is_empty() && wtr.get_ref().is_empty() {
            wtr.write_record(VALUES_HEADER).map_err(|e| corrupt(&path, e))?;
        }
        for r in records {
            wtr.write_record([r.geo_key.code(), &r.variable_name, &r.value, r.quality_flag.as_deref().unwrap_or("")])
                .map_err(|e| corrupt(&path, e))?;
        }
        let bytes = wtr.into_inner().map_err(|e| corrupt(&path, e))?;
        write_atomic(&path, &bytes)?;

        if !desc.years.contains(&year) {
            desc.years.push(year);
            desc.years.sort_unstable();
            self.write_descriptor(&desc)?;
        }
        Ok(records.len())
    }

    /// Bulk variant of [`store_values`](Self::store_values) for wide input:
    /// row `r` of `keys` and column `c` of `variables` hold `cell(r, c)`,
    /// `None` cells are skipped. Streams to disk instead of materialising
    /// one record per cell. Same all-or-nothing guarantee.
    pub(crate) fn store_rows<'a>(
        &self,
        dataset_id: &str,
        year: i32,
        variables: &[String],
        keys: &[GeoKey],
        cell: impl Fn(usize, usize) -> Option<&'a str>,
    ) -> Result<usize, CatalogError> {
        self.require_dir(dataset_id)?;
        let lock = self.lock(dataset_id);
        let _guard = lock.lock().unwrap();
        let mut desc = self.descriptor(dataset_id)?;
        let known: HashSet<String> = self.variables(dataset_id)?.into_iter().map(|v| v.name).collect();
        if let Some(v) = variables.iter().find(|v| !known.contains(*v)) {
            return Err(CatalogError::UnknownVariable { dataset: dataset_id.to_string(), name: v.clone() });
        }
        let mut seen_vars = HashSet::new();
        if let Some(v) = variables.iter().find(|v| !seen_vars.insert(v.as_str())) {
            return Err(CatalogError::DuplicateVariable { dataset: dataset_id.to_string(), name: v.clone() });
        }
        let mut seen_keys: HashMap<GeoKey, usize> = HashMap::with_capacity(keys.len());
        for (r, k) in keys.iter().enumerate() {
            if desc.spatial_scale.level() != Some(k.level()) {
                return Err(CatalogError::LevelMismatch {
                    dataset: dataset_id.to_string(),
                    scale: desc.spatial_scale,
                    found: k.level(),
                });
            }
            if seen_keys.insert(*k, r).is_some() {
                return Err(CatalogError::DuplicateCell {
                    dataset: dataset_id.to_string(),
                    variable: variables.first().cloned().unwrap_or_default(),
                    geo: k.code().to_string(),
                    year,
                });
            }
        }

        let path = self.values_path(dataset_id, year);
        let existing = if path.is_file() { Some(fs::read(&path).map_err(io_err(&path))?) } else { None };
        if let Some(bytes) = &existing {
            let mut rdr = csv::Reader::from_reader(bytes.as_slice());
            for rec in rdr.byte_records() {
                let rec = rec.map_err(|e| corrupt(&path, e))?;
                let (Ok(code), Ok(var)) = (std::str::from_utf8(&rec[0]), std::str::from_utf8(&rec[1])) else {
                    return Err(corrupt(&path, "invalid utf-8"));
                };
                let Ok(key) = GeoKey::new(desc.spatial_scale.level().expect("checked above"), code) else {
                    return Err(corrupt(&path, format!("bad key {code:?}")));
                };
                if let Some(&r) = seen_keys.get(&key) {
                    if let Some(c) = variables.iter().position(|v| v == var) {
                        if cell(r, c).is_some() {
                            return Err(CatalogError::DuplicateCell {
                                dataset: dataset_id.to_string(),
                                variable: var.to_string(),
                                geo: code.to_string(),
                                year,
                            });
                        }
                    }
                }
            }
        }

        let tmp = tmp_path(&path);
        let written = (|| -> Result<usize, CatalogError> {
            let f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
            let mut buf = std::io::BufWriter::with_capacity(1 << 20, f);
            match &existing {
                Some(bytes) => buf.write_all(bytes).map_err(io_err(&tmp))?,
                None => buf.write_all(b"geo_code,variable,value,quality_flag\n").map_err(io_err(&tmp))?,
            }
            let mut wtr = csv::Writer::from_writer(buf);
            let mut n = 0;
            for (r, k) in keys.iter().enumerate() {
                for (c, v) in variables.iter().enumerate() {
                    if let Some(value) = cell(r, c) {
                        wtr.write_record([k.code(), v.as_str(), value, ""]).map_err(|e| corrupt(&tmp, e))?;
                        n += 1;
                    }
                }
            }
            let buf = wtr.into_inner().map_err(|e| corrupt(&tmp, e.error()))?;
            let f = buf.into_inner().map_err(|e| io_err(&tmp)(e.into_error()))?;
            f.sync_all().map_err(io_err(&tmp))?;
            fs::rename(&tmp, &path).map_err(io_err(&path))?;
            Ok(n)
        })();
        if written.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        let n = written?;

        if !desc.years.contains(&year) {
            desc.years.push(year);
            desc.years.sort_unstable();
            self.write_descriptor(&desc)?;
        }
        Ok(n)
    }

    /// Loads every stored cell of one dataset-year into memory.
    pub fn load_year(&self, dataset_id: &str, year: i32) -> Result<YearTable, CatalogError> {
        let desc = self.descriptor(dataset_id)?;
        if !desc.years.contains(&year) {
            return Err(CatalogError::UnknownYear { dataset: dataset_id.to_string(), year });
        }
        let vars = self.variables(dataset_id)?;
        let path = self.values_path(dataset_id, year);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        YearTable::from_csv(&desc, year, vars.into_iter().map(|v| v.name).collect(), &bytes)
            .map_err(|message| corrupt(&path, message))
    }

    /// Wide extract: one row per requested key (input order), one column per
    /// variable (registration order, or the order given). Missing cells are empty.
    pub fn query_values(
        &self,
        dataset_id: &str,
        year: i32,
        geo_keys: &[GeoKey],
        variables: Option<&[String]>,
    ) -> Result<WideTable, CatalogError> {
        let table = self.load_year(dataset_id, year)?;
        let cols: Vec<usize> = match variables {
            None => (0..table.variables().len()).collect(),
            Some(names) => names
                .iter()
                .map(|n| {
                    table
                        .variable_index(n)
                        .ok_or_else(|| CatalogError::UnknownVariable { dataset: dataset_id.to_string(), name: n.clone() })
                })
                .collect::<Result<_, _>>()?,
        };
        Ok(table.extract(geo_keys, &cols))
    }

    /// Registered descriptors matching `filter`, ordered by display name.
    pub fn list_catalog(&self, filter: &CatalogFilter) -> Result<Vec<DatasetDescriptor>, CatalogError> {
        let dir = self.root.join("datasets");
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|name| !name.starts_with('.'))
            .collect();
        ids.sort();
        let mut out = Vec::new();
        for id in ids {
            let Ok(d) = self.descriptor(&id) else { continue };
            let keep = filter.scale.is_none_or(|s| s == d.spatial_scale)
                && filter.year.is_none_or(|y| d.years.contains(&y))
                && filter.domain.is_none_or(|dm| dm == d.domain);
            if keep {
                out.push(d);
            }
        }
        out.sort_by(|a, b| a.display_name.cmp(&b.display_name).then_with(|| a.id.cmp(&b.id)));
        Ok(out)
    }

    pub fn is_empty(&self) -> Result<bool, CatalogError> {
        Ok(self.list_catalog(&CatalogFilter::default())?.is_empty())
    }
}

fn manifest_bytes(d: &DatasetDescriptor) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(d).expect("descriptor serializes");
    v.push(b'\n');
    v
}

pub(crate) fn variables_bytes(vars: &[VariableDescriptor]) -> Vec<u8> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(VARIABLES_HEADER).expect("in-memory write");
    for v in vars {
        wtr.write_record([
            v.name.as_str(),
            &v.description,
            v.unit.as_deref().unwrap_or(""),
            v.value_kind.as_str(),
            v.concept_code.as_deref().unwrap_or(""),
        ])
        .expect("in-memory write");
    }
    wtr.into_inner().expect("in-memory write")
}
