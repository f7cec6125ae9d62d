use std::collections::HashMap;

use super::DatasetDescriptor;
use crate::geo::{parse_geo_key, GeoKey, GeoLevel};

const MISSING: (u32, u32) = (u32::MAX, 0);

/// All cells of one dataset-year, held in memory for lookups.
///
/// Values live in one string arena; each (row, variable) slot holds an
/// offset/length span into it.
#[derive(Debug, Clone)]
pub struct YearTable {
    dataset_id: String,
    year: i32,
    level: Option<GeoLevel>,
    variables: Vec<String>,
    var_index: HashMap<String, usize>,
    rows: HashMap<GeoKey, u32>,
    spans: Vec<(u32, u32)>,
    arena: String,
}

/// Result of a wide extract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WideTable {
    pub columns: Vec<String>,
    pub rows: Vec<(GeoKey, Vec<String>)>,
}

impl YearTable {
    pub(crate) fn from_csv(desc: &DatasetDescriptor, year: i32, variables: Vec<String>, bytes: &[u8]) -> Result<Self, String> {
        let level = desc.spatial_scale.level();
        let var_index: HashMap<String, usize> = variables.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
        let nvars = variables.len();
        let mut table = YearTable {
            dataset_id: desc.id.clone(),
            year,
            level,
            variables,
            var_index,
            rows: HashMap::new(),
            spans: Vec::new(),
            arena: String::with_capacity(bytes.len() / 2),
        };
        let Some(level) = level else { return Ok(table) };

        let mut rdr = csv::ReaderBuilder::new().from_reader(bytes);
        let mut rec = csv::ByteRecord::new();
        let mut line = 1usize;
        while rdr.read_byte_record(&mut rec).map_err(|e| e.to_string())? {
            line += 1;
            if rec.len() < 3 {
                return Err(format!("line {line}: expected geo_code,variable,value,quality_flag"));
            }
            let code = std::str::from_utf8(&rec[0]).map_err(|e| format!("line {line}: {e}"))?;
            let key = parse_geo_key(code, level, false).map_err(|e| format!("line {line}: {e}"))?;
            let var = std::str::from_utf8(&rec[1]).map_err(|e| format!("line {line}: {e}"))?;
            let Some(&col) = table.var_index.get(var) else {
                return Err(format!("line {line}: unregistered variable {var:?}"));
            };
            let value = std::str::from_utf8(&rec[2]).map_err(|e| format!("line {line}: {e}"))?;
            let next_row = table.rows.len() as u32;
            let row = *table.rows.entry(key).or_insert(next_row);
            if row == next_row {
                table.spans.resize(table.spans.len() + nvars, MISSING);
            }
            let offset = u32::try_from(table.arena.len()).map_err(|_| "value arena exceeds 4 GiB".to_string())?;
            table.arena.push_str(value);
            table.spans[row as usize * nvars + col] = (offset, value.len() as u32);
        }
        Ok(table)
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn level(&self) -> Option<GeoLevel> {
        self.level
    }

    /// Variable names in registration order.
    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.var_index.get(name).copied()
    }

    /// Number of distinct keys with at least one stored cell.
    pub fn geo_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row_of(&self, key: &GeoKey) -> Option<u32> {
        self.rows.get(key).copied()
    }

    /// Stored value at a row/variable slot.
    #[inline]
    pub fn cell(&self, row: u32, var: usize) -> Option<&str> {
        let (off, len) = self.spans[row as usize * self.variables.len() + var];
        if off == u32::MAX {
            None
        } else {
            Some(&self.arena[off as usize..(off + len) as usize])
        }
    }

    pub fn get(&self, key: &GeoKey, var: usize) -> Option<&str> {
        self.row_of(key).and_then(|r| self.cell(r, var))
    }

    pub(crate) fn extract(&self, keys: &[GeoKey], cols: &[usize]) -> WideTable {
        let rows = keys
            .iter()
            .map(|k| {
                let cells = cols.iter().map(|&c| self.get(k, c).unwrap_or("").to_string()).collect();
                (*k, cells)
            })
            .collect();
        WideTable { columns: cols.iter().map(|&c| self.variables[c].clone()).collect(), rows }
    }
}
