//! Nested-loop reference join and random linkage instances.

use arealink_core::GeoLevel;
use rand::seq::SliceRandom;
use rand::Rng;

const NA_TOKENS: [&str; 5] = ["", "NA", "NULL", ".", "-999"];

/// One dataset as raw wide rows, before any catalog involvement.
#[derive(Debug, Clone)]
pub struct OracleDataset {
    pub id: String,
    pub level: GeoLevel,
    pub year: i32,
    pub geo_column: String,
    pub variables: Vec<String>,
    /// (geo code, one cell per variable)
    pub rows: Vec<(String, Vec<String>)>,
    /// Subset requested in the selection; `None` means every variable.
    pub selected: Option<Vec<String>>,
}

impl OracleDataset {
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = Vec::new();
        let mut header = vec![self.geo_column.clone()];
        header.extend(self.variables.iter().cloned());
        write_row(&mut w, &header);
        for (geo, cells) in &self.rows {
            let mut row = vec![geo.clone()];
            row.extend(cells.iter().cloned());
            write_row(&mut w, &row);
        }
        w
    }

    fn selected_vars(&self) -> Vec<String> {
        self.selected.clone().unwrap_or_else(|| self.variables.clone())
    }

    /// Stored value for (geo, var), scanning every row.
    fn lookup(&self, geo: &str, var: &str) -> Option<String> {
        let col = self.variables.iter().position(|v| v == var)?;
        for (g, cells) in &self.rows {
            if g == geo {
                let v = &cells[col];
                if !NA_TOKENS.contains(&v.trim()) {
                    return Some(v.clone());
                }
            }
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct OracleCohort {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub key_col: usize,
    pub key_level: GeoLevel,
}

impl OracleCohort {
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = Vec::new();
        write_row(&mut w, &self.header);
        for r in &self.rows {
            write_row(&mut w, r);
        }
        w
    }
}

/// Minimal RFC 4180 writer: quote fields holding a comma, quote or newline.
fn write_row(out: &mut Vec<u8>, fields: &[String]) {
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            out.push(b',');
        }
        if f.contains([',', '"', '\n', '\r']) || (fields.len() == 1 && f.is_empty()) {
            out.push(b'"');
            out.extend_from_slice(f.replace('"', "\"\"").as_bytes());
            out.push(b'"');
        } else {
            out.extend_from_slice(f.as_bytes());
        }
    }
    out.extend_from_slice(b"\r\n");
}

fn width(level: GeoLevel) -> usize {
    match level {
        GeoLevel::State => 2,
        GeoLevel::County => 5,
        GeoLevel::Tract => 11,
        GeoLevel::BlockGroup => 12,
        GeoLevel::Zcta | GeoLevel::Cbsa => 5,
    }
}

/// Cohort key rule: trim, drop one pair of surrounding quotes, digits only,
/// exact width or one short (restored with a leading zero).
pub fn oracle_parse_key(raw: &str, level: GeoLevel) -> Option<String> {
    let mut s = raw.trim();
    for q in ['"', '\''] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            s = s[1..s.len() - 1].trim();
            break;
        }
    }
    if s.is_empty() || !s.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let w = width(level);
    if s.len() == w {
        Some(s.to_string())
    } else if s.len() + 1 == w {
        Some(format!("0{s}"))
    } else {
        None
    }
}

const CHAIN: [GeoLevel; 4] = [GeoLevel::BlockGroup, GeoLevel::Tract, GeoLevel::County, GeoLevel::State];

/// Reference join. Returns (columns, rows).
pub fn oracle_link(cohort: &OracleCohort, datasets: &[OracleDataset]) -> (Vec<String>, Vec<Vec<String>>) {
    let base_w = width(cohort.key_level);
    let chain: Vec<GeoLevel> = CHAIN.iter().copied().filter(|l| width(*l) <= base_w).collect();
    let mut columns = cohort.header.clone();
    columns.extend(chain.iter().map(|l| format!("fips_{}", l.as_str())));
    for d in datasets {
        columns.extend(d.selected_vars().iter().map(|v| format!("{}.{v}", d.id)));
        columns.push(format!("{}.link_status", d.id));
    }

    let mut out = Vec::with_capacity(cohort.rows.len());
    for row in &cohort.rows {
        let mut o = row.clone();
        let key = oracle_parse_key(&row[cohort.key_col], cohort.key_level);
        for l in &chain {
            o.push(key.as_ref().map(|k| k[..width(*l)].to_string()).unwrap_or_default());
        }
        for d in datasets {
            let vars = d.selected_vars();
            match &key {
                None => {
                    o.extend(vars.iter().map(|_| String::new()));
                    o.push("BAD_KEY".into());
                }
                Some(k) => {
                    let geo = &k[..width(d.level)];
                    let cells: Vec<Option<String>> = vars.iter().map(|v| d.lookup(geo, v)).collect();
                    let matched = cells.iter().any(Option::is_some);
                    o.extend(cells.into_iter().map(Option::unwrap_or_default));
                    o.push(if matched { "MATCHED" } else { "NO_DATA_FOR_GEO" }.into());
                }
            }
        }
        out.push(o);
    }
    (columns, out)
}

/// A random cohort plus three datasets: two tract-scale, one county-scale.
#[derive(Debug, Clone)]
pub struct LinkInstance {
    pub cohort: OracleCohort,
    pub datasets: Vec<OracleDataset>,
}

fn random_value(rng: &mut impl Rng, text: bool) -> String {
    let roll = rng.random_range(0..100);
    if roll < 8 {
        return NA_TOKENS[rng.random_range(0..NA_TOKENS.len())].to_string();
    }
    if text {
        let words = ["urban", "rural", "a, b", "say \"hi\"", "  padded ", "x"];
        return words[rng.random_range(0..words.len())].to_string();
    }
    match roll % 3 {
        0 => rng.random_range(-1000..1000).to_string(),
        1 => format!("{:.4}", rng.random_range(0.0..1.0)),
        _ => format!("{}", rng.random_range(0.0..1e6)),
    }
}

pub fn random_instance(seed: u64, cohort_rows: usize) -> LinkInstance {
    let mut rng = crate::rng(seed);
    // Universe: states 01 and 12, two counties each, 15 tracts per county.
    let mut tracts = Vec::new();
    let mut counties = Vec::new();
    for state in ["01", "12"] {
        for county in [1u32, 3] {
            counties.push(format!("{state}{county:03}"));
            for t in 0..15u32 {
                tracts.push(format!("{state}{county:03}{:06}", 100 * (t + 1) + rng.random_range(0..2)));
            }
        }
    }
    tracts.sort();
    tracts.dedup();

    let mut make = |id: &str, level: GeoLevel, pool: &[String], nvars: usize, coverage: f64, selected: Option<Vec<usize>>| {
        let variables: Vec<String> = (0..nvars).map(|i| format!("V{i}")).collect();
        let mut rows = Vec::new();
        for g in pool {
            if rng.random_bool(coverage) {
                let cells = (0..nvars).map(|i| random_value(&mut rng, i == nvars - 1)).collect();
                rows.push((g.clone(), cells));
            }
        }
        // a geo outside the cohort universe
        rows.push((if level == GeoLevel::County { "56045".into() } else { "56045000100".into() }, vec!["1".into(); nvars]));
        rows.shuffle(&mut rng);
        OracleDataset {
            id: id.to_string(),
            level,
            year: 2020,
            geo_column: "GEOID".into(),
            selected: selected.map(|idx| idx.into_iter().map(|i| variables[i].clone()).collect()),
            variables,
            rows,
        }
    };
    let a = make("alpha", GeoLevel::Tract, &tracts, 5, 0.7, None);
    let b = make("beta", GeoLevel::Tract, &tracts, 4, 0.5, Some(vec![3, 1]));
    let c = make("gamma", GeoLevel::County, &counties[..3], 3, 1.0, None);

    let mut rows = Vec::with_capacity(cohort_rows);
    for i in 0..cohort_rows {
        let roll = rng.random_range(0..100);
        let t = &tracts[rng.random_range(0..tracts.len())];
        let key = match roll {
            0..=69 => t.clone(),
            70..=79 => format!("{}{:06}", &t[..5], 990_000 + rng.random_range(0..50)),
            80..=84 if t.starts_with('0') => t[1..].to_string(),
            80..=84 => format!(" {t} "),
            85..=87 => format!("\"{t}\""),
            _ => ["", "abc", "1234567", "120010001001x", "12001-000100", "NA", "999999999999"][rng.random_range(0..7)]
                .to_string(),
        };
        rows.push(vec![format!("P{i:05}"), key, rng.random_range(18..90).to_string()]);
    }
    let cohort = OracleCohort {
        header: vec!["patient_id".into(), "fips".into(), "age".into()],
        rows,
        key_col: 1,
        key_level: GeoLevel::Tract,
    };
    LinkInstance { cohort, datasets: vec![a, b, c] }
}
