//! ESRI shapefile main file (`.shp`, Polygon records) and dBASE III (`.dbf`)
//! attribute table reader.
//!
//! Main file header (100 bytes): file code 9994 as big-endian i32 at offset 0,
//! file length in 16-bit words big-endian at 24, version little-endian at 28,
//! shape type little-endian at 32. Each record is an 8-byte big-endian header
//! (record number, content length in words) followed by little-endian content.

use super::{BoundaryError, BoundarySet, PolygonShape, Ring};
use crate::geo::{parse_geo_key, GeoLevel, LonLat};

const FILE_CODE: i32 = 9994;
const SHAPE_NULL: i32 = 0;
const SHAPE_POLYGON: i32 = 5;
const HEADER_LEN: usize = 100;

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        Cursor { buf, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], BoundaryError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            BoundaryError::Truncated(format!("{} ends at byte {} (needed {} more)", self.what, self.buf.len(), n))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn i32_be(&mut self) -> Result<i32, BoundaryError> {
        Ok(i32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32_le(&mut self) -> Result<i32, BoundaryError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64_le(&mut self) -> Result<f64, BoundaryError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// One polygon record: part ring lists, or `None` for a null shape.
type ShpRecord = Option<Vec<Ring>>;

fn read_shp(shp: &[u8]) -> Result<Vec<ShpRecord>, BoundaryError> {
    let mut c = Cursor::new(shp, ".shp header");
    let code = c.i32_be()?;
    if code != FILE_CODE {
        return Err(BoundaryError::BadFileCode(code));
    }
    c.take(20)?;
    let file_words = c.i32_be()?;
    let _version = c.i32_le()?;
    let shape_type = c.i32_le()?;
    if shape_type != SHAPE_POLYGON && shape_type != SHAPE_NULL {
        return Err(BoundaryError::UnsupportedShapeType(shape_type));
    }
    c.take(HEADER_LEN - 36)?;

    // Trust the declared length only when it fits the buffer.
    let declared = usize::try_from(file_words).unwrap_or(0).saturating_mul(2);
    let end = if declared >= HEADER_LEN && declared <= shp.len() { declared } else { shp.len() };
    let mut c = Cursor { buf: &shp[..end], pos: HEADER_LEN, what: ".shp record" };

    let mut records = Vec::new();
    while c.remaining() >= 8 {
        let _number = c.i32_be()?;
        let words = c.i32_be()?;
        let len = usize::try_from(words)
            .map_err(|_| BoundaryError::Truncated(format!("negative record length {words}")))?
            * 2;
        let content = c.take(len)?;
        records.push(read_polygon_record(content, records.len())?);
    }
    Ok(records)
}

fn read_polygon_record(content: &[u8], index: usize) -> Result<ShpRecord, BoundaryError> {
    let mut c = Cursor::new(content, ".shp polygon record");
    let shape_type = c.i32_le()?;
    match shape_type {
        SHAPE_NULL => return Ok(None),
        SHAPE_POLYGON => {}
        other => return Err(BoundaryError::UnsupportedShapeType(other)),
    }
    // The stored record bbox is skipped; it is recomputed from the vertices.
    c.take(32)?;
    let num_parts = usize::try_from(c.i32_le()?).map_err(|_| BoundaryError::Truncated("negative part count".into()))?;
    let num_points = usize::try_from(c.i32_le()?).map_err(|_| BoundaryError::Truncated("negative point count".into()))?;
    let mut starts = Vec::with_capacity(num_parts.min(content.len() / 4));
    for _ in 0..num_parts {
        let s = usize::try_from(c.i32_le()?).map_err(|_| BoundaryError::Truncated("negative part index".into()))?;
        starts.push(s);
    }
    let mut points = Vec::with_capacity(num_points.min(content.len() / 16));
    for _ in 0..num_points {
        let x = c.f64_le()?;
        let y = c.f64_le()?;
        points.push(LonLat::new(x, y).map_err(|source| BoundaryError::InvalidCoordinate { record: index, source })?);
    }
    let mut rings = Vec::with_capacity(num_parts);
    for (i, &start) in starts.iter().enumerate() {
        let stop = starts.get(i + 1).copied().unwrap_or(num_points);
        if start > stop || stop > num_points {
            return Err(BoundaryError::Truncated(format!("record {index}: part {i} indexes past the point array")));
        }
        rings.push(Ring::new(points[start..stop].to_vec()));
    }
    Ok(Some(rings))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbfField {
    pub name: String,
    pub kind: char,
    pub length: usize,
    pub decimals: u8,
}

/// Decoded dBASE III table. Cells are Latin-1 decoded and trimmed.
#[derive(Debug, Clone)]
pub struct DbfTable {
    pub fields: Vec<DbfField>,
    /// `None` marks a record flagged deleted.
    pub records: Vec<Option<Vec<String>>>,
}

impl DbfTable {
    pub fn parse(dbf: &[u8]) -> Result<Self, BoundaryError> {
        let mut c = Cursor::new(dbf, ".dbf header");
        let version = c.take(1)?[0];
        if version != 0x03 {
            return Err(BoundaryError::UnsupportedDbfVersion(version));
        }
        c.take(3)?;
        let num_records = u32::from_le_bytes(c.take(4)?.try_into().unwrap()) as usize;
        let header_len = u16::from_le_bytes(c.take(2)?.try_into().unwrap()) as usize;
        let record_len = u16::from_le_bytes(c.take(2)?.try_into().unwrap()) as usize;
        c.take(20)?;

        let mut fields = Vec::new();
        loop {
            if c.buf.get(c.pos) == Some(&0x0D) || c.pos + 32 > header_len {
                break;
            }
            let desc = c.take(32)?;
            let name_end = desc[..11].iter().position(|&b| b == 0).unwrap_or(11);
            let name: String = desc[..name_end].iter().map(|&b| b as char).collect();
            let kind = desc[11] as char;
            if kind != 'C' && kind != 'N' {
                return Err(BoundaryError::UnsupportedDbfField { name, kind });
            }
            fields.push(DbfField { name: name.trim().to_string(), kind, length: desc[16] as usize, decimals: desc[17] });
        }
        let data_len: usize = 1 + fields.iter().map(|f| f.length).sum::<usize>();
        if record_len != data_len {
            return Err(BoundaryError::Truncated(format!(
                ".dbf record length {record_len} disagrees with field widths ({data_len})"
            )));
        }

        let mut c = Cursor { buf: dbf, pos: header_len, what: ".dbf record" };
        let mut records = Vec::with_capacity(num_records);
        for _ in 0..num_records {
            let rec = c.take(record_len)?;
            if rec[0] == b'*' {
                records.push(None);
                continue;
            }
            let mut off = 1;
            let mut cells = Vec::with_capacity(fields.len());
            for f in &fields {
                let raw = &rec[off..off + f.length];
                off += f.length;
                let text: String = raw.iter().map(|&b| b as char).collect();
                cells.push(text.trim_matches(|ch: char| ch == ' ' || ch == '\0').to_string());
            }
            records.push(Some(cells));
        }
        Ok(DbfTable { fields, records })
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }
}

/// Reads a polygon shapefile pair, keying record `i` by the `id_field` value of
/// `.dbf` record `i`. Null-shape and deleted records contribute no entry.
pub fn load_shapefile(shp: &[u8], dbf: &[u8], level: GeoLevel, id_field: &str) -> Result<BoundarySet, BoundaryError> {
    let shapes = read_shp(shp)?;
    let table = DbfTable::parse(dbf)?;
    let col = table.field_index(id_field).ok_or_else(|| BoundaryError::DbfFieldMissing(id_field.to_string()))?;
    if shapes.len() != table.records.len() {
        return Err(BoundaryError::RecordCountMismatch { shp: shapes.len(), dbf: table.records.len() });
    }
    let mut set = BoundarySet::new(level, "");
    for (i, (shape, attrs)) in shapes.into_iter().zip(&table.records).enumerate() {
        let (Some(rings), Some(attrs)) = (shape, attrs) else { continue };
        let key = parse_geo_key(&attrs[col], level, false).map_err(|source| BoundaryError::InvalidKey { record: i, source })?;
        set.insert(key, PolygonShape::from_rings(rings))?;
    }
    if set.is_empty() {
        return Err(BoundaryError::EmptySet);
    }
    Ok(set)
}
