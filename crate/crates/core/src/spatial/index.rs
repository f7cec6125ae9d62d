//! Packed bounding-box tree over a boundary layer.
//!
//! The tree is bulk-loaded with sort-tile-recursive packing. Entries are
//! first taken in key order and every sort breaks ties on that order, so the
//! same layer always packs to the same tree and the same bytes.

use std::cmp::Ordering;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::pip::shape_contains;
use super::SpatialError;
use crate::boundary::{BBox, BoundarySet, PolygonShape, Ring};
use crate::exec::Execution;
use crate::geo::{GeoKey, GeoLevel, LonLat};

pub const DEFAULT_NODE_CAPACITY: usize = 16;

/// File name used when an index is saved into a directory.
pub const INDEX_FILE_NAME: &str = "boundaries.alsi";

const MAGIC: &[u8; 4] = b"ALSI";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    bbox: BBox,
    /// Child range in the level below, or entry range at the leaf level.
    start: u32,
    end: u32,
}

/// Traversal counters for one point query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryStats {
    pub nodes_visited: usize,
    pub leaf_nodes_visited: usize,
    /// Leaf entries whose bbox contains the point.
    pub candidates: usize,
}

/// Immutable point-location index for one boundary layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialIndex {
    level: GeoLevel,
    vintage: String,
    node_capacity: usize,
    /// Entries in packing order.
    entries: Vec<(GeoKey, PolygonShape)>,
    /// `levels[0]` is the leaf level; the last level holds the single root.
    levels: Vec<Vec<Node>>,
}

fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Sort-tile-recursive grouping of `items` (already in tie-break order) into
/// runs of at most `cap`. Returns the permutation and the run boundaries.
fn str_pack(boxes: &[BBox], cap: usize) -> (Vec<usize>, Vec<(usize, usize)>) {
    let n = boxes.len();
    let mut order: Vec<usize> = (0..n).collect();
    let node_count = n.div_ceil(cap);
    let slices = (node_count as f64).sqrt().ceil().max(1.0) as usize;
    let slice_len = slices.max(1) * cap;
    let center = |i: usize| boxes[i].center();
    // Stable sorts keep the incoming (key) order on ties.
    order.sort_by(|&a, &b| cmp_f64(center(a).0, center(b).0));
    for chunk in order.chunks_mut(slice_len) {
        chunk.sort_by(|&a, &b| cmp_f64(center(a).1, center(b).1));
    }
    let mut runs = Vec::with_capacity(node_count);
    for slice_start in (0..n).step_by(slice_len) {
        let slice_end = (slice_start + slice_len).min(n);
        for s in (slice_start..slice_end).step_by(cap) {
            runs.push((s, (s + cap).min(slice_end)));
        }
    }
    (order, runs)
}

/// Bulk-loads an index over every entry of `set`.
pub fn build_index(set: &BoundarySet) -> Result<SpatialIndex, SpatialError> {
    build_index_with_capacity(set, DEFAULT_NODE_CAPACITY)
}

pub fn build_index_with_capacity(set: &BoundarySet, node_capacity: usize) -> Result<SpatialIndex, SpatialError> {
    if set.is_empty() {
        return Err(SpatialError::EmptySet);
    }
    let cap = node_capacity.max(2);
    let sorted: Vec<(GeoKey, PolygonShape)> = set.iter().map(|(k, s)| (*k, s.clone())).collect();
    let boxes: Vec<BBox> = sorted.iter().map(|(_, s)| s.bbox()).collect();
    let (order, runs) = str_pack(&boxes, cap);

    let mut slots: Vec<Option<(GeoKey, PolygonShape)>> = sorted.into_iter().map(Some).collect();
    let entries: Vec<(GeoKey, PolygonShape)> = order.iter().map(|&i| slots[i].take().expect("permutation")).collect();

    let mut levels = Vec::new();
    let mut current: Vec<Node> = runs
        .iter()
        .map(|&(s, e)| {
            let mut bbox = BBox::EMPTY;
            for (_, shape) in &entries[s..e] {
                bbox.expand(&shape.bbox());
            }
            Node { bbox, start: s as u32, end: e as u32 }
        })
        .collect();
    while current.len() > 1 {
        let boxes: Vec<BBox> = current.iter().map(|n| n.bbox).collect();
        let (order, runs) = str_pack(&boxes, cap);
        let reordered: Vec<Node> = order.iter().map(|&i| current[i]).collect();
        let parents = runs
            .iter()
            .map(|&(s, e)| {
                let mut bbox = BBox::EMPTY;
                for child in &reordered[s..e] {
                    bbox.expand(&child.bbox);
                }
                Node { bbox, start: s as u32, end: e as u32 }
            })
            .collect();
        levels.push(reordered);
        current = parents;
    }
    levels.push(current);
    Ok(SpatialIndex { level: set.level(), vintage: set.vintage().to_string(), node_capacity: cap, entries, levels })
}

impl SpatialIndex {
    pub fn level(&self) -> GeoLevel {
        self.level
    }

    pub fn vintage(&self) -> &str {
        &self.vintage
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of node levels; a single leaf root has height 1.
    pub fn height(&self) -> usize {
        self.levels.len()
    }

    pub fn bbox(&self) -> BBox {
        self.levels.last().and_then(|l| l.first()).map(|n| n.bbox).unwrap_or(BBox::EMPTY)
    }

    /// Entries in packing order.
    pub fn entries(&self) -> impl Iterator<Item = (&GeoKey, &PolygonShape)> {
        self.entries.iter().map(|(k, s)| (k, s))
    }

    /// Calls `visit` for every entry whose bbox contains `p`.
    fn for_each_candidate(&self, p: LonLat, stats: &mut QueryStats, mut visit: impl FnMut(&GeoKey, &PolygonShape)) {
        let top = self.levels.len() - 1;
        let mut stack: Vec<(usize, usize)> = Vec::with_capacity(16);
        for (i, root) in self.levels[top].iter().enumerate() {
            if root.bbox.contains(p) {
                stack.push((top, i));
            }
        }
        while let Some((depth, idx)) = stack.pop() {
            let node = self.levels[depth][idx];
            stats.nodes_visited += 1;
            if depth == 0 {
                stats.leaf_nodes_visited += 1;
                for (key, shape) in &self.entries[node.start as usize..node.end as usize] {
                    if shape.bbox().contains(p) {
                        stats.candidates += 1;
                        visit(key, shape);
                    }
                }
            } else {
                let below = &self.levels[depth - 1];
                let (start, end) = (node.start as usize, node.end as usize);
                for (c, child) in below[start..end].iter().enumerate() {
                    if child.bbox.contains(p) {
                        stack.push((depth - 1, start + c));
                    }
                }
            }
        }
    }

    /// Keys of entries whose bbox contains `p` (a superset of the containing polygons).
    pub fn candidates(&self, p: LonLat) -> Vec<GeoKey> {
        let mut out = Vec::new();
        self.for_each_candidate(p, &mut QueryStats::default(), |k, _| out.push(*k));
        out.sort();
        out
    }

    /// Like [`resolve_point`] but also reports traversal counters.
    pub fn resolve_with_stats(&self, p: LonLat) -> (Option<GeoKey>, QueryStats) {
        let mut stats = QueryStats::default();
        let mut best: Option<GeoKey> = None;
        self.for_each_candidate(p, &mut stats, |key, shape| {
            if best.is_some_and(|b| b <= *key) {
                return;
            }
            if shape_contains(shape, p) {
                best = Some(*key);
            }
        });
        (best, stats)
    }

    /// Serializes the full index (entries and tree) to a self-describing binary blob.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::with_capacity(64 + self.entries.len() * 256);
        w.extend_from_slice(MAGIC);
        put_u32(&mut w, FORMAT_VERSION);
        w.push(level_tag(self.level));
        put_u32(&mut w, self.vintage.len() as u32);
        w.extend_from_slice(self.vintage.as_bytes());
        put_u32(&mut w, self.node_capacity as u32);
        put_u32(&mut w, self.entries.len() as u32);
        for (key, shape) in &self.entries {
            w.extend_from_slice(key.code().as_bytes());
            put_u32(&mut w, shape.parts().len() as u32);
            for &p in shape.parts() {
                put_u32(&mut w, p as u32);
            }
            put_u32(&mut w, shape.rings().len() as u32);
            for ring in shape.rings() {
                put_u32(&mut w, ring.len() as u32);
                for v in ring.vertices() {
                    w.extend_from_slice(&v.lon.to_le_bytes());
                    w.extend_from_slice(&v.lat.to_le_bytes());
                }
            }
        }
        put_u32(&mut w, self.levels.len() as u32);
        for level in &self.levels {
            put_u32(&mut w, level.len() as u32);
            for n in level {
                for f in [n.bbox.min_lon, n.bbox.min_lat, n.bbox.max_lon, n.bbox.max_lat] {
                    w.extend_from_slice(&f.to_le_bytes());
                }
                put_u32(&mut w, n.start);
                put_u32(&mut w, n.end);
            }
        }
        w
    }

    /// Writes the index into `dir` (created if needed) via a temp file and
    /// rename. Returns the file path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf, SpatialError> {
        let io = |e: std::io::Error| SpatialError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let path = dir.join(INDEX_FILE_NAME);
        let tmp = dir.join(format!(".{INDEX_FILE_NAME}.tmp"));
        let res = (|| {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
            std::fs::rename(&tmp, &path)
        })();
        if res.is_err() {
            let _ = std::fs::remove_file(&tmp);
        }
        res.map_err(io)?;
        Ok(path)
    }

    /// Loads an index from a file, or from a directory written by [`save`](Self::save).
    pub fn load(path: &Path) -> Result<Self, SpatialError> {
        let file = if path.is_dir() { path.join(INDEX_FILE_NAME) } else { path.to_path_buf() };
        let bytes = std::fs::read(&file).map_err(|e| SpatialError::Io(format!("{}: {e}", file.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SpatialError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(SpatialError::Corrupt("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(SpatialError::Corrupt(format!("unsupported index format version {version}")));
        }
        let level = tag_level(r.take(1)?[0])?;
        let vlen = r.u32()? as usize;
        let vintage = String::from_utf8(r.take(vlen)?.to_vec()).map_err(|_| SpatialError::Corrupt("vintage not utf-8".into()))?;
        let node_capacity = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(bytes.len()));
        for _ in 0..count {
            let code = std::str::from_utf8(r.take(level.width())?).map_err(|_| SpatialError::Corrupt("bad key".into()))?;
            let key = GeoKey::new(level, code).map_err(|e| SpatialError::Corrupt(e.to_string()))?;
            let nparts = r.u32()? as usize;
            let mut parts = Vec::with_capacity(nparts.min(bytes.len()));
            for _ in 0..nparts {
                parts.push(r.u32()? as usize);
            }
            let nrings = r.u32()? as usize;
            let mut rings = Vec::with_capacity(nrings.min(bytes.len()));
            for _ in 0..nrings {
                let nv = r.u32()? as usize;
                let mut vs = Vec::with_capacity(nv.min(bytes.len() / 16));
                for _ in 0..nv {
                    let lon = r.f64()?;
                    let lat = r.f64()?;
                    vs.push(LonLat::new(lon, lat).map_err(|e| SpatialError::Corrupt(e.to_string()))?);
                }
                rings.push(Ring::new(vs));
            }
            if parts.iter().sum::<usize>() != rings.len() {
                return Err(SpatialError::Corrupt("part counts disagree with ring count".into()));
            }
            let mut grouped = Vec::with_capacity(parts.len());
            let mut it = rings.into_iter();
            for p in parts {
                grouped.push(it.by_ref().take(p).collect());
            }
            entries.push((key, PolygonShape::from_polygons(grouped)));
        }
        let nlevels = r.u32()? as usize;
        let mut levels = Vec::with_capacity(nlevels.min(64));
        for _ in 0..nlevels {
            let nn = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(nn.min(bytes.len() / 40));
            for _ in 0..nn {
                let bbox = BBox::new(r.f64()?, r.f64()?, r.f64()?, r.f64()?);
                nodes.push(Node { bbox, start: r.u32()?, end: r.u32()? });
            }
            levels.push(nodes);
        }
        if r.pos != bytes.len() {
            return Err(SpatialError::Corrupt("trailing bytes".into()));
        }
        let index = SpatialIndex { level, vintage, node_capacity, entries, levels };
        index.check_structure()?;
        Ok(index)
    }

    fn check_structure(&self) -> Result<(), SpatialError> {
        let bad = |m: &str| Err(SpatialError::Corrupt(m.to_string()));
        if self.levels.is_empty() || self.levels.last().map(Vec::len) != Some(1) || self.entries.is_empty() {
            return bad("tree must have a single root and at least one entry");
        }
        for (d, level) in self.levels.iter().enumerate() {
            let below = if d == 0 { self.entries.len() } else { self.levels[d - 1].len() };
            // Packing reorders nodes within a level, so ranges need not be
            // sorted; each child must still belong to exactly one parent.
            let mut covered = vec![false; below];
            for n in level {
                if n.end <= n.start || n.end as usize > below {
                    return bad("node range out of bounds");
                }
                for c in &mut covered[n.start as usize..n.end as usize] {
                    if std::mem::replace(c, true) {
                        return bad("node ranges overlap");
                    }
                }
            }
            if covered.iter().any(|c| !c) {
                return bad("node ranges do not cover the level below");
            }
        }
        Ok(())
    }
}

/// Resolves a point to the key of the polygon containing it.
///
/// When several polygons contain the point (shared edges, vertices), the
/// smallest key wins.
pub fn resolve_point(index: &SpatialIndex, p: LonLat) -> Option<GeoKey> {
    index.resolve_with_stats(p).0
}

/// Resolves every point, in input order.
pub fn resolve_batch(index: &SpatialIndex, points: &[LonLat]) -> Vec<Option<GeoKey>> {
    resolve_batch_with(index, points, Execution::default())
}

pub fn resolve_batch_with(index: &SpatialIndex, points: &[LonLat], exec: Execution) -> Vec<Option<GeoKey>> {
    exec.map(points, |p| resolve_point(index, *p))
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn level_tag(level: GeoLevel) -> u8 {
    GeoLevel::ALL.iter().position(|l| *l == level).unwrap() as u8
}

fn tag_level(tag: u8) -> Result<GeoLevel, SpatialError> {
    GeoLevel::ALL
        .get(tag as usize)
        .copied()
        .ok_or_else(|| SpatialError::Corrupt(format!("unknown level tag {tag}")))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SpatialError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| SpatialError::Corrupt("truncated index".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SpatialError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, SpatialError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lon: f64, lat: f64) -> LonLat {
        LonLat { lon, lat }
    }

    fn square(x0: f64, y0: f64) -> PolygonShape {
        PolygonShape::from_rings(vec![Ring::new(vec![
            p(x0, y0),
            p(x0 + 1., y0),
            p(x0 + 1., y0 + 1.),
            p(x0, y0 + 1.),
            p(x0, y0),
        ])])
    }

    fn grid(n: usize) -> BoundarySet {
        let mut set = BoundarySet::new(GeoLevel::Tract, "synthetic");
        for row in 0..n {
            for col in 0..n {
                let code = format!("12001{:06}", row * n + col);
                set.insert(GeoKey::new(GeoLevel::Tract, &code).unwrap(), square(col as f64, row as f64)).unwrap();
            }
        }
        set
    }

    fn unit_square_index() -> SpatialIndex {
        let mut set = BoundarySet::new(GeoLevel::Tract, "");
        set.insert(GeoKey::new(GeoLevel::Tract, "12001000100").unwrap(), square(0., 0.)).unwrap();
        build_index(&set).unwrap()
    }

    #[test]
    fn single_entry_has_height_one() {
        let idx = unit_square_index();
        assert_eq!(idx.height(), 1);
        assert_eq!(resolve_point(&idx, p(0.5, 0.5)).unwrap().code(), "12001000100");
        assert_eq!(resolve_point(&idx, p(2.0, 2.0)), None);
    }

    #[test]
    fn empty_set_rejected() {
        let set = BoundarySet::new(GeoLevel::Tract, "");
        assert!(matches!(build_index(&set), Err(SpatialError::EmptySet)));
    }

    #[test]
    fn shared_edge_goes_to_smaller_key() {
        let mut set = BoundarySet::new(GeoLevel::County, "");
        set.insert(GeoKey::new(GeoLevel::County, "12003").unwrap(), square(0., 0.)).unwrap();
        set.insert(GeoKey::new(GeoLevel::County, "12001").unwrap(), square(1., 0.)).unwrap();
        let idx = build_index(&set).unwrap();
        assert_eq!(resolve_point(&idx, p(1.0, 0.5)).unwrap().code(), "12001");
        assert_eq!(resolve_point(&idx, p(0.5, 0.5)).unwrap().code(), "12003");
    }

    #[test]
    fn grid_queries_touch_few_leaves() {
        let idx = build_index(&grid(10)).unwrap();
        let mut worst = QueryStats::default();
        // quarter-unit lattice hits interiors, edges and vertices
        for i in 0..=40 {
            for j in 0..=40 {
                let (hit, stats) = idx.resolve_with_stats(p(i as f64 * 0.25, j as f64 * 0.25));
                assert!(hit.is_some());
                worst.leaf_nodes_visited = worst.leaf_nodes_visited.max(stats.leaf_nodes_visited);
                worst.candidates = worst.candidates.max(stats.candidates);
            }
        }
        assert!(worst.candidates <= 4, "{worst:?}");
        assert!(worst.leaf_nodes_visited <= 4, "{worst:?}");
    }

    #[test]
    fn build_is_deterministic_and_serializable() {
        let set = grid(7);
        let a = build_index(&set).unwrap();
        let b = build_index(&set).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let back = SpatialIndex::from_bytes(&a.to_bytes()).unwrap();
        assert_eq!(back, a);
        let bytes = a.to_bytes();
        assert!(SpatialIndex::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(SpatialIndex::from_bytes(b"nope").is_err());
    }

    #[test]
    fn every_entry_reachable() {
        let idx = build_index_with_capacity(&grid(9), 4).unwrap();
        assert!(idx.height() > 2);
        for (key, shape) in idx.entries() {
            let (cx, cy) = shape.bbox().center();
            assert_eq!(resolve_point(&idx, p(cx, cy)), Some(*key));
        }
    }

    #[test]
    fn batch_matches_point_loop() {
        let idx = build_index(&grid(5)).unwrap();
        assert!(resolve_batch(&idx, &[]).is_empty());
        let pts: Vec<LonLat> = (0..500).map(|i| p((i % 61) as f64 * 0.1 - 0.5, (i % 53) as f64 * 0.11 - 0.5)).collect();
        let expected: Vec<_> = pts.iter().map(|q| resolve_point(&idx, *q)).collect();
        assert_eq!(resolve_batch_with(&idx, &pts, Execution::Sequential), expected);
        assert_eq!(resolve_batch_with(&idx, &pts, Execution::Parallel), expected);
    }
}
