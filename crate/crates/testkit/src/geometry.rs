use arealink_core::boundary::{BoundarySet, PolygonShape, Ring};
use arealink_core::{GeoKey, GeoLevel, LonLat};
use rand::Rng;

pub type Pt = (f64, f64);

/// A boundary layer as plain data: (key, closed rings) sorted by key.
#[derive(Debug, Clone)]
pub struct RawLayer {
    pub level: GeoLevel,
    pub shapes: Vec<(String, Vec<Vec<Pt>>)>,
}

impl RawLayer {
    pub fn new(level: GeoLevel, mut shapes: Vec<(String, Vec<Vec<Pt>>)>) -> Self {
        shapes.sort_by(|a, b| a.0.cmp(&b.0));
        RawLayer { level, shapes }
    }

    pub fn to_boundary_set(&self) -> BoundarySet {
        let mut set = BoundarySet::new(self.level, "synthetic");
        for (key, rings) in &self.shapes {
            let rings = rings
                .iter()
                .map(|r| Ring::new(r.iter().map(|&(x, y)| LonLat::new(x, y).expect("synthetic coordinate")).collect()))
                .collect();
            set.insert(GeoKey::new(self.level, key).expect("synthetic key"), PolygonShape::from_rings(rings))
                .expect("unique synthetic key");
        }
        set
    }
}

pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Pt> {
    vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
}

fn tract_code(state: &str, county: u32, tract: u32) -> String {
    format!("{state}{county:03}{tract:06}")
}

/// 10x10 unit squares on [0,10]^2 plus three hole-bearing shapes east of
/// the grid, one of which has a second shape filling its hole exactly.
pub fn oracle_layer() -> RawLayer {
    let mut shapes = Vec::new();
    for row in 0..10u32 {
        for col in 0..10u32 {
            let (x, y) = (col as f64, row as f64);
            shapes.push((tract_code("12", 1, (row * 10 + col + 1) * 100), vec![rect(x, y, x + 1.0, y + 1.0)]));
        }
    }
    shapes.push((tract_code("12", 3, 100), vec![rect(12.0, 0.0, 16.0, 4.0), rect(13.0, 1.0, 15.0, 3.0)]));
    shapes.push((tract_code("12", 3, 200), vec![rect(13.0, 1.0, 15.0, 3.0)]));
    shapes.push((
        tract_code("12", 3, 300),
        vec![rect(12.0, 5.0, 16.0, 9.0), rect(12.5, 5.5, 13.5, 6.5), rect(14.0, 7.0, 15.5, 8.5)],
    ));
    // Concave outline with a notch down to a reflex vertex at (19, 2).
    shapes.push((
        tract_code("12", 3, 400),
        vec![
            vec![(17.0, 0.0), (21.0, 0.0), (21.0, 4.0), (19.0, 2.0), (17.0, 4.0), (17.0, 0.0)],
            vec![(18.0, 0.5), (20.0, 0.5), (19.0, 1.5), (18.0, 0.5)],
        ],
    ));
    RawLayer::new(GeoLevel::Tract, shapes)
}

/// Extent of [`oracle_layer`] padded by one unit.
pub const ORACLE_EXTENT: (Pt, Pt) = ((-1.0, -1.0), (22.0, 11.0));

/// Points on vertices and edges of the oracle layer, at exactly
/// representable positions, plus a few just off them.
pub fn adversarial_points(count: usize, rng: &mut impl Rng) -> Vec<Pt> {
    let layer = oracle_layer();
    let mut segments: Vec<(Pt, Pt)> = Vec::new();
    for (_, rings) in &layer.shapes {
        for r in rings {
            for w in r.windows(2) {
                segments.push((w[0], w[1]));
            }
        }
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let (a, b) = segments[rng.random_range(0..segments.len())];
        let p = match rng.random_range(0..4) {
            0 => a,
            1 => {
                // dyadic fractions keep the point exactly on the segment
                let t = rng.random_range(0..=16) as f64 / 16.0;
                (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
            }
            2 => {
                let t = rng.random_range(1..16) as f64 / 16.0;
                let eps = if rng.random_bool(0.5) { 1e-9 } else { -1e-9 };
                (a.0 + (b.0 - a.0) * t + eps, a.1 + (b.1 - a.1) * t - eps)
            }
            _ => (a.0.next_up(), a.1.next_down()),
        };
        out.push(p);
    }
    out
}

/// Nested states, counties and tracts: two 8x8 states side by side, each
/// split into four 4x4 counties, each split into sixteen unit tracts.
pub fn nested_layers() -> (RawLayer, RawLayer, RawLayer) {
    let (mut states, mut counties, mut tracts) = (Vec::new(), Vec::new(), Vec::new());
    for (s, state) in ["12", "13"].into_iter().enumerate() {
        let sx = s as f64 * 8.0;
        states.push((state.to_string(), vec![rect(sx, 0.0, sx + 8.0, 8.0)]));
        for c in 0..4u32 {
            let (cx, cy) = (sx + (c % 2) as f64 * 4.0, (c / 2) as f64 * 4.0);
            let county = 2 * c + 1;
            counties.push((format!("{state}{county:03}"), vec![rect(cx, cy, cx + 4.0, cy + 4.0)]));
            for t in 0..16u32 {
                let (tx, ty) = (cx + (t % 4) as f64, cy + (t / 4) as f64);
                tracts.push((tract_code(state, county, (t + 1) * 100), vec![rect(tx, ty, tx + 1.0, ty + 1.0)]));
            }
        }
    }
    (
        RawLayer::new(GeoLevel::State, states),
        RawLayer::new(GeoLevel::County, counties),
        RawLayer::new(GeoLevel::Tract, tracts),
    )
}

fn jitter(line: u64, seg: u64, t: u64, salt: u64) -> f64 {
    // splitmix64 of the vertex identity, mapped to [-1, 1)
    let mut z = line.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ seg.rotate_left(21) ^ t.rotate_left(42) ^ salt;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// A `cols` x `rows` mesh of tract-like cells. Every cell edge carries
/// `subdiv - 1` jittered interior vertices shared with the neighbouring
/// cell, so the layer tiles the plane without gaps or overlaps.
pub struct Mesh {
    pub cols: usize,
    pub rows: usize,
    pub origin: Pt,
    pub cell: f64,
    pub subdiv: usize,
}

impl Mesh {
    pub fn florida_like(target_cells: usize) -> Mesh {
        let cols = (target_cells as f64).sqrt().ceil() as usize;
        let rows = target_cells.div_ceil(cols);
        Mesh { cols, rows, origin: (-87.5, 24.5), cell: 0.02, subdiv: 4 }
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn key(&self, idx: usize) -> String {
        let county = 1 + idx / 9_999;
        let tract = (idx % 9_999 + 1) * 100;
        format!("12{county:03}{tract:06}")
    }

    fn x(&self, i: usize) -> f64 {
        self.origin.0 + i as f64 * self.cell
    }

    fn y(&self, j: usize) -> f64 {
        self.origin.1 + j as f64 * self.cell
    }

    fn amp(&self) -> f64 {
        self.cell * 0.2
    }

    /// Interior vertices of the horizontal line `j` between columns `i` and `i+1`.
    fn h_edge(&self, i: usize, j: usize) -> Vec<Pt> {
        (1..self.subdiv)
            .map(|t| {
                let x = self.x(i) + t as f64 * self.cell / self.subdiv as f64;
                (x, self.y(j) + self.amp() * jitter(j as u64, i as u64, t as u64, 1))
            })
            .collect()
    }

    /// Interior vertices of the vertical line `i` between rows `j` and `j+1`.
    fn v_edge(&self, i: usize, j: usize) -> Vec<Pt> {
        (1..self.subdiv)
            .map(|t| {
                let y = self.y(j) + t as f64 * self.cell / self.subdiv as f64;
                (self.x(i) + self.amp() * jitter(i as u64, j as u64, t as u64, 2), y)
            })
            .collect()
    }

    pub fn ring(&self, idx: usize) -> Vec<Pt> {
        let (i, j) = (idx % self.cols, idx / self.cols);
        let mut r = vec![(self.x(i), self.y(j))];
        r.extend(self.h_edge(i, j));
        r.push((self.x(i + 1), self.y(j)));
        r.extend(self.v_edge(i + 1, j));
        r.push((self.x(i + 1), self.y(j + 1)));
        r.extend(self.h_edge(i, j + 1).into_iter().rev());
        r.push((self.x(i), self.y(j + 1)));
        r.extend(self.v_edge(i, j).into_iter().rev());
        r.push((self.x(i), self.y(j)));
        r
    }

    pub fn boundary_set(&self) -> BoundarySet {
        let mut set = BoundarySet::new(GeoLevel::Tract, "mesh");
        for idx in 0..self.len() {
            let ring = Ring::new(self.ring(idx).into_iter().map(|(x, y)| LonLat::new(x, y).unwrap()).collect());
            set.insert(GeoKey::new(GeoLevel::Tract, &self.key(idx)).unwrap(), PolygonShape::from_rings(vec![ring]))
                .unwrap();
        }
        set
    }

    /// Random points over the mesh extent, a few of them just outside it.
    pub fn random_points(&self, n: usize, rng: &mut impl Rng) -> Vec<Pt> {
        let (x0, y0) = (self.x(0) - self.cell, self.y(0) - self.cell);
        let (x1, y1) = (self.x(self.cols) + self.cell, self.y(self.rows) + self.cell);
        (0..n).map(|_| (rng.random_range(x0..x1), rng.random_range(y0..y1))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pip_oracle::contains;

    #[test]
    fn mesh_cells_tile() {
        let m = Mesh { cols: 4, rows: 3, origin: (0.0, 0.0), cell: 1.0, subdiv: 4 };
        let mut r = crate::rng(1);
        for p in m.random_points(2000, &mut r) {
            let hits = (0..m.len()).filter(|&i| contains(&[m.ring(i)], p)).count();
            let inside = p.0 > 0.3 && p.0 < 3.7 && p.1 > 0.3 && p.1 < 2.7;
            assert!(hits >= 1 || !inside, "gap at {p:?}");
            assert!(hits <= 1, "overlap at {p:?}");
        }
        let keys: std::collections::HashSet<_> = (0..30_000).map(|i| m.key(i)).collect();
        assert_eq!(keys.len(), 30_000);
    }
}
