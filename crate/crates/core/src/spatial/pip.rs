//! Point-in-polygon containment.

use robust::{orient2d, Coord};

use crate::boundary::PolygonShape;
use crate::geo::LonLat;

/// Closed even-odd containment: a point on any ring edge is inside;
/// otherwise a ray towards +lon must cross an odd number of edges.
///
/// An edge crosses the ray iff exactly one endpoint lies strictly above the
/// ray's latitude, which makes vertex hits count once. Both the on-edge test
/// and the side-of-edge test use an exact orientation predicate, so the
/// answer does not depend on ring direction or rounding.
pub fn shape_contains(shape: &PolygonShape, p: LonLat) -> bool {
    let mut inside = false;
    for ring in shape.rings() {
        let v = ring.vertices();
        let n = v.len();
        if n < 2 {
            continue;
        }
        // Rings are closed, so consecutive pairs cover every edge; the extra
        // wrap edge is a zero-length no-op on closed input and closes open rings.
        let mut a = v[n - 1];
        for &b in v {
            let straddles = (a.lat > p.lat) != (b.lat > p.lat);
            if straddles || in_box(a, b, p) {
                let o = orient(a, b, p);
                if o == 0.0 && in_box(a, b, p) {
                    return true;
                }
                // left of an upward edge, or right of a downward one
                if straddles && (o > 0.0) == (b.lat > a.lat) {
                    inside = !inside;
                }
            }
            a = b;
        }
    }
    inside
}

#[inline]
fn in_box(a: LonLat, b: LonLat, p: LonLat) -> bool {
    p.lon >= a.lon.min(b.lon) && p.lon <= a.lon.max(b.lon) && p.lat >= a.lat.min(b.lat) && p.lat <= a.lat.max(b.lat)
}

/// Exact sign of the turn a -> b -> p; positive when p is to the left.
#[inline]
fn orient(a: LonLat, b: LonLat, p: LonLat) -> f64 {
    orient2d(Coord { x: a.lon, y: a.lat }, Coord { x: b.lon, y: b.lat }, Coord { x: p.lon, y: p.lat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::Ring;

    fn p(lon: f64, lat: f64) -> LonLat {
        LonLat { lon, lat }
    }

    fn square(x0: f64, y0: f64, s: f64) -> Ring {
        Ring::new(vec![p(x0, y0), p(x0 + s, y0), p(x0 + s, y0 + s), p(x0, y0 + s), p(x0, y0)])
    }

    #[test]
    fn interior_exterior_boundary() {
        let shape = PolygonShape::from_rings(vec![square(0., 0., 1.)]);
        assert!(shape_contains(&shape, p(0.5, 0.5)));
        assert!(!shape_contains(&shape, p(1.5, 0.5)));
        assert!(!shape_contains(&shape, p(-0.5, 1.0)));
        // edges and vertices count as inside
        assert!(shape_contains(&shape, p(1.0, 0.5)));
        assert!(shape_contains(&shape, p(0.0, 0.0)));
        assert!(shape_contains(&shape, p(0.3, 1.0)));
    }

    #[test]
    fn hole_is_outside() {
        let shape = PolygonShape::from_rings(vec![square(0., 0., 4.), square(1., 1., 2.)]);
        assert!(shape_contains(&shape, p(0.5, 0.5)));
        assert!(!shape_contains(&shape, p(2.0, 2.0)));
        // hole boundary belongs to the polygon
        assert!(shape_contains(&shape, p(1.0, 2.0)));
    }

    #[test]
    fn ray_through_vertex_counts_once() {
        // diamond with vertices on the ray y = 0
        let diamond = Ring::new(vec![p(0., -1.), p(1., 0.), p(0., 1.), p(-1., 0.), p(0., -1.)]);
        let shape = PolygonShape::from_rings(vec![diamond]);
        assert!(shape_contains(&shape, p(0.0, 0.0)));
        assert!(!shape_contains(&shape, p(-2.0, 0.0)));
        assert!(!shape_contains(&shape, p(2.0, 0.0)));
        assert!(shape_contains(&shape, p(0.5, 0.5)));
    }

    #[test]
    fn near_collinear_points_ignore_ring_direction() {
        // on the line x + y = 20.5 only after rounding
        let q = p(19.624999999, 0.875000001);
        let fwd = Ring::new(vec![p(18.0, 0.5), p(20.0, 0.5), p(19.0, 1.5), p(18.0, 0.5)]);
        let mut rev: Vec<LonLat> = fwd.vertices().to_vec();
        rev.reverse();
        let a = shape_contains(&PolygonShape::from_rings(vec![fwd]), q);
        let b = shape_contains(&PolygonShape::from_rings(vec![Ring::new(rev)]), q);
        assert_eq!(a, b);
    }
}
