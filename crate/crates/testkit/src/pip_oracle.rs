//! Brute-force point location over raw rings.
//!
//! Boundary points count as inside. Interior classification casts a ray
//! upward (+lat) and counts edge crossings over every ring of a shape.
//! Whenever floating point is too close to call, the decision is redone in
//! exact rational arithmetic.

use std::cmp::Ordering;

use num_rational::BigRational;

use crate::geometry::{Pt, RawLayer};

/// Float results farther than this from zero are trusted as they are.
const MARGIN: f64 = 1e-6;

fn q(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite coordinate")
}

/// Sign of (b - a) x (p - a).
fn cross_sign(p: Pt, a: Pt, b: Pt) -> Ordering {
    let c = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    if c.abs() > MARGIN {
        return c.partial_cmp(&0.0).unwrap();
    }
    let exact = (q(b.0) - q(a.0)) * (q(p.1) - q(a.1)) - (q(b.1) - q(a.1)) * (q(p.0) - q(a.0));
    exact.cmp(&q(0.0))
}

fn on_segment(p: Pt, a: Pt, b: Pt) -> bool {
    p.0 >= a.0.min(b.0)
        && p.0 <= a.0.max(b.0)
        && p.1 >= a.1.min(b.1)
        && p.1 <= a.1.max(b.1)
        && cross_sign(p, a, b) == Ordering::Equal
}

/// Whether the edge a-b, evaluated at longitude p.0, lies strictly above p.
fn edge_above(p: Pt, a: Pt, b: Pt) -> bool {
    let y = a.1 + (p.0 - a.0) * (b.1 - a.1) / (b.0 - a.0);
    if (y - p.1).abs() > MARGIN {
        return y > p.1;
    }
    let y = q(a.1) + (q(p.0) - q(a.0)) * (q(b.1) - q(a.1)) / (q(b.0) - q(a.0));
    y > q(p.1)
}

pub fn on_boundary(rings: &[Vec<Pt>], p: Pt) -> bool {
    rings.iter().any(|r| r.windows(2).any(|w| on_segment(p, w[0], w[1])))
}

fn upward_crossings(ring: &[Pt], p: Pt) -> usize {
    let mut n = 0;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.0 > p.0) != (b.0 > p.0) && edge_above(p, a, b) {
            n += 1;
        }
    }
    n
}

pub fn contains(rings: &[Vec<Pt>], p: Pt) -> bool {
    on_boundary(rings, p) || rings.iter().map(|r| upward_crossings(r, p)).sum::<usize>() % 2 == 1
}

/// Smallest key whose shape contains `p`, scanning every shape.
pub fn brute_force_resolve(layer: &RawLayer, p: Pt) -> Option<String> {
    let mut best: Option<&str> = None;
    for (key, rings) in &layer.shapes {
        if contains(rings, p) && best.is_none_or(|b| key.as_str() < b) {
            best = Some(key);
        }
    }
    best.map(str::to_string)
}
