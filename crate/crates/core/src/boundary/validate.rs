use serde::Serialize;

use super::BoundarySet;
use crate::geo::GeoKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    /// The ring lacked its closing vertex; one was appended.
    AutoClosed,
    TooFewPoints,
    ZeroArea,
    DegenerateBbox,
    /// Longitude span over 180 degrees, i.e. the polygon wraps the antimeridian.
    AntimeridianSpan,
}

impl IssueKind {
    /// Issues that make a layer unusable for indexing.
    pub fn is_error(self) -> bool {
        matches!(self, IssueKind::TooFewPoints | IssueKind::AntimeridianSpan)
    }

    pub fn message(self) -> &'static str {
        match self {
            IssueKind::AutoClosed => "auto-closed",
            IssueKind::TooFewPoints => "ring with fewer than 4 points",
            IssueKind::ZeroArea => "zero-area ring",
            IssueKind::DegenerateBbox => "degenerate bbox",
            IssueKind::AntimeridianSpan => "crosses the antimeridian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    pub key: String,
    /// Ring index within the shape; absent for shape-level issues.
    pub ring: Option<usize>,
    pub kind: IssueKind,
    pub message: &'static str,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(|i| i.kind.is_error())
    }

    pub fn count(&self, kind: IssueKind) -> usize {
        self.issues.iter().filter(|i| i.kind == kind).count()
    }
}

fn issue(key: &GeoKey, ring: Option<usize>, kind: IssueKind) -> ValidationIssue {
    ValidationIssue { key: key.code().to_string(), ring, kind, message: kind.message() }
}

/// Checks every ring of every entry. The only change made to the set is
/// appending a closing vertex to unclosed rings.
pub fn validate_boundaries(set: &mut BoundarySet) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (key, shape) in set.iter_mut() {
        for (i, ring) in shape.rings_mut().iter_mut().enumerate() {
            if !ring.is_empty() && !ring.is_closed() {
                ring.close();
                report.issues.push(issue(key, Some(i), IssueKind::AutoClosed));
            }
            if ring.len() < 4 {
                report.issues.push(issue(key, Some(i), IssueKind::TooFewPoints));
            } else if ring.signed_area() == 0.0 {
                report.issues.push(issue(key, Some(i), IssueKind::ZeroArea));
            }
        }
        let b = shape.bbox();
        if b.is_empty() || b.max_lon == b.min_lon || b.max_lat == b.min_lat {
            report.issues.push(issue(key, None, IssueKind::DegenerateBbox));
        }
        if !b.is_empty() && b.max_lon - b.min_lon > 180.0 {
            report.issues.push(issue(key, None, IssueKind::AntimeridianSpan));
        }
    }
    report
}
