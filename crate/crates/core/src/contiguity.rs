//! Queen, rook and bishop contiguity from polygon boundaries.
//!
//! Two units touch when they share boundary coordinates. Coordinates are
//! first snapped to canonical vertices (exact bit equality when the
//! tolerance is zero, greedy clustering within the tolerance otherwise),
//! then units are joined through an inverted index on vertices (queen) and
//! on boundary segments (rook).

use std::collections::{BTreeSet, HashMap};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SpatialGraph;

/// Planar polygon boundary: one or more closed rings.
///
/// Multi-part geometries are carried as extra rings; only boundary
/// coordinates matter for contiguity.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub rings: Vec<Vec<[f64; 2]>>,
}

impl Polygon {
    pub fn new(rings: Vec<Vec<[f64; 2]>>) -> Self {
        Self { rings }
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]` as a closed ring.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(vec![vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]])
    }

    fn validate(&self, id: &str) -> Result<()> {
        let invalid = |reason: String| Error::InvalidPolygon {
            id: id.to_owned(),
            reason,
        };
        if self.rings.is_empty() {
            return Err(invalid("no rings".into()));
        }
        for (r, ring) in self.rings.iter().enumerate() {
            if ring.len() < 4 {
                return Err(invalid(format!("ring {r} has {} coordinates, need at least 4", ring.len())));
            }
            if ring.first() != ring.last() {
                return Err(invalid(format!("ring {r} is not closed")));
            }
            if ring.iter().flatten().any(|c| !c.is_finite()) {
                return Err(invalid(format!("ring {r} has a non-finite coordinate")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialUnit {
    pub id: String,
    pub geometry: Option<Polygon>,
}

impl SpatialUnit {
    pub fn new(id: impl Into<String>, geometry: Polygon) -> Self {
        Self {
            id: id.into(),
            geometry: Some(geometry),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ContiguityKind {
    /// Shared edge or vertex.
    #[default]
    Queen,
    /// Shared edge.
    Rook,
    /// Shared vertex but no shared edge.
    Bishop,
}

impl FromStr for ContiguityKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "queen" => Ok(Self::Queen),
            "rook" => Ok(Self::Rook),
            "bishop" => Ok(Self::Bishop),
            other => Err(format!("unknown contiguity rule `{other}` (expected queen, rook or bishop)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContiguityRule {
    pub kind: ContiguityKind,
    /// Maximum distance between coordinates treated as the same vertex.
    pub snap_tolerance: f64,
}

impl ContiguityRule {
    pub fn new(kind: ContiguityKind) -> Self {
        Self {
            kind,
            snap_tolerance: 0.0,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.snap_tolerance = tolerance;
        self
    }
}

/// Queen and rook pair sets for a unit collection, keyed by unit index.
#[derive(Debug, Clone, Default)]
pub struct ContiguityPairs {
    pub queen: BTreeSet<(usize, usize)>,
    pub rook: BTreeSet<(usize, usize)>,
}

impl ContiguityPairs {
    pub fn bishop(&self) -> BTreeSet<(usize, usize)> {
        self.queen.difference(&self.rook).copied().collect()
    }

    pub fn select(&self, kind: ContiguityKind) -> BTreeSet<(usize, usize)> {
        match kind {
            ContiguityKind::Queen => self.queen.clone(),
            ContiguityKind::Rook => self.rook.clone(),
            ContiguityKind::Bishop => self.bishop(),
        }
    }
}

pub fn build_contiguity_graph(units: &[SpatialUnit], rule: ContiguityRule) -> Result<SpatialGraph> {
    let pairs = contiguity_pairs(units, rule.snap_tolerance)?;
    let edges: Vec<_> = pairs.select(rule.kind).into_iter().collect();
    let ids = units.iter().map(|u| u.id.clone()).collect();
    SpatialGraph::from_index_edges(ids, &edges)
}

/// Computes queen and rook adjacency for every unit pair.
pub fn contiguity_pairs(units: &[SpatialUnit], snap_tolerance: f64) -> Result<ContiguityPairs> {
    if !(snap_tolerance >= 0.0) || !snap_tolerance.is_finite() {
        return Err(Error::InvalidTolerance(snap_tolerance));
    }
    let mut seen = BTreeSet::new();
    let mut polygons = Vec::with_capacity(units.len());
    for unit in units {
        if !seen.insert(unit.id.as_str()) {
            return Err(Error::DuplicateId(unit.id.clone()));
        }
        let polygon = unit
            .geometry
            .as_ref()
            .ok_or_else(|| Error::MissingGeometry(unit.id.clone()))?;
        polygon.validate(&unit.id)?;
        polygons.push(polygon);
    }

    let snapper = Snapper::new(
        polygons
            .iter()
            .flat_map(|p| p.rings.iter().flatten().copied()),
        snap_tolerance,
    );

    let mut by_vertex: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut by_segment: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (unit, polygon) in polygons.iter().enumerate() {
        let mut vertices = BTreeSet::new();
        let mut segments = BTreeSet::new();
        for ring in &polygon.rings {
            let snapped: Vec<usize> = ring.iter().map(|c| snapper.vertex(*c)).collect();
            vertices.extend(snapped.iter().copied());
            for w in snapped.windows(2) {
                if w[0] != w[1] {
                    segments.insert((w[0].min(w[1]), w[0].max(w[1])));
                }
            }
        }
        for v in vertices {
            by_vertex.entry(v).or_default().push(unit);
        }
        for s in segments {
            by_segment.entry(s).or_default().push(unit);
        }
    }

    Ok(ContiguityPairs {
        queen: incident_pairs(by_vertex.into_values()),
        rook: incident_pairs(by_segment.into_values()),
    })
}

fn incident_pairs(groups: impl Iterator<Item = Vec<usize>>) -> BTreeSet<(usize, usize)> {
    let mut pairs = BTreeSet::new();
    for group in groups {
        for (i, &a) in group.iter().enumerate() {
            for &b in &group[i + 1..] {
                pairs.insert((a.min(b), a.max(b)));
            }
        }
    }
    pairs
}

/// Maps raw coordinates to canonical vertex indices.
struct Snapper {
    exact: HashMap<(u64, u64), usize>,
    tolerance: f64,
    /// Cluster index for every distinct raw coordinate (tolerance > 0).
    clustered: HashMap<(u64, u64), usize>,
}

fn coord_key(c: [f64; 2]) -> (u64, u64) {
    // +0.0 folds -0.0 onto 0.0
    ((c[0] + 0.0).to_bits(), (c[1] + 0.0).to_bits())
}

impl Snapper {
    fn new(coords: impl Iterator<Item = [f64; 2]>, tolerance: f64) -> Self {
        let mut exact = HashMap::new();
        let mut distinct = Vec::new();
        for c in coords {
            let key = coord_key(c);
            if !exact.contains_key(&key) {
                exact.insert(key, exact.len());
                distinct.push(c);
            }
        }
        let mut clustered = HashMap::new();
        if tolerance > 0.0 {
            // Sorting first makes cluster assignment independent of unit order.
            distinct.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
            let cell = |c: [f64; 2]| ((c[0] / tolerance).floor() as i64, (c[1] / tolerance).floor() as i64);
            let mut grid: HashMap<(i64, i64), Vec<([f64; 2], usize)>> = HashMap::new();
            let mut next = 0;
            for c in distinct {
                let (cx, cy) = cell(c);
                let mut found = None;
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        let Some(reps) = grid.get(&(cx + dx, cy + dy)) else {
                            continue;
                        };
                        for (rep, id) in reps {
                            let d = (rep[0] - c[0]).hypot(rep[1] - c[1]);
                            if d <= tolerance && found.is_none_or(|f| *id < f) {
                                found = Some(*id);
                            }
                        }
                    }
                }
                let id = found.unwrap_or_else(|| {
                    grid.entry((cx, cy)).or_default().push((c, next));
                    next += 1;
                    next - 1
                });
                clustered.insert(coord_key(c), id);
            }
        }
        Self {
            exact,
            tolerance,
            clustered,
        }
    }

    fn vertex(&self, c: [f64; 2]) -> usize {
        let key = coord_key(c);
        if self.tolerance > 0.0 {
            self.clustered[&key]
        } else {
            self.exact[&key]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize) -> Vec<SpatialUnit> {
        let mut units = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let (x, y) = (c as f64, r as f64);
                units.push(SpatialUnit::new(format!("r{r}c{c}"), Polygon::rectangle(x, y, x + 1.0, y + 1.0)));
            }
        }
        units
    }

    #[test]
    fn single_polygon_has_no_edges() {
        let g = build_contiguity_graph(&grid(1, 1), ContiguityRule::default()).unwrap();
        assert_eq!((g.len(), g.edge_count()), (1, 0));
    }

    #[test]
    fn grid_3x3_counts() {
        let units = grid(3, 3);
        let queen = build_contiguity_graph(&units, ContiguityRule::new(ContiguityKind::Queen)).unwrap();
        let rook = build_contiguity_graph(&units, ContiguityRule::new(ContiguityKind::Rook)).unwrap();
        let bishop = build_contiguity_graph(&units, ContiguityRule::new(ContiguityKind::Bishop)).unwrap();
        assert_eq!(queen.edge_count(), 20);
        assert_eq!(rook.edge_count(), 12);
        assert_eq!(bishop.edge_count(), 8);
        let center = queen.index_of("r1c1").unwrap();
        assert_eq!(queen.degree(center), 8);
        assert_eq!(bishop.degree(center), 4);
        for corner in ["r0c0", "r0c2", "r2c0", "r2c2"] {
            assert_eq!(bishop.degree(bishop.index_of(corner).unwrap()), 1);
        }
    }

    #[test]
    fn missing_geometry_names_unit() {
        let mut units = grid(1, 2);
        units[1].geometry = None;
        let err = build_contiguity_graph(&units, ContiguityRule::default()).unwrap_err();
        assert!(matches!(err, Error::MissingGeometry(ref id) if id == "r0c1"));
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut units = grid(1, 2);
        units[1].id = units[0].id.clone();
        assert!(matches!(
            build_contiguity_graph(&units, ContiguityRule::default()),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn negative_tolerance_rejected() {
        let rule = ContiguityRule::default().with_tolerance(-1.0);
        assert!(matches!(
            build_contiguity_graph(&grid(2, 2), rule),
            Err(Error::InvalidTolerance(_))
        ));
    }

    #[test]
    fn open_ring_rejected() {
        let units = vec![SpatialUnit::new(
            "a",
            Polygon::new(vec![vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]]),
        )];
        assert!(matches!(
            build_contiguity_graph(&units, ContiguityRule::default()),
            Err(Error::InvalidPolygon { .. })
        ));
    }

    #[test]
    fn tolerance_joins_near_misses() {
        let units = vec![
            SpatialUnit::new("a", Polygon::rectangle(0.0, 0.0, 1.0, 1.0)),
            SpatialUnit::new("b", Polygon::rectangle(1.0004, 0.0, 2.0, 1.0)),
        ];
        let exact = build_contiguity_graph(&units, ContiguityRule::new(ContiguityKind::Rook)).unwrap();
        assert_eq!(exact.edge_count(), 0);
        let snapped =
            build_contiguity_graph(&units, ContiguityRule::new(ContiguityKind::Rook).with_tolerance(1e-3)).unwrap();
        assert_eq!(snapped.edge_count(), 1);
    }

    #[test]
    fn parses_rule_names() {
        assert_eq!("Queen".parse::<ContiguityKind>().unwrap(), ContiguityKind::Queen);
        assert!("hexagon".parse::<ContiguityKind>().is_err());
    }
}
