//! File formats: comma-separated tables, GeoJSON geometry and JSON
//! reports. Every writer goes through a temporary file in the target
//! directory and renames it into place.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use geojson::{FeatureCollection, GeoJson, Value};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{AttributeRow, AttributeTable};
use crate::contiguity::{Polygon, SpatialUnit};
use crate::diffusion::{ThresholdVector, Trajectory};
use crate::empirical::RecoveryDurationTable;
use crate::error::{Error, Result};
use crate::ga::GenerationRecord;
use crate::graph::{load_edge_list, SpatialGraph};

/// Writes `path` atomically: the closure fills a temporary sibling file
/// that replaces `path` only once it returns successfully.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    write_atomic(path, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        for row in rows {
            wtr.serialize(row).map_err(std::io::Error::other)?;
        }
        wtr.flush()
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_csv<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let found = rdr.headers().map_err(|e| Error::parse(path, e.to_string()))?;
    for col in header {
        if !found.iter().any(|h| h == *col) {
            return Err(Error::parse(path, format!("missing column `{col}`")));
        }
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::parse(path, e.to_string())))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRow {
    src: String,
    dst: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRow {
    id: String,
}

/// Reads an undirected edge list. Without a node file, nodes are the
/// endpoints in order of first appearance.
pub fn read_edge_list(edges: &Path, nodes: Option<&Path>) -> Result<SpatialGraph> {
    let rows: Vec<EdgeRow> = read_csv(edges, &["src", "dst"])?;
    let ids: Vec<String> = match nodes {
        Some(p) => read_csv::<NodeRow>(p, &["id"])?.into_iter().map(|r| r.id).collect(),
        None => {
            let mut seen = HashSet::new();
            rows.iter()
                .flat_map(|r| [&r.src, &r.dst])
                .filter(|id| seen.insert(id.as_str()))
                .cloned()
                .collect()
        }
    };
    let pairs: Vec<(String, String)> = rows.into_iter().map(|r| (r.src, r.dst)).collect();
    load_edge_list(&ids, &pairs)
}

pub fn write_edge_list(path: &Path, g: &SpatialGraph) -> Result<()> {
    write_csv(
        path,
        g.edges().map(|(u, v)| EdgeRow {
            src: g.id(u).to_owned(),
            dst: g.id(v).to_owned(),
        }),
    )
}

pub fn write_nodes(path: &Path, g: &SpatialGraph) -> Result<()> {
    write_csv(path, g.ids().iter().map(|id| NodeRow { id: id.clone() }))
}

fn feature_collection(path: &Path) -> Result<FeatureCollection> {
    let text = read_to_string(path)?;
    match text.parse::<GeoJson>().map_err(|e| Error::parse(path, e.to_string()))? {
        GeoJson::FeatureCollection(fc) => Ok(fc),
        _ => Err(Error::parse(path, "expected a FeatureCollection")),
    }
}

fn feature_id(path: &Path, index: usize, feature: &geojson::Feature) -> Result<String> {
    match feature.property("id") {
        Some(serde_json::Value::String(s)) => Ok(s.clone()),
        Some(serde_json::Value::Number(n)) => Ok(n.to_string()),
        _ => Err(Error::parse(path, format!("feature {index} has no \"id\" property"))),
    }
}

fn rings(value: &Value) -> Option<Vec<Vec<[f64; 2]>>> {
    let ring = |r: &Vec<Vec<f64>>| r.iter().map(|p| [p[0], p[1]]).collect::<Vec<_>>();
    match value {
        Value::Polygon(poly) => Some(poly.iter().map(ring).collect()),
        Value::MultiPolygon(parts) => Some(parts.iter().flatten().map(ring).collect()),
        _ => None,
    }
}

/// Polygon features keyed by their string `id` property.
pub fn read_geojson_units(path: &Path) -> Result<Vec<SpatialUnit>> {
    let fc = feature_collection(path)?;
    fc.features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let id = feature_id(path, i, f)?;
            let geometry = match &f.geometry {
                None => None,
                Some(g) => Some(Polygon::new(rings(&g.value).ok_or_else(|| {
                    Error::parse(path, format!("feature `{id}` is not a Polygon or MultiPolygon"))
                })?)),
            };
            Ok(SpatialUnit { id, geometry })
        })
        .collect()
}

pub fn write_geojson_units(path: &Path, units: &[SpatialUnit]) -> Result<()> {
    let features = units
        .iter()
        .map(|u| {
            let mut props = serde_json::Map::new();
            props.insert("id".into(), u.id.clone().into());
            geojson::Feature {
                geometry: u.geometry.as_ref().map(|p| {
                    let rings = p.rings.iter().map(|r| r.iter().map(|c| c.to_vec()).collect()).collect();
                    geojson::Geometry::new(Value::Polygon(rings))
                }),
                properties: Some(props),
                ..Default::default()
            }
        })
        .collect();
    let fc = FeatureCollection {
        bbox: None,
        features,
        foreign_members: None,
    };
    write_atomic(path, |w| writeln!(w, "{}", GeoJson::from(fc)))
}

/// Copies a feature collection, adding a boolean `multiplier` property.
pub fn write_multiplier_geojson(input: &Path, output: &Path, selected: &[String]) -> Result<()> {
    let mut fc = feature_collection(input)?;
    let chosen: HashSet<&str> = selected.iter().map(String::as_str).collect();
    for (i, f) in fc.features.iter_mut().enumerate() {
        let id = feature_id(input, i, f)?;
        f.set_property("multiplier", chosen.contains(id.as_str()));
    }
    write_atomic(output, |w| writeln!(w, "{}", GeoJson::from(fc)))
}

#[derive(Debug, Serialize, Deserialize)]
struct DurationRow {
    id: String,
    duration_weeks: f64,
}

pub fn read_durations(path: &Path) -> Result<RecoveryDurationTable> {
    let rows: Vec<DurationRow> = read_csv(path, &["id", "duration_weeks"])?;
    RecoveryDurationTable::new(rows.into_iter().map(|r| (r.id, r.duration_weeks)))
}

pub fn write_durations(path: &Path, table: &RecoveryDurationTable) -> Result<()> {
    write_csv(
        path,
        table.iter().map(|(id, d)| DurationRow {
            id: id.to_owned(),
            duration_weeks: d,
        }),
    )
}

/// Day labels of a visit file: integer indices or ISO dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DayOrigin {
    Index(i64),
    Date(NaiveDate),
}

impl DayOrigin {
    /// Offset of `label` from the earliest day in the file.
    pub fn offset(&self, label: &str) -> Result<usize> {
        let raw = match (self, parse_day(label)) {
            (DayOrigin::Index(o), Some(DayOrigin::Index(d))) => d - o,
            (DayOrigin::Date(o), Some(DayOrigin::Date(d))) => (d - *o).num_days(),
            _ => return Err(Error::InvalidSeries(format!("day `{label}` does not match the visit file's day format"))),
        };
        usize::try_from(raw).map_err(|_| Error::InvalidSeries(format!("day `{label}` precedes the first observation")))
    }
}

fn parse_day(label: &str) -> Option<DayOrigin> {
    if let Ok(i) = label.parse::<i64>() {
        return Some(DayOrigin::Index(i));
    }
    NaiveDate::parse_from_str(label, "%Y-%m-%d").ok().map(DayOrigin::Date)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisitTable {
    pub origin: DayOrigin,
    /// Daily visits per id, day 0 being the file's earliest day.
    pub series: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Deserialize)]
struct VisitRow {
    id: String,
    day: String,
    visits: f64,
}

/// Reads long-form visits. Every id must cover each day from the file's
/// earliest day up to its own last day exactly once.
pub fn read_visits(path: &Path) -> Result<VisitTable> {
    let rows: Vec<VisitRow> = read_csv(path, &["id", "day", "visits"])?;
    let days: Vec<DayOrigin> = rows
        .iter()
        .map(|r| parse_day(&r.day).ok_or_else(|| Error::parse(path, format!("unrecognized day `{}`", r.day))))
        .collect::<Result<_>>()?;
    let origin = match days.first() {
        None => return Err(Error::parse(path, "no visit rows")),
        Some(DayOrigin::Index(_)) => DayOrigin::Index(
            days.iter()
                .map(|d| match d {
                    DayOrigin::Index(i) => Ok(*i),
                    DayOrigin::Date(_) => Err(Error::parse(path, "mixed day formats")),
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .min()
                .expect("nonempty"),
        ),
        Some(DayOrigin::Date(_)) => DayOrigin::Date(
            days.iter()
                .map(|d| match d {
                    DayOrigin::Date(x) => Ok(*x),
                    DayOrigin::Index(_) => Err(Error::parse(path, "mixed day formats")),
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .min()
                .expect("nonempty"),
        ),
    };
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, BTreeMap<usize, f64>> = HashMap::new();
    for row in rows {
        let day = origin.offset(&row.day)?;
        let entry = by_id.entry(row.id.clone()).or_insert_with(|| {
            order.push(row.id.clone());
            BTreeMap::new()
        });
        if entry.insert(day, row.visits).is_some() {
            return Err(Error::parse(path, format!("id `{}` repeats day `{}`", row.id, row.day)));
        }
    }
    let series = order
        .into_iter()
        .map(|id| {
            let days = by_id.remove(&id).expect("collected");
            let last = *days.keys().next_back().expect("nonempty");
            if days.len() != last + 1 {
                return Err(Error::parse(path, format!("id `{id}` has gaps in its daily series")));
            }
            Ok((id, days.into_values().collect()))
        })
        .collect::<Result<_>>()?;
    Ok(VisitTable { origin, series })
}

#[derive(Debug, Serialize, Deserialize)]
struct ThresholdRow {
    id: String,
    threshold: f64,
    is_seed: bool,
}

pub fn write_thresholds(path: &Path, g: &SpatialGraph, tau: &ThresholdVector) -> Result<()> {
    write_csv(
        path,
        g.ids().iter().enumerate().map(|(i, id)| ThresholdRow {
            id: id.clone(),
            threshold: tau.values()[i],
            is_seed: tau.is_seed(i),
        }),
    )
}

/// Thresholds aligned to the node order of `g`.
pub fn read_thresholds(path: &Path, g: &SpatialGraph) -> Result<ThresholdVector> {
    let rows: Vec<ThresholdRow> = read_csv(path, &["id", "threshold", "is_seed"])?;
    let mut values = vec![None; g.len()];
    for r in rows {
        let i = g
            .index_of(&r.id)
            .ok_or_else(|| Error::parse(path, format!("unknown node `{}`", r.id)))?;
        if values[i].replace((r.threshold, r.is_seed)).is_some() {
            return Err(Error::DuplicateId(r.id));
        }
    }
    let (values, seeds): (Vec<f64>, Vec<bool>) = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::parse(path, format!("no threshold for node `{}`", g.id(i)))))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    ThresholdVector::with_seeds(values, seeds)
}

#[derive(Debug, Serialize, Deserialize)]
struct AttributeCsvRow {
    id: String,
    per_capita_income: f64,
    median_household_income: f64,
    minority_pct: f64,
    flood_extent: Option<f64>,
}

pub fn read_attributes(path: &Path) -> Result<AttributeTable> {
    let rows: Vec<AttributeCsvRow> =
        read_csv(path, &["id", "per_capita_income", "median_household_income", "minority_pct"])?;
    AttributeTable::new(rows.into_iter().map(|r| {
        (
            r.id,
            AttributeRow {
                per_capita_income: r.per_capita_income,
                median_household_income: r.median_household_income,
                minority_pct: r.minority_pct,
                flood_extent: r.flood_extent,
            },
        )
    }))
}

pub fn write_attributes(path: &Path, attrs: &AttributeTable) -> Result<()> {
    write_csv(
        path,
        attrs.iter().map(|(id, r)| AttributeCsvRow {
            id: id.to_owned(),
            per_capita_income: r.per_capita_income,
            median_household_income: r.median_household_income,
            minority_pct: r.minority_pct,
            flood_extent: r.flood_extent,
        }),
    )
}

#[derive(Debug, Serialize)]
struct TrajectoryRow<'a> {
    id: &'a str,
    week: usize,
    state: u8,
}

/// Long form, node-major; state 1 means recovered.
pub fn write_trajectory(path: &Path, ids: &[String], trajectory: &Trajectory) -> Result<()> {
    if ids.len() != trajectory.node_count() {
        return Err(Error::DimensionMismatch {
            what: "trajectory ids",
            expected: trajectory.node_count(),
            actual: ids.len(),
        });
    }
    write_csv(
        path,
        ids.iter().enumerate().flat_map(|(i, id)| {
            trajectory.states().iter().enumerate().map(move |(week, s)| TrajectoryRow {
                id,
                week,
                state: s[i] as u8,
            })
        }),
    )
}

#[derive(Debug, Serialize)]
struct GenerationRow {
    generation: usize,
    best_fitness: f64,
    seconds: f64,
}

pub fn write_generations(path: &Path, records: &[GenerationRecord]) -> Result<()> {
    write_csv(
        path,
        records.iter().map(|r| GenerationRow {
            generation: r.generation,
            best_fitness: r.best_fitness,
            seconds: r.seconds,
        }),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct SelectedRow {
    id: String,
    selected: bool,
}

pub fn write_multiplier_selection(path: &Path, g: &SpatialGraph, members: &[usize]) -> Result<()> {
    let mut chosen = vec![false; g.len()];
    for &m in members {
        chosen[m] = true;
    }
    write_csv(
        path,
        g.ids().iter().zip(chosen).map(|(id, selected)| SelectedRow { id: id.clone(), selected }),
    )
}

/// Ids marked selected in an `id,selected` table.
pub fn read_multiplier_selection(path: &Path) -> Result<Vec<String>> {
    let rows: Vec<SelectedRow> = read_csv(path, &["id", "selected"])?;
    Ok(rows.into_iter().filter(|r| r.selected).map(|r| r.id).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn edge_list_round_trip_keeps_isolates() {
        let dir = tempdir().unwrap();
        let g = load_edge_list(&["a", "b", "c", "z"], &[("a", "b"), ("b", "c")]).unwrap();
        write_edge_list(&dir.path().join("e.csv"), &g).unwrap();
        write_nodes(&dir.path().join("n.csv"), &g).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("e.csv")).unwrap(), "src,dst\na,b\nb,c\n");
        let back = read_edge_list(&dir.path().join("e.csv"), Some(&dir.path().join("n.csv"))).unwrap();
        assert_eq!(back.ids(), g.ids());
        assert_eq!(back.edge_id_pairs(), g.edge_id_pairs());
        let without = read_edge_list(&dir.path().join("e.csv"), None).unwrap();
        assert_eq!(without.len(), 3);
    }

    #[test]
    fn edge_list_header_checked() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("e.csv");
        fs::write(&p, "from,to\na,b\n").unwrap();
        assert!(matches!(read_edge_list(&p, None), Err(Error::Parse { .. })));
    }

    #[test]
    fn visits_with_dates() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("v.csv");
        fs::write(
            &p,
            "id,day,visits\na,2017-08-02,5\na,2017-08-01,4\nb,2017-08-01,1\nb,2017-08-02,2\nb,2017-08-03,3\n",
        )
        .unwrap();
        let t = read_visits(&p).unwrap();
        assert_eq!(t.series, vec![("a".into(), vec![4.0, 5.0]), ("b".into(), vec![1.0, 2.0, 3.0])]);
        assert_eq!(t.origin.offset("2017-08-21").unwrap(), 20);
        assert!(t.origin.offset("12").is_err());
    }

    #[test]
    fn visits_with_gap_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("v.csv");
        fs::write(&p, "id,day,visits\na,0,1\na,2,1\n").unwrap();
        assert!(read_visits(&p).is_err());
        fs::write(&p, "id,day,visits\na,0,1\na,2017-08-01,1\n").unwrap();
        assert!(read_visits(&p).is_err());
    }

    #[test]
    fn thresholds_round_trip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let g = load_edge_list(&["a", "b"], &[("a", "b")]).unwrap();
        let tau = ThresholdVector::with_seeds(vec![0.0, 0.25], vec![true, false]).unwrap();
        write_thresholds(&p, &g, &tau).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "id,threshold,is_seed\na,0.0,true\nb,0.25,false\n");
        assert_eq!(read_thresholds(&p, &g).unwrap(), tau);
    }

    #[test]
    fn attributes_with_blank_flood_extent() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(
            &p,
            "id,per_capita_income,median_household_income,minority_pct,flood_extent\na,10,20,30,\nb,1,2,3,0.5\n",
        )
        .unwrap();
        let t = read_attributes(&p).unwrap();
        assert_eq!(t.get("a").unwrap().flood_extent, None);
        assert_eq!(t.get("b").unwrap().flood_extent, Some(0.5));
        write_attributes(&dir.path().join("b.csv"), &t).unwrap();
        assert_eq!(read_attributes(&dir.path().join("b.csv")).unwrap(), t);
    }

    #[test]
    fn trajectory_long_form() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("traj.csv");
        let t = Trajectory::from_recovery_weeks(&[Some(1), None], 1);
        write_trajectory(&p, &["x".into(), "y".into()], &t).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "id,week,state\nx,0,0\nx,1,1\ny,0,0\ny,1,0\n");
    }

    #[test]
    fn geojson_round_trip_and_annotation() {
        let dir = tempdir().unwrap();
        let units = vec![
            SpatialUnit::new("a", Polygon::rectangle(0.0, 0.0, 1.0, 1.0)),
            SpatialUnit::new("b", Polygon::rectangle(1.0, 0.0, 2.0, 1.0)),
        ];
        let p = dir.path().join("u.geojson");
        write_geojson_units(&p, &units).unwrap();
        assert_eq!(read_geojson_units(&p).unwrap(), units);
        let out = dir.path().join("m.geojson");
        write_multiplier_geojson(&p, &out, &["b".into()]).unwrap();
        let fc = feature_collection(&out).unwrap();
        let flags: Vec<_> = fc.features.iter().map(|f| f.property("multiplier").cloned()).collect();
        assert_eq!(flags, vec![Some(false.into()), Some(true.into())]);
    }

    #[test]
    fn geojson_missing_geometry_and_id() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("u.geojson");
        fs::write(
            &p,
            r#"{"type":"FeatureCollection","features":[{"type":"Feature","geometry":null,"properties":{"id":"q"}}]}"#,
        )
        .unwrap();
        assert_eq!(read_geojson_units(&p).unwrap()[0].geometry, None);
        fs::write(
            &p,
            r#"{"type":"FeatureCollection","features":[{"type":"Feature","geometry":null,"properties":{}}]}"#,
        )
        .unwrap();
        assert!(read_geojson_units(&p).is_err());
    }

    #[test]
    fn failed_write_leaves_previous_file() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("keep.csv");
        fs::write(&p, "old\n").unwrap();
        let err = write_atomic(&p, |w| {
            w.write_all(b"partial")?;
            Err(std::io::Error::other("boom"))
        });
        assert!(err.is_err());
        assert_eq!(fs::read_to_string(&p).unwrap(), "old\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
