//! Post-fit analytics: threshold statistics, tertile splits, attribute
//! distributions and correlations.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::diffusion::ThresholdVector;
use crate::error::{Error, Result};

/// Socio-demographic attributes of one spatial unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttributeRow {
    pub per_capita_income: f64,
    pub median_household_income: f64,
    /// Percent in `[0, 100]`.
    pub minority_pct: f64,
    pub flood_extent: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    PerCapitaIncome,
    MedianHouseholdIncome,
    MinorityPct,
    FloodExtent,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::PerCapitaIncome,
        Attribute::MedianHouseholdIncome,
        Attribute::MinorityPct,
        Attribute::FloodExtent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::PerCapitaIncome => "per_capita_income",
            Attribute::MedianHouseholdIncome => "median_household_income",
            Attribute::MinorityPct => "minority_pct",
            Attribute::FloodExtent => "flood_extent",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl AttributeRow {
    pub fn get(&self, attribute: Attribute) -> Option<f64> {
        match attribute {
            Attribute::PerCapitaIncome => Some(self.per_capita_income),
            Attribute::MedianHouseholdIncome => Some(self.median_household_income),
            Attribute::MinorityPct => Some(self.minority_pct),
            Attribute::FloodExtent => self.flood_extent,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttributeTable {
    rows: HashMap<String, AttributeRow>,
    order: Vec<String>,
}

impl AttributeTable {
    pub fn new(rows: impl IntoIterator<Item = (String, AttributeRow)>) -> Result<Self> {
        let mut table = Self::default();
        for (id, row) in rows {
            if !(0.0..=100.0).contains(&row.minority_pct) {
                return Err(Error::InvalidAttribute {
                    id,
                    reason: format!("minority_pct {} outside [0, 100]", row.minority_pct),
                });
            }
            if row.flood_extent.is_some_and(|f| !(f >= 0.0)) {
                return Err(Error::InvalidAttribute {
                    id,
                    reason: "flood_extent must be non-negative".into(),
                });
            }
            if table.rows.insert(id.clone(), row).is_some() {
                return Err(Error::DuplicateId(id));
            }
            table.order.push(id);
        }
        Ok(table)
    }

    pub fn get(&self, id: &str) -> Option<&AttributeRow> {
        self.rows.get(id)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &AttributeRow)> {
        self.order.iter().map(|id| (id.as_str(), &self.rows[id]))
    }

    fn require(&self, ids: &[String]) -> Result<()> {
        let missing: Vec<String> = ids.iter().filter(|id| !self.rows.contains_key(*id)).cloned().collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingAttributes(missing))
        }
    }

    /// Values of `attribute` for `ids`, skipping absent optional values.
    pub fn values<'a>(&self, ids: impl IntoIterator<Item = &'a String>, attribute: Attribute) -> Vec<f64> {
        ids.into_iter()
            .filter_map(|id| self.rows.get(id).and_then(|r| r.get(attribute)))
            .collect()
    }
}

/// Linear-interpolation quantile of sorted values (`p` in `[0, 1]`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistributionSummary {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl DistributionSummary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            count: sorted.len(),
            min: sorted[0],
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSummary {
    pub count: usize,
    pub include_seeds: bool,
    pub mean: f64,
    pub variance: f64,
    /// Always `"population"` (divide by count).
    pub variance_kind: &'static str,
    pub lower_tertile_boundary: f64,
    pub upper_tertile_boundary: f64,
}

fn included(tau: &ThresholdVector, include_seeds: bool) -> Vec<usize> {
    (0..tau.len()).filter(|&i| include_seeds || !tau.is_seed(i)).collect()
}

pub fn threshold_summary(tau: &ThresholdVector, include_seeds: bool) -> Result<ThresholdSummary> {
    let nodes = included(tau, include_seeds);
    if nodes.is_empty() {
        return Err(Error::Degenerate("no thresholds to summarize".into()));
    }
    let mut values: Vec<f64> = nodes.iter().map(|&i| tau.values()[i]).collect();
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(ThresholdSummary {
        count: values.len(),
        include_seeds,
        mean,
        variance,
        variance_kind: "population",
        lower_tertile_boundary: quantile(&values, 1.0 / 3.0),
        upper_tertile_boundary: quantile(&values, 2.0 / 3.0),
    })
}

/// Splits nodes into low / middle / high threshold groups.
///
/// Nodes are ranked by (threshold, id); group `g` takes ranks
/// `[g n / 3, (g + 1) n / 3)`, so sizes differ by at most one.
pub fn tertiles(ids: &[String], tau: &ThresholdVector, include_seeds: bool) -> [Vec<usize>; 3] {
    let mut nodes = included(tau, include_seeds);
    nodes.sort_by(|&a, &b| tau.values()[a].total_cmp(&tau.values()[b]).then_with(|| ids[a].cmp(&ids[b])));
    let n = nodes.len();
    let cut = |g: usize| g * n / 3;
    [
        nodes[cut(0)..cut(1)].to_vec(),
        nodes[cut(1)..cut(2)].to_vec(),
        nodes[cut(2)..cut(3)].to_vec(),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TertileGroup {
    pub label: &'static str,
    pub ids: Vec<String>,
    pub threshold: Option<DistributionSummary>,
    pub attributes: BTreeMap<Attribute, DistributionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TertileReport {
    pub summary: ThresholdSummary,
    pub groups: Vec<TertileGroup>,
}

pub fn tertile_attribute_report(
    ids: &[String],
    tau: &ThresholdVector,
    attrs: &AttributeTable,
    include_seeds: bool,
) -> Result<TertileReport> {
    if ids.len() != tau.len() {
        return Err(Error::DimensionMismatch {
            what: "node ids",
            expected: tau.len(),
            actual: ids.len(),
        });
    }
    let summary = threshold_summary(tau, include_seeds)?;
    let groups = tertiles(ids, tau, include_seeds);
    let covered: Vec<String> = groups.iter().flatten().map(|&i| ids[i].clone()).collect();
    attrs.require(&covered)?;
    let labels = ["low", "middle", "high"];
    let groups = groups
        .iter()
        .zip(labels)
        .map(|(nodes, label)| {
            let group_ids: Vec<String> = nodes.iter().map(|&i| ids[i].clone()).collect();
            let thresholds: Vec<f64> = nodes.iter().map(|&i| tau.values()[i]).collect();
            TertileGroup {
                label,
                threshold: DistributionSummary::of(&thresholds),
                attributes: summarize_attributes(attrs, &group_ids),
                ids: group_ids,
            }
        })
        .collect();
    Ok(TertileReport { summary, groups })
}

fn summarize_attributes(attrs: &AttributeTable, ids: &[String]) -> BTreeMap<Attribute, DistributionSummary> {
    Attribute::ALL
        .iter()
        .filter_map(|&a| DistributionSummary::of(&attrs.values(ids, a)).map(|s| (a, s)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub n: usize,
    pub r: f64,
    /// Two-sided p-value of the t-test with `n - 2` degrees of freedom.
    pub p_value: f64,
}

/// Pearson correlation with a two-sided significance test.
pub fn correlate(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "paired values",
            expected: x.len(),
            actual: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("correlation needs at least 3 pairs, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(Correlation { n, r, p_value })
}

/// Correlation of thresholds with every attribute present on all
/// included nodes.
pub fn threshold_correlations(
    ids: &[String],
    tau: &ThresholdVector,
    attrs: &AttributeTable,
    include_seeds: bool,
) -> Result<BTreeMap<Attribute, Correlation>> {
    let nodes = included(tau, include_seeds);
    let node_ids: Vec<String> = nodes.iter().map(|&i| ids[i].clone()).collect();
    attrs.require(&node_ids)?;
    let mut out = BTreeMap::new();
    for attribute in Attribute::ALL {
        let pairs: Vec<(f64, f64)> = nodes
            .iter()
            .filter_map(|&i| attrs.get(&ids[i]).and_then(|r| r.get(attribute)).map(|v| (tau.values()[i], v)))
            .collect();
        if pairs.len() != nodes.len() {
            continue;
        }
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(c) = correlate(&x, &y) {
            out.insert(attribute, c);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplierComparison {
    pub size: usize,
    pub selected_count: usize,
    pub unselected_count: usize,
    pub selected: BTreeMap<Attribute, DistributionSummary>,
    pub unselected: BTreeMap<Attribute, DistributionSummary>,
    /// Set when every node was selected.
    pub unselected_empty: bool,
}

/// Attribute distributions of multipliers against the remaining nodes,
/// one entry per multiplier set.
pub fn multiplier_attribute_comparison(
    ids: &[String],
    sets: &[(usize, Vec<String>)],
    attrs: &AttributeTable,
) -> Result<Vec<MultiplierComparison>> {
    attrs.require(ids)?;
    sets.iter()
        .map(|(size, members)| {
            let chosen: std::collections::HashSet<&str> = members.iter().map(String::as_str).collect();
            if let Some(stray) = members.iter().find(|m| !ids.contains(m)) {
                return Err(Error::InvalidMultiplierSet(format!("`{stray}` is not a node")));
            }
            let (selected, unselected): (Vec<String>, Vec<String>) =
                ids.iter().cloned().partition(|id| chosen.contains(id.as_str()));
            Ok(MultiplierComparison {
                size: *size,
                selected_count: selected.len(),
                unselected_count: unselected.len(),
                selected: summarize_attributes(attrs, &selected),
                unselected: summarize_attributes(attrs, &unselected),
                unselected_empty: unselected.is_empty(),
            })
        })
        .collect()
}

/// One row per week of the empirical against simulated recovery curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryCurveRow {
    pub week: usize,
    pub empirical_recovered: usize,
    pub simulated_recovered: usize,
    pub difference: i64,
    pub cumulative_difference: i64,
}

pub fn recovery_curve_rows(diff: &crate::empirical::WeeklyDifference) -> Vec<RecoveryCurveRow> {
    (0..diff.diff.len())
        .map(|week| RecoveryCurveRow {
            week,
            empirical_recovered: diff.empirical_counts[week],
            simulated_recovered: diff.simulated_counts[week],
            difference: diff.diff[week],
            cumulative_difference: diff.cumulative[week],
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultiplierSummaryRow {
    pub size: usize,
    pub recovered_without: usize,
    pub recovered_with: usize,
    pub increment_rate: Option<f64>,
}

/// Long-form attribute rows, one per node, labelled by a group name.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupedAttributeRow {
    pub group: String,
    pub id: String,
    pub threshold: Option<f64>,
    pub per_capita_income: f64,
    pub median_household_income: f64,
    pub minority_pct: f64,
    pub flood_extent: Option<f64>,
}

impl GroupedAttributeRow {
    fn new(group: String, id: &str, threshold: Option<f64>, row: &AttributeRow) -> Self {
        Self {
            group,
            id: id.to_owned(),
            threshold,
            per_capita_income: row.per_capita_income,
            median_household_income: row.median_household_income,
            minority_pct: row.minority_pct,
            flood_extent: row.flood_extent,
        }
    }
}

/// Attribute rows of every node in the report, grouped by tertile.
pub fn tertile_rows(
    report: &TertileReport,
    ids: &[String],
    tau: &ThresholdVector,
    attrs: &AttributeTable,
) -> Result<Vec<GroupedAttributeRow>> {
    let position: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut rows = Vec::new();
    for group in &report.groups {
        for id in &group.ids {
            let row = attrs.get(id).ok_or_else(|| Error::MissingAttributes(vec![id.clone()]))?;
            let threshold = position.get(id.as_str()).map(|&i| tau.values()[i]);
            rows.push(GroupedAttributeRow::new(group.label.to_owned(), id, threshold, row));
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplierAttributeRow {
    pub size: usize,
    pub selected: bool,
    pub id: String,
    pub per_capita_income: f64,
    pub median_household_income: f64,
    pub minority_pct: f64,
    pub flood_extent: Option<f64>,
}

/// Attribute rows of every node for each multiplier size.
pub fn multiplier_rows(
    ids: &[String],
    sets: &[(usize, Vec<String>)],
    attrs: &AttributeTable,
) -> Result<Vec<MultiplierAttributeRow>> {
    attrs.require(ids)?;
    let mut rows = Vec::new();
    for (size, members) in sets {
        let chosen: std::collections::HashSet<&str> = members.iter().map(String::as_str).collect();
        for id in ids {
            let row = &attrs.rows[id];
            rows.push(MultiplierAttributeRow {
                size: *size,
                selected: chosen.contains(id.as_str()),
                id: id.clone(),
                per_capita_income: row.per_capita_income,
                median_household_income: row.median_household_income,
                minority_pct: row.minority_pct,
                flood_extent: row.flood_extent,
            });
        }
    }
    Ok(rows)
}
