//! Observed recovery: durations from visit series, the empirical
//! trajectory, and comparisons against simulated trajectories.

use std::collections::HashMap;
use std::ops::RangeInclusive;

use serde::Serialize;

use crate::diffusion::{StateVector, Trajectory};
use crate::error::{Error, Result};
use crate::graph::SpatialGraph;

pub const DAYS_PER_WEEK: usize = 7;

/// Daily visit counts for one spatial unit.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitSeries {
    /// Visits per day, day 0 first, no gaps.
    pub visits: Vec<f64>,
    /// Days averaged into the pre-event baseline.
    pub baseline: RangeInclusive<usize>,
    /// Day from which recovery time is counted (day offset 0).
    pub recovery_start_day: usize,
}

/// Parameters of the recovery criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryCriterion {
    /// Fraction of the baseline the smoothed series must reach.
    pub ratio: f64,
    /// Consecutive qualifying days required.
    pub persistence_days: usize,
    /// Days on each side of the centered moving average.
    pub ma_halfwidth: usize,
    /// Observation window in weeks; later recoveries are capped here.
    pub horizon_weeks: usize,
}

impl Default for RecoveryCriterion {
    fn default() -> Self {
        Self {
            ratio: 0.9,
            persistence_days: 3,
            ma_halfwidth: 3,
            horizon_weeks: 14,
        }
    }
}

impl VisitSeries {
    fn validate(&self, criterion: &RecoveryCriterion) -> Result<()> {
        if self.baseline.is_empty() {
            return Err(Error::InvalidSeries("empty baseline window".into()));
        }
        if *self.baseline.end() >= self.recovery_start_day {
            return Err(Error::InvalidSeries(format!(
                "baseline window ends on day {} but recovery starts on day {}",
                self.baseline.end(),
                self.recovery_start_day
            )));
        }
        let needed = self.recovery_start_day + criterion.horizon_weeks * DAYS_PER_WEEK + 1;
        if self.visits.len() < needed {
            return Err(Error::InvalidSeries(format!(
                "series has {} days, needs at least {needed}",
                self.visits.len()
            )));
        }
        if let Some(bad) = self.visits.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidSeries(format!("invalid visit count {bad}")));
        }
        Ok(())
    }

    /// Centered moving average; the window shrinks at the series edges.
    pub fn smoothed(&self, day: usize, halfwidth: usize) -> f64 {
        let lo = day.saturating_sub(halfwidth);
        let hi = (day + halfwidth).min(self.visits.len() - 1);
        let window = &self.visits[lo..=hi];
        window.iter().sum::<f64>() / window.len() as f64
    }

    pub fn baseline_mean(&self) -> f64 {
        let window = &self.visits[self.baseline.clone()];
        window.iter().sum::<f64>() / window.len() as f64
    }
}

/// Recovery duration in weeks, capped at the criterion horizon.
///
/// The recovery day is the first day (offset >= 1 from the recovery
/// start) that opens a run of `persistence_days` days whose smoothed
/// visits are all at least `ratio` times the baseline.
pub fn compute_recovery_duration(series: &VisitSeries, criterion: &RecoveryCriterion) -> Result<f64> {
    if !(criterion.ratio > 0.0 && criterion.ratio <= 1.0) {
        return Err(Error::InvalidSeries(format!("ratio {} outside (0, 1]", criterion.ratio)));
    }
    if criterion.persistence_days == 0 || criterion.horizon_weeks == 0 {
        return Err(Error::InvalidSeries("persistence and horizon must be positive".into()));
    }
    series.validate(criterion)?;
    let target = criterion.ratio * series.baseline_mean();
    let last_day = series.visits.len() - 1;
    let max_offset = criterion.horizon_weeks * DAYS_PER_WEEK;
    let qualifies = |day: usize| series.smoothed(day, criterion.ma_halfwidth) >= target;

    let recovered_at = (1..=max_offset).find(|&offset| {
        let start = series.recovery_start_day + offset;
        let end = start + criterion.persistence_days - 1;
        end <= last_day && (start..=end).all(qualifies)
    });
    Ok(match recovered_at {
        Some(offset) => offset as f64 / DAYS_PER_WEEK as f64,
        None => criterion.horizon_weeks as f64,
    })
}

/// Recovery duration (weeks) per spatial unit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecoveryDurationTable {
    ids: Vec<String>,
    durations: Vec<f64>,
    index: HashMap<String, usize>,
}

impl RecoveryDurationTable {
    pub fn new(rows: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut table = Self::default();
        for (id, duration) in rows {
            if !duration.is_finite() || duration <= 0.0 {
                return Err(Error::InvalidDuration { id, duration });
            }
            if table.index.insert(id.clone(), table.ids.len()).is_some() {
                return Err(Error::DuplicateId(id));
            }
            table.ids.push(id);
            table.durations.push(duration);
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.index.get(id).map(|&i| self.durations[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.ids.iter().map(String::as_str).zip(self.durations.iter().copied())
    }

    /// Durations in graph node order.
    pub fn aligned_to(&self, g: &SpatialGraph) -> Result<Vec<f64>> {
        g.ids()
            .iter()
            .map(|id| self.get(id).ok_or_else(|| Error::MissingDuration(id.clone())))
            .collect()
    }
}

/// First week a unit with the given duration counts as recovered.
pub fn recovery_week(duration: f64) -> usize {
    duration.ceil() as usize
}

/// Empirical trajectory: node `i` is recovered at week `t` iff
/// `duration_i <= t`.
pub fn durations_to_trajectory(durations: &RecoveryDurationTable, horizon: usize) -> Result<Trajectory> {
    let weeks = durations
        .iter()
        .map(|(id, d)| {
            if d > horizon as f64 {
                Err(Error::DurationExceedsHorizon {
                    id: id.to_owned(),
                    duration: d,
                    horizon,
                })
            } else {
                Ok(Some(recovery_week(d)))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory::from_recovery_weeks(&weeks, horizon))
}

fn check_shapes(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.horizon() != b.horizon() {
        return Err(Error::DimensionMismatch {
            what: "trajectory horizon",
            expected: a.horizon(),
            actual: b.horizon(),
        });
    }
    if a.node_count() != b.node_count() {
        return Err(Error::DimensionMismatch {
            what: "trajectory node count",
            expected: a.node_count(),
            actual: b.node_count(),
        });
    }
    Ok(())
}

/// Number of (node, week) cells, weeks `1..=T`, where the states differ.
pub fn zero_one_loss(empirical: &Trajectory, simulated: &Trajectory) -> Result<usize> {
    check_shapes(empirical, simulated)?;
    Ok((1..=empirical.horizon())
        .map(|t| {
            let (a, b): (&StateVector, &StateVector) = (empirical.state(t), simulated.state(t));
            a.iter().zip(b.iter()).filter(|(x, y)| x != y).count()
        })
        .sum())
}

/// Zero-one loss computed from first-recovery weeks of two monotone
/// trajectories; equal to [`zero_one_loss`] on the expanded matrices.
pub fn recovery_week_loss(empirical: &[Option<usize>], simulated: &[Option<usize>], horizon: usize) -> usize {
    let clamp = |w: Option<usize>| w.unwrap_or(horizon + 1).clamp(1, horizon + 1);
    empirical
        .iter()
        .zip(simulated)
        .map(|(&e, &s)| clamp(e).abs_diff(clamp(s)))
        .sum()
}

/// Weekly recovered-count difference, empirical minus simulated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WeeklyDifference {
    pub empirical_counts: Vec<usize>,
    pub simulated_counts: Vec<usize>,
    pub diff: Vec<i64>,
    pub cumulative: Vec<i64>,
}

pub fn weekly_difference(empirical: &Trajectory, simulated: &Trajectory) -> Result<WeeklyDifference> {
    check_shapes(empirical, simulated)?;
    let empirical_counts = crate::diffusion::recovered_counts(empirical);
    let simulated_counts = crate::diffusion::recovered_counts(simulated);
    let diff: Vec<i64> = empirical_counts
        .iter()
        .zip(&simulated_counts)
        .map(|(&a, &b)| a as i64 - b as i64)
        .collect();
    let cumulative = diff
        .iter()
        .scan(0i64, |acc, d| {
            *acc += d;
            Some(*acc)
        })
        .collect();
    Ok(WeeklyDifference {
        empirical_counts,
        simulated_counts,
        diff,
        cumulative,
    })
}
