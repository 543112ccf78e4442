//! Pearson correlation, multi-run aggregation and sweep winner tables.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::engine::SimRecord;
use crate::error::{Error, Result};
use crate::shapley::ShapleyEstimate;
use crate::types::{EvalMethod, GroupingMethod, SimConfig};

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("an input is constant".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation between a run's final points and its Shapley values, by user id.
pub fn points_vs_shapley(record: &SimRecord, estimate: &ShapleyEstimate) -> Result<f64> {
    let points: Vec<f64> = record.final_ledger.scores.values().copied().collect();
    let ids: Vec<usize> = record.final_ledger.scores.keys().copied().collect();
    if ids.iter().enumerate().any(|(i, &id)| i != id) || ids.len() != estimate.phi.len() {
        return Err(Error::InvalidConfig(
            "ledger and Shapley estimate cover different users".into(),
        ));
    }
    pearson(&points, &estimate.phi)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Means and sample standard deviations over repeated runs of one setting.
///
/// Runs whose correlation is undefined are left out of the Pearson columns
/// and counted in `n_pearson_missing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: SimConfig,
    pub mean_final_distance: f64,
    pub std_final_distance: f64,
    pub mean_initial_distance: f64,
    pub mean_pearson: Option<f64>,
    pub std_pearson: Option<f64>,
    pub n_pearson_missing: usize,
    pub n_runs: usize,
}

impl RunSummary {
    /// 1 - r, where lower is better.
    pub fn inverse_pearson(&self) -> Option<f64> {
        self.mean_pearson.map(|r| 1.0 - r)
    }
}

/// Summarises runs from per-run final distances, initial distances and
/// correlations. Order-independent: values are sorted before summing.
pub fn summarize(
    config: SimConfig,
    finals: &[f64],
    initials: &[f64],
    pearsons: &[Option<f64>],
) -> Result<RunSummary> {
    if finals.is_empty() {
        return Err(Error::Empty("no runs to aggregate".into()));
    }
    let sorted = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (mean_final_distance, std_final_distance) = mean_std(&sorted(finals));
    let (mean_initial_distance, _) = mean_std(&sorted(initials));
    let present: Vec<f64> = pearsons.iter().flatten().copied().collect();
    let (mean_pearson, std_pearson) = if present.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&sorted(&present));
        (Some(m), Some(s))
    };
    Ok(RunSummary {
        config,
        mean_final_distance,
        std_final_distance,
        mean_initial_distance,
        mean_pearson,
        std_pearson,
        n_pearson_missing: pearsons.len() - present.len(),
        n_runs: finals.len(),
    })
}

pub fn aggregate(records: &[(SimRecord, ShapleyEstimate)]) -> Result<RunSummary> {
    let first = records
        .first()
        .ok_or_else(|| Error::Empty("no runs to aggregate".into()))?;
    let finals: Vec<f64> = records.iter().map(|(r, _)| r.final_distance).collect();
    let initials: Vec<f64> = records.iter().map(|(r, _)| r.initial_distance).collect();
    let pearsons: Vec<Option<f64>> = records
        .iter()
        .map(|(r, e)| points_vs_shapley(r, e).ok())
        .collect();
    summarize(first.0.config.clone(), &finals, &initials, &pearsons)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_users: usize,
    pub n_groups: usize,
    pub grouping: GroupingMethod,
    pub eval: EvalMethod,
    pub mean_final_distance: f64,
    pub mean_pearson: Option<f64>,
}

impl SweepRow {
    pub fn pair_name(&self) -> String {
        pair_name(self.grouping, self.eval)
    }
}

pub fn pair_name(grouping: GroupingMethod, eval: EvalMethod) -> String {
    format!("{}+{}", grouping.short_name(), eval.short_name())
}

/// Winners of one (users, groups) configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationWinners {
    pub n_users: usize,
    pub n_groups: usize,
    pub distance_winner: (GroupingMethod, EvalMethod),
    pub distance_tie: bool,
    pub pearson_winner: (GroupingMethod, EvalMethod),
    pub pearson_tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinnerCount {
    pub grouping: GroupingMethod,
    pub eval: EvalMethod,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub configurations: Vec<ConfigurationWinners>,
    pub distance_winner_counts: Vec<WinnerCount>,
    pub pearson_winner_counts: Vec<WinnerCount>,
}

impl SweepTable {
    pub fn n_configurations(&self) -> usize {
        self.configurations.len()
    }

    pub fn distance_wins(&self, grouping: GroupingMethod, eval: EvalMethod) -> usize {
        count_for(&self.distance_winner_counts, grouping, eval)
    }

    pub fn pearson_wins(&self, grouping: GroupingMethod, eval: EvalMethod) -> usize {
        count_for(&self.pearson_winner_counts, grouping, eval)
    }
}

fn count_for(counts: &[WinnerCount], grouping: GroupingMethod, eval: EvalMethod) -> usize {
    counts
        .iter()
        .find(|c| c.grouping == grouping && c.eval == eval)
        .map_or(0, |c| c.count)
}

/// Picks the best row by `better` (a strictly-better comparison on metric
/// values); ties go to the smallest pair name and are flagged.
fn pick_winner<'a>(
    rows: &[&'a SweepRow],
    metric: impl Fn(&SweepRow) -> f64,
    better: impl Fn(f64, f64) -> bool,
) -> (&'a SweepRow, bool) {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| r.pair_name());
    let mut best = sorted[0];
    for &r in &sorted[1..] {
        if better(metric(r), metric(best)) {
            best = r;
        }
    }
    let tie = sorted
        .iter()
        .filter(|r| metric(r) == metric(best))
        .count()
        > 1;
    (best, tie)
}

/// Per-configuration winners by lowest mean final distance and by highest
/// mean Pearson (a missing correlation ranks last).
pub fn build_sweep(summaries: &[RunSummary]) -> Result<SweepTable> {
    if summaries.is_empty() {
        return Err(Error::Empty("no sweep cells".into()));
    }
    let rows: Vec<SweepRow> = summaries
        .iter()
        .map(|s| SweepRow {
            n_users: s.config.n_users,
            n_groups: s.config.n_groups,
            grouping: s.config.grouping_method,
            eval: s.config.eval_method,
            mean_final_distance: s.mean_final_distance,
            mean_pearson: s.mean_pearson,
        })
        .collect();

    let mut by_config: BTreeMap<(usize, usize), Vec<&SweepRow>> = BTreeMap::new();
    for r in &rows {
        by_config.entry((r.n_users, r.n_groups)).or_default().push(r);
    }
    let mut missing = Vec::new();
    for (&(u, g), cell_rows) in &by_config {
        let present: BTreeSet<_> = cell_rows.iter().map(|r| (r.grouping, r.eval)).collect();
        if present.len() != cell_rows.len() {
            return Err(Error::InvalidConfig(format!(
                "duplicate method pair in configuration users={u} groups={g}"
            )));
        }
        for gm in GroupingMethod::ALL {
            for em in EvalMethod::ALL {
                if !present.contains(&(gm, em)) {
                    missing.push(format!("users={u} groups={g} {}", pair_name(gm, em)));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingCells(missing));
    }

    let mut configurations = Vec::new();
    let mut dist_counts: BTreeMap<(GroupingMethod, EvalMethod), usize> = BTreeMap::new();
    let mut pear_counts: BTreeMap<(GroupingMethod, EvalMethod), usize> = BTreeMap::new();
    for gm in GroupingMethod::ALL {
        for em in EvalMethod::ALL {
            dist_counts.insert((gm, em), 0);
            pear_counts.insert((gm, em), 0);
        }
    }
    for (&(n_users, n_groups), cell_rows) in &by_config {
        let (d, d_tie) = pick_winner(cell_rows, |r| r.mean_final_distance, |a, b| a < b);
        let (p, p_tie) = pick_winner(
            cell_rows,
            |r| r.mean_pearson.unwrap_or(f64::NEG_INFINITY),
            |a, b| a > b,
        );
        *dist_counts.get_mut(&(d.grouping, d.eval)).unwrap() += 1;
        *pear_counts.get_mut(&(p.grouping, p.eval)).unwrap() += 1;
        configurations.push(ConfigurationWinners {
            n_users,
            n_groups,
            distance_winner: (d.grouping, d.eval),
            distance_tie: d_tie,
            pearson_winner: (p.grouping, p.eval),
            pearson_tie: p_tie,
        });
    }
    let to_vec = |m: BTreeMap<(GroupingMethod, EvalMethod), usize>| {
        m.into_iter()
            .map(|((grouping, eval), count)| WinnerCount { grouping, eval, count })
            .collect()
    };
    Ok(SweepTable {
        rows,
        configurations,
        distance_winner_counts: to_vec(dist_counts),
        pearson_winner_counts: to_vec(pear_counts),
    })
}
