//! Comma-separated tables for plotting and inspection.

use crate::engine::SimRecord;
use crate::error::Result;
use crate::metrics::{RunSummary, SweepTable, WinnerCount};
use crate::shapley::ShapleyEstimate;
use crate::tournament::TournamentRecord;
use crate::types::ScoreLedger;

fn render(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())
        .map_err(|e| crate::error::Error::io("<csv buffer>", e))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn h(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// round, true_best, selected, expert_erred, distance_after, score_g0..
pub fn rounds_table(record: &SimRecord) -> Result<String> {
    let m = record.rounds.first().map_or(0, |r| r.scores.len());
    let mut header = h(&["round", "true_best", "selected", "expert_erred", "distance_after"]);
    header.extend((0..m).map(|g| format!("score_g{g}")));
    render(
        &header,
        record.rounds.iter().map(|r| {
            let mut row = vec![
                r.round.to_string(),
                r.true_best.to_string(),
                r.selected.to_string(),
                r.expert_erred.to_string(),
                r.distance_after.to_string(),
            ];
            row.extend(r.scores.iter().map(|s| s.score.to_string()));
            row
        }),
    )
}

pub fn ledger_table(ledger: &ScoreLedger) -> Result<String> {
    render(
        &h(&["user_id", "points"]),
        ledger.scores.iter().map(|(id, p)| vec![id.to_string(), p.to_string()]),
    )
}

pub fn phi_table(estimate: &ShapleyEstimate) -> Result<String> {
    render(
        &h(&["user_id", "phi"]),
        estimate.phi.iter().enumerate().map(|(i, p)| vec![i.to_string(), p.to_string()]),
    )
}

/// One row: estimator metadata plus r and 1 - r.
pub fn shapley_summary_table(estimate: &ShapleyEstimate, pearson: Option<f64>) -> Result<String> {
    render(
        &h(&["estimator", "n_evaluations", "v_full", "v_empty", "pearson", "inverse_pearson"]),
        [vec![
            format!("{:?}", estimate.estimator),
            estimate.n_evaluations.to_string(),
            estimate.v_full.to_string(),
            estimate.v_empty.to_string(),
            opt(pearson),
            opt(pearson.map(|r| 1.0 - r)),
        ]],
    )
}

/// Per-run outcome rows: run, seed, initial_distance, final_distance, pearson, inverse_pearson.
pub fn runs_table(rows: &[(u64, f64, f64, Option<f64>)]) -> Result<String> {
    render(
        &h(&["run", "seed", "initial_distance", "final_distance", "pearson", "inverse_pearson"]),
        rows.iter().enumerate().map(|(i, &(seed, init, fin, r))| {
            vec![
                i.to_string(),
                seed.to_string(),
                init.to_string(),
                fin.to_string(),
                opt(r),
                opt(r.map(|x| 1.0 - x)),
            ]
        }),
    )
}

pub fn summaries_table(summaries: &[RunSummary]) -> Result<String> {
    render(
        &h(&[
            "n_users",
            "n_groups",
            "grouping",
            "eval",
            "n_runs",
            "mean_final_distance",
            "std_final_distance",
            "mean_initial_distance",
            "mean_pearson",
            "std_pearson",
            "inverse_pearson",
            "n_pearson_missing",
        ]),
        summaries.iter().map(|s| {
            vec![
                s.config.n_users.to_string(),
                s.config.n_groups.to_string(),
                s.config.grouping_method.to_string(),
                s.config.eval_method.to_string(),
                s.n_runs.to_string(),
                s.mean_final_distance.to_string(),
                s.std_final_distance.to_string(),
                s.mean_initial_distance.to_string(),
                opt(s.mean_pearson),
                opt(s.std_pearson),
                opt(s.inverse_pearson()),
                s.n_pearson_missing.to_string(),
            ]
        }),
    )
}

/// The combined sweep table: one row per cell.
pub fn sweep_rows_table(table: &SweepTable) -> Result<String> {
    render(
        &h(&["n_users", "n_groups", "grouping", "eval", "mean_final_distance", "mean_pearson", "inverse_pearson"]),
        table.rows.iter().map(|r| {
            vec![
                r.n_users.to_string(),
                r.n_groups.to_string(),
                r.grouping.to_string(),
                r.eval.to_string(),
                r.mean_final_distance.to_string(),
                opt(r.mean_pearson),
                opt(r.mean_pearson.map(|x| 1.0 - x)),
            ]
        }),
    )
}

/// Winner counts for one criterion with their share of configurations.
pub fn winner_counts_table(counts: &[WinnerCount], n_configurations: usize) -> Result<String> {
    render(
        &h(&["grouping", "eval", "count", "percent"]),
        counts.iter().map(|c| {
            vec![
                c.grouping.to_string(),
                c.eval.to_string(),
                c.count.to_string(),
                (100.0 * c.count as f64 / n_configurations.max(1) as f64).to_string(),
            ]
        }),
    )
}

pub fn configurations_table(table: &SweepTable) -> Result<String> {
    render(
        &h(&["n_users", "n_groups", "distance_winner", "distance_tie", "pearson_winner", "pearson_tie"]),
        table.configurations.iter().map(|c| {
            vec![
                c.n_users.to_string(),
                c.n_groups.to_string(),
                format!("{}+{}", c.distance_winner.0, c.distance_winner.1),
                c.distance_tie.to_string(),
                format!("{}+{}", c.pearson_winner.0, c.pearson_winner.1),
                c.pearson_tie.to_string(),
            ]
        }),
    )
}

/// iteration, winner, distance, clone_0..; iteration 0 is the starting model.
pub fn tournament_table(record: &TournamentRecord) -> Result<String> {
    let j = record.iterations.first().map_or(0, |it| it.clone_distances.len());
    let mut header = h(&["iteration", "winner", "distance"]);
    header.extend((0..j).map(|c| format!("clone_{c}")));
    let start = {
        let mut row = vec!["0".to_string(), String::new(), record.initial_distance.to_string()];
        row.extend((0..j).map(|_| String::new()));
        row
    };
    render(
        &header,
        std::iter::once(start).chain(record.iterations.iter().enumerate().map(|(i, it)| {
            let mut row = vec![
                (i + 1).to_string(),
                it.winner.to_string(),
                it.clone_distances[it.winner].to_string(),
            ];
            row.extend(it.clone_distances.iter().map(|d| d.to_string()));
            row
        })),
    )
}

pub fn baseline_table(points: &[(usize, f64)]) -> Result<String> {
    render(
        &h(&["count", "distance"]),
        points.iter().map(|(c, d)| vec![c.to_string(), d.to_string()]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_layout() {
        let s = baseline_table(&[(0, 1.5), (33, 1.0)]).unwrap();
        assert_eq!(s, "count,distance\n0,1.5\n33,1\n");
    }

    #[test]
    fn shapley_summary_has_both_columns() {
        let est = ShapleyEstimate {
            phi: vec![0.25, 0.75],
            estimator: crate::shapley::Estimator::Exact,
            n_evaluations: 4,
            v_full: 1.0,
            v_empty: 0.0,
        };
        let s = shapley_summary_table(&est, Some(0.8)).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "estimator,n_evaluations,v_full,v_empty,pearson,inverse_pearson");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[4], "0.8");
        assert!((row[5].parse::<f64>().unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(phi_table(&est).unwrap(), "user_id,phi\n0,0.25\n1,0.75\n");
    }
}
