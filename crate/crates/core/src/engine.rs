//! The round loop: group users, pull candidates toward weighted centroids,
//! let a noisy expert pick a winner, award rank points, advance the model.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{raw_score, rank_scores, CandidateScore, Ranking};
use crate::grouping::{assign, Partition};
use crate::ingest::Population;
use crate::rng::{make_rng, RngStream, StreamId};
use crate::types::{ScoreLedger, SimConfig, UserId, INITIAL_SCORE};
use crate::vector::{l2, PreferenceVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub partition: Partition,
    pub candidates: Vec<PreferenceVector>,
    pub scores: Vec<CandidateScore>,
    pub ranking: Ranking,
    pub true_best: usize,
    pub selected: usize,
    pub expert_erred: bool,
    /// Points given to every member of each group this round.
    pub awards: BTreeMap<usize, u32>,
    pub model_after: PreferenceVector,
    /// L2 distance from `model_after` to the expert, whatever the eval method.
    pub distance_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub config: SimConfig,
    pub expert: PreferenceVector,
    pub initial_model: PreferenceVector,
    pub rounds: Vec<RoundRecord>,
    pub final_ledger: ScoreLedger,
    pub final_distance: f64,
    pub initial_distance: f64,
}

/// Points-weighted mean of the group's preference vectors.
pub fn weighted_centroid(
    group: &[UserId],
    pop: &Population,
    ledger: &ScoreLedger,
) -> Result<PreferenceVector> {
    if group.is_empty() {
        return Err(Error::Empty("cannot take the centroid of an empty group".into()));
    }
    let mut members = Vec::with_capacity(group.len());
    for &id in group {
        let user = pop
            .get(id)
            .ok_or_else(|| Error::InvalidConfig(format!("user {id} is not in the population")))?;
        let w = *ledger
            .scores
            .get(&id)
            .ok_or_else(|| Error::ZeroWeight(format!("user {id} has no ledger entry")))?;
        members.push((user.prefs.components(), w));
    }
    let mut out = vec![0.0; pop.dim()];
    weighted_mean_into(&mut out, members.into_iter())?;
    Ok(PreferenceVector::from_finite(out))
}

fn weighted_mean_into<'a>(
    out: &mut [f64],
    members: impl Iterator<Item = (&'a [f64], f64)>,
) -> Result<()> {
    out.iter_mut().for_each(|x| *x = 0.0);
    let mut total = 0.0;
    for (p, w) in members {
        total += w;
        for (o, x) in out.iter_mut().zip(p) {
            *o += w * x;
        }
    }
    if total.is_nan() || total <= 0.0 {
        return Err(Error::ZeroWeight(format!("total group weight is {total}")));
    }
    out.iter_mut().for_each(|x| *x /= total);
    Ok(())
}

/// `model + delta * (centroid - model)`; a full step returns the centroid.
pub fn propose_candidate(
    model: &PreferenceVector,
    centroid: &PreferenceVector,
    delta: f64,
) -> Result<PreferenceVector> {
    model.check_dim(centroid)?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidConfig(format!("delta must lie in (0, 1], got {delta}")));
    }
    let mut out = vec![0.0; model.dim()];
    step_into(&mut out, model.components(), centroid.components(), delta);
    Ok(PreferenceVector::from_finite(out))
}

fn step_into(out: &mut [f64], model: &[f64], centroid: &[f64], delta: f64) {
    if delta == 1.0 {
        out.copy_from_slice(centroid);
        return;
    }
    for ((o, m), c) in out.iter_mut().zip(model).zip(centroid) {
        *o = m + delta * (c - m);
    }
}

/// Returns `(selected group, expert_erred)`. With probability `error_rate`
/// the expert picks uniformly among ranks 1..m instead of rank 0.
pub fn select_winner(ranking: &Ranking, error_rate: f64, rng: &mut RngStream) -> (usize, bool) {
    select_from_order(&ranking.order, error_rate, rng)
}

fn select_from_order(order: &[usize], error_rate: f64, rng: &mut RngStream) -> (usize, bool) {
    let m = order.len();
    if m == 1 {
        return (order[0], false);
    }
    if rng.random::<f64>() < error_rate {
        (order[rng.random_range(1..m)], true)
    } else {
        (order[0], false)
    }
}

/// Gives every member of the group at rank r exactly m - r points and
/// returns the per-group award.
pub fn award_points(
    ranking: &Ranking,
    partition: &Partition,
    ledger: &mut ScoreLedger,
) -> Result<BTreeMap<usize, u32>> {
    let m = partition.n_groups();
    let mut sorted = ranking.order.clone();
    sorted.sort_unstable();
    if sorted != (0..m).collect::<Vec<_>>() {
        return Err(Error::InvalidConfig(format!(
            "ranking {:?} does not cover {m} groups",
            ranking.order
        )));
    }
    let mut awards = BTreeMap::new();
    for (rank, &g) in ranking.order.iter().enumerate() {
        let points = (m - rank) as u32;
        for &id in &partition.groups[g] {
            ledger.add(id, f64::from(points));
        }
        awards.insert(g, points);
    }
    Ok(awards)
}

/// Starting model position, uniform in [0, 1]^dim from the initialization stream.
pub fn initial_model(seed: u64, dim: usize) -> PreferenceVector {
    let mut rng = make_rng(seed, StreamId::Initialization);
    PreferenceVector::from_finite((0..dim).map(|_| rng.random::<f64>()).collect())
}

/// Borrowed view of one finished round, in population positions.
pub(crate) struct RoundView<'a> {
    pub t: usize,
    pub groups: &'a [Vec<usize>],
    pub candidates: &'a [Vec<f64>],
    pub scores: &'a [f64],
    pub order: &'a [usize],
    pub selected: usize,
    pub erred: bool,
    pub model: &'a [f64],
    pub distance: f64,
}

pub(crate) struct Outcome {
    pub initial_model: Vec<f64>,
    pub initial_distance: f64,
    pub final_distance: f64,
    pub final_model: Vec<f64>,
    /// Accumulated points, indexed by population position.
    pub points: Vec<f64>,
}

fn check_inputs(config: &SimConfig, pop: &Population, expert: &PreferenceVector) -> Result<()> {
    config.validate()?;
    if pop.len() != config.n_users {
        return Err(Error::InvalidConfig(format!(
            "config expects {} users but the population has {}",
            config.n_users,
            pop.len()
        )));
    }
    if expert.dim() != pop.dim() {
        return Err(Error::DimensionMismatch {
            expected: pop.dim(),
            found: expert.dim(),
        });
    }
    Ok(())
}

pub(crate) fn simulate_core(
    config: &SimConfig,
    pop: &Population,
    expert: &PreferenceVector,
    mut observe: impl FnMut(&RoundView<'_>),
) -> Result<Outcome> {
    check_inputs(config, pop, expert)?;
    let dim = pop.dim();
    let m = config.n_groups;
    let target = expert.components();
    let users = pop.users();
    let positions: Vec<usize> = (0..users.len()).collect();

    let mut grouping_rng = make_rng(config.seed, StreamId::Grouping);
    let mut selection_rng = make_rng(config.seed, StreamId::Selection);

    let initial = initial_model(config.seed, dim).into_components();
    let initial_distance = l2(&initial, target);
    let mut model = initial.clone();
    let mut distance = initial_distance;
    let mut points = vec![INITIAL_SCORE; users.len()];
    let mut centroid = vec![0.0; dim];
    let mut candidates = vec![vec![0.0; dim]; m];
    let mut scores = vec![0.0; m];

    for t in 1..=config.n_rounds {
        let groups = assign(&positions, |p| points[p], m, t, config, &mut grouping_rng)?;
        for (g, members) in groups.iter().enumerate() {
            weighted_mean_into(
                &mut centroid,
                members.iter().map(|&p| (users[p].prefs.components(), points[p])),
            )?;
            step_into(&mut candidates[g], &model, &centroid, config.delta);
            scores[g] = raw_score(&candidates[g], target, config.eval_method);
        }
        let order = rank_scores(scores.iter().copied().enumerate());
        let (selected, erred) = select_from_order(&order, config.expert_error_rate, &mut selection_rng);
        for (rank, &g) in order.iter().enumerate() {
            let award = (m - rank) as f64;
            for &p in &groups[g] {
                points[p] += award;
            }
        }
        model.copy_from_slice(&candidates[selected]);
        distance = l2(&model, target);
        observe(&RoundView {
            t,
            groups: &groups,
            candidates: &candidates,
            scores: &scores,
            order: &order,
            selected,
            erred,
            model: &model,
            distance,
        });
    }

    Ok(Outcome {
        initial_model: initial,
        initial_distance,
        final_distance: distance,
        final_model: model,
        points,
    })
}

/// Runs all `config.n_rounds` rounds and records every one of them.
pub fn run_simulation(
    config: &SimConfig,
    pop: &Population,
    expert: &PreferenceVector,
) -> Result<SimRecord> {
    let ids = pop.user_ids();
    let method = config.eval_method;
    let mut rounds = Vec::with_capacity(config.n_rounds);
    let outcome = simulate_core(config, pop, expert, |view| {
        let m = view.groups.len();
        let awards = view
            .order
            .iter()
            .enumerate()
            .map(|(rank, &g)| (g, (m - rank) as u32))
            .collect();
        rounds.push(RoundRecord {
            round: view.t,
            partition: Partition {
                groups: view
                    .groups
                    .iter()
                    .map(|g| g.iter().map(|&p| ids[p]).collect())
                    .collect(),
                round: view.t,
            },
            candidates: view
                .candidates
                .iter()
                .map(|c| PreferenceVector::from_finite(c.clone()))
                .collect(),
            scores: view
                .scores
                .iter()
                .enumerate()
                .map(|(g, &score)| CandidateScore {
                    group_index: g,
                    score,
                    method,
                })
                .collect(),
            ranking: Ranking {
                order: view.order.to_vec(),
            },
            true_best: view.order[0],
            selected: view.selected,
            expert_erred: view.erred,
            awards,
            model_after: PreferenceVector::from_finite(view.model.to_vec()),
            distance_after: view.distance,
        });
    })?;

    Ok(SimRecord {
        config: config.clone(),
        expert: expert.clone(),
        initial_model: PreferenceVector::from_finite(outcome.initial_model),
        rounds,
        final_ledger: ScoreLedger {
            scores: ids.iter().copied().zip(outcome.points).collect(),
            initial_score: INITIAL_SCORE,
        },
        final_distance: outcome.final_distance,
        initial_distance: outcome.initial_distance,
    })
}

/// Final L2 distance to the expert without keeping per-round records.
pub fn final_distance(config: &SimConfig, pop: &Population, expert: &PreferenceVector) -> Result<f64> {
    simulate_core(config, pop, expert, |_| {}).map(|o| o.final_distance)
}
