//! Coalition games over users and three Shapley estimators.
//!
//! `exact_shapley` enumerates every coalition, `kernel_shap` solves the
//! Shapley-kernel weighted least-squares problem over sampled coalitions, and
//! `permutation_shapley` averages marginal contributions along random
//! orderings. All three report `v_full - v_empty` as the sum of `phi`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{final_distance, initial_model, simulate_core};
use crate::evaluation::raw_score;
use crate::error::{Error, Result};
use crate::ingest::Population;
use crate::rng::RngStream;
use crate::types::SimConfig;
use crate::vector::{distance_l2, PreferenceVector};

/// Largest player count accepted by [`exact_shapley`] (2^14 evaluations).
pub const MAX_EXACT_PLAYERS: usize = 14;

/// Default coalition budget for [`kernel_shap`].
pub const DEFAULT_KERNEL_BUDGET: usize = 2048;

/// Set of participating players, one bit per player.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CoalitionMask {
    n: usize,
    words: Vec<u64>,
}

impl CoalitionMask {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            words: vec![0; n.div_ceil(64).max(1)],
        }
    }

    pub fn full(n: usize) -> Self {
        let mut m = Self::empty(n);
        (0..n).for_each(|i| m.insert(i));
        m
    }

    /// Mask whose bit i is bit i of `bits`; requires `n <= 64`.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        assert!(n <= 64, "from_bits supports at most 64 players");
        let mut m = Self::empty(n);
        m.words[0] = if n == 64 { bits } else { bits & ((1u64 << n) - 1) };
        m
    }

    pub fn from_members(n: usize, members: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::empty(n);
        members.into_iter().for_each(|i| m.insert(i));
        m
    }

    pub fn n_players(&self) -> usize {
        self.n
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.n && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.n, "player {i} out of range for {} players", self.n);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        if i < self.n {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(|&i| self.contains(i))
    }

    pub fn complement(&self) -> Self {
        Self::from_members(self.n, (0..self.n).filter(|&i| !self.contains(i)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    Exact,
    Kernel,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyEstimate {
    /// `phi[i]` is the attribution of player (user) `i`.
    pub phi: Vec<f64>,
    pub estimator: Estimator,
    /// Distinct coalitions evaluated, including the empty and full ones.
    pub n_evaluations: usize,
    pub v_full: f64,
    pub v_empty: f64,
}

impl ShapleyEstimate {
    pub fn efficiency_gap(&self) -> f64 {
        (self.phi.iter().sum::<f64>() - (self.v_full - self.v_empty)).abs()
    }
}

/// What a coalition's final model is scored by.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueMetric {
    /// Negative L2 distance to the expert.
    #[default]
    L2Distance,
    /// The run's own evaluation method: negative L2 or L1 distance, or the
    /// inner product with the expert.
    Evaluation,
}

/// The simulation as a cooperative game: a coalition's value is the negative
/// final L2 distance to the expert when only its members take part (or the
/// evaluation score, see [`ValueMetric`]).
///
/// Every coalition runs with the same master seed, so value differences come
/// from membership rather than from different noise draws.
#[derive(Debug, Clone)]
pub struct SimulationGame {
    config: SimConfig,
    pop: Population,
    expert: PreferenceVector,
    metric: ValueMetric,
}

impl SimulationGame {
    pub fn new(config: SimConfig, pop: Population, expert: PreferenceVector) -> Result<Self> {
        if !pop.has_contiguous_ids() {
            return Err(Error::InvalidConfig(
                "coalition games need user ids 0..n".into(),
            ));
        }
        if expert.dim() != pop.dim() {
            return Err(Error::DimensionMismatch {
                expected: pop.dim(),
                found: expert.dim(),
            });
        }
        let config = SimConfig {
            n_users: pop.len(),
            ..config
        };
        config.validate()?;
        Ok(Self {
            config,
            pop,
            expert,
            metric: ValueMetric::L2Distance,
        })
    }

    pub fn with_metric(self, metric: ValueMetric) -> Self {
        Self { metric, ..self }
    }

    pub fn metric(&self) -> ValueMetric {
        self.metric
    }

    pub fn n_players(&self) -> usize {
        self.pop.len()
    }

    pub fn value(&self, mask: &CoalitionMask) -> f64 {
        match self.metric {
            ValueMetric::L2Distance => coalition_value(&self.config, &self.pop, &self.expert, mask),
            ValueMetric::Evaluation => coalition_score(&self.config, &self.pop, &self.expert, mask),
        }
        .expect("validated game configuration")
    }
}

/// Negative final distance of a run restricted to `mask`'s members with
/// `min(m, |S|)` groups. The empty coalition never moves the model.
pub fn coalition_value(
    config: &SimConfig,
    pop: &Population,
    expert: &PreferenceVector,
    mask: &CoalitionMask,
) -> Result<f64> {
    let Some(sub) = pop.restrict(|id| mask.contains(id)) else {
        let start = initial_model(config.seed, pop.dim());
        return Ok(-distance_l2(&start, expert)?);
    };
    let sub_config = SimConfig {
        n_users: sub.len(),
        n_groups: config.n_groups.min(sub.len()),
        ..config.clone()
    };
    Ok(-final_distance(&sub_config, &sub, expert)?)
}

/// Like [`coalition_value`] but scores the final model with the run's
/// evaluation method, higher is better.
pub fn coalition_score(
    config: &SimConfig,
    pop: &Population,
    expert: &PreferenceVector,
    mask: &CoalitionMask,
) -> Result<f64> {
    if expert.dim() != pop.dim() {
        return Err(Error::DimensionMismatch {
            expected: pop.dim(),
            found: expert.dim(),
        });
    }
    let model = match pop.restrict(|id| mask.contains(id)) {
        None => initial_model(config.seed, pop.dim()).into_components(),
        Some(sub) => {
            let sub_config = SimConfig {
                n_users: sub.len(),
                n_groups: config.n_groups.min(sub.len()),
                ..config.clone()
            };
            simulate_core(&sub_config, &sub, expert, |_| {})?.final_model
        }
    };
    Ok(-raw_score(&model, expert.components(), config.eval_method))
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact Shapley values by enumerating all 2^n coalitions.
pub fn exact_shapley<F>(value_fn: F, n: usize) -> Result<ShapleyEstimate>
where
    F: Fn(&CoalitionMask) -> f64 + Sync,
{
    if n == 0 {
        return Err(Error::Empty("game has no players".into()));
    }
    if n > MAX_EXACT_PLAYERS {
        return Err(Error::TooManyPlayers {
            n,
            max: MAX_EXACT_PLAYERS,
        });
    }
    let total = 1usize << n;
    let values: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|bits| value_fn(&CoalitionMask::from_bits(n, bits as u64)))
        .collect();
    // |S|!(n-|S|-1)!/n! = 1 / (n * C(n-1, |S|))
    let weight: Vec<f64> = (0..n)
        .map(|s| 1.0 / (n as f64 * binomial(n - 1, s)))
        .collect();
    let mut phi = vec![0.0; n];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for s in 0..total {
            if s & bit == 0 {
                acc += weight[s.count_ones() as usize] * (values[s | bit] - values[s]);
            }
        }
        *phi_i = acc;
    }
    Ok(ShapleyEstimate {
        phi,
        estimator: Estimator::Exact,
        n_evaluations: total,
        v_full: values[total - 1],
        v_empty: values[0],
    })
}

/// Per-size Shapley kernel mass: C(n, s) * pi(S) = (n - 1) / (s (n - s)).
fn size_mass(n: usize, s: usize) -> f64 {
    (n - 1) as f64 / (s * (n - s)) as f64
}

fn for_each_subset(n: usize, s: usize, mut f: impl FnMut(CoalitionMask)) {
    let mut idx: Vec<usize> = (0..s).collect();
    loop {
        f(CoalitionMask::from_members(n, idx.iter().copied()));
        let Some(pos) = (0..s).rev().find(|&i| idx[i] != i + n - s) else {
            return;
        };
        idx[pos] += 1;
        for j in pos + 1..s {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Kernel SHAP: weighted least squares over coalitions with Shapley kernel
/// weights, with `sum(phi) = v_full - v_empty` imposed exactly.
///
/// `budget` is the number of non-trivial coalitions to evaluate. Subset sizes
/// are enumerated completely from the outside in (s and n - s together) while
/// the budget covers them; the rest of the budget is spent on kernel-weighted
/// samples with their complements. A budget of at least 2^n - 2 enumerates
/// every coalition and recovers the exact values.
pub fn kernel_shap<F>(value_fn: F, n: usize, budget: usize, rng: &mut RngStream) -> Result<ShapleyEstimate>
where
    F: Fn(&CoalitionMask) -> f64 + Sync,
{
    if n == 0 {
        return Err(Error::Empty("game has no players".into()));
    }
    let nontrivial = if n >= 64 { usize::MAX } else { (1usize << n) - 2 };
    if budget < (n + 2).min(nontrivial) {
        return Err(Error::InvalidConfig(format!(
            "kernel budget {budget} is below the minimum of {} for {n} players",
            (n + 2).min(nontrivial)
        )));
    }
    let v_empty = value_fn(&CoalitionMask::empty(n));
    let v_full = value_fn(&CoalitionMask::full(n));
    if n == 1 {
        return Ok(ShapleyEstimate {
            phi: vec![v_full - v_empty],
            estimator: Estimator::Kernel,
            n_evaluations: 2,
            v_full,
            v_empty,
        });
    }

    let mut rows: Vec<(CoalitionMask, f64)> = Vec::new();
    let mut remaining = budget;
    let mut open_sizes: Vec<usize> = Vec::new();
    let mut enumerating = true;
    for s in 1..=n / 2 {
        let partner = n - s;
        let count = binomial(n, s) * if partner == s { 1.0 } else { 2.0 };
        if enumerating && count <= remaining as f64 {
            for size in [s, partner].into_iter().take(if partner == s { 1 } else { 2 }) {
                let w = size_mass(n, size) / binomial(n, size);
                for_each_subset(n, size, |mask| rows.push((mask, w)));
            }
            remaining -= count as usize;
        } else {
            enumerating = false;
            open_sizes.push(s);
            if partner != s {
                open_sizes.push(partner);
            }
        }
    }

    if !open_sizes.is_empty() && remaining > 0 {
        let masses: Vec<f64> = open_sizes.iter().map(|&s| size_mass(n, s)).collect();
        let open_mass: f64 = masses.iter().sum();
        let size_dist = WeightedIndex::new(&masses)
            .map_err(|e| Error::InvalidConfig(format!("kernel size weights: {e}")))?;
        let mut counts: HashMap<CoalitionMask, usize> = HashMap::new();
        let mut order: Vec<CoalitionMask> = Vec::new();
        let mut draws = 0usize;
        let max_draws = remaining.saturating_mul(20);
        while order.len() < remaining && draws < max_draws {
            let s = open_sizes[size_dist.sample(rng)];
            let mask = CoalitionMask::from_members(n, rand::seq::index::sample(rng, n, s));
            let comp = mask.complement();
            for m in [mask, comp] {
                draws += 1;
                let c = counts.entry(m.clone()).or_insert(0);
                if *c == 0 {
                    order.push(m);
                }
                *c += 1;
            }
        }
        let per_draw = open_mass / draws as f64;
        for m in order {
            let w = per_draw * counts[&m] as f64;
            rows.push((m, w));
        }
    }

    let values: Vec<f64> = rows.par_iter().map(|(m, _)| value_fn(m)).collect();
    let phi = solve_constrained_wls(n, &rows, &values, v_empty, v_full)?;
    Ok(ShapleyEstimate {
        phi,
        estimator: Estimator::Kernel,
        n_evaluations: rows.len() + 2,
        v_full,
        v_empty,
    })
}

/// Minimises sum w (v(S) - v_empty - sum_{i in S} phi_i)^2 subject to
/// sum phi = v_full - v_empty, by substituting out the last player.
fn solve_constrained_wls(
    n: usize,
    rows: &[(CoalitionMask, f64)],
    values: &[f64],
    v_empty: f64,
    v_full: f64,
) -> Result<Vec<f64>> {
    let total = v_full - v_empty;
    let k = n - 1;
    let mut normal = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    let mut x = vec![0.0; k];
    for ((mask, w), &v) in rows.iter().zip(values) {
        let last = if mask.contains(k) { 1.0 } else { 0.0 };
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = if mask.contains(i) { 1.0 } else { 0.0 } - last;
        }
        let y = v - v_empty - last * total;
        for i in 0..k {
            if x[i] == 0.0 {
                continue;
            }
            rhs[i] += w * x[i] * y;
            for j in 0..k {
                normal[(i, j)] += w * x[i] * x[j];
            }
        }
    }
    let chol = normal.cholesky().ok_or_else(|| {
        Error::InsufficientCoverage(format!(
            "{} coalitions do not determine {n} attributions",
            rows.len()
        ))
    })?;
    let beta = chol.solve(&rhs);
    let mut phi: Vec<f64> = beta.iter().copied().collect();
    phi.push(total - phi.iter().sum::<f64>());
    if phi.iter().any(|p| !p.is_finite()) {
        return Err(Error::InsufficientCoverage("ill-conditioned kernel system".into()));
    }
    Ok(phi)
}

/// Monte Carlo Shapley values from `n_permutations` random player orderings.
pub fn permutation_shapley<F>(
    value_fn: F,
    n: usize,
    n_permutations: usize,
    rng: &mut RngStream,
) -> Result<ShapleyEstimate>
where
    F: Fn(&CoalitionMask) -> f64,
{
    if n == 0 {
        return Err(Error::Empty("game has no players".into()));
    }
    if n_permutations == 0 {
        return Err(Error::InvalidConfig("need at least one permutation".into()));
    }
    let mut cache: HashMap<CoalitionMask, f64> = HashMap::new();
    let mut eval = |m: &CoalitionMask| *cache.entry(m.clone()).or_insert_with(|| value_fn(m));
    let v_empty = eval(&CoalitionMask::empty(n));
    let v_full = eval(&CoalitionMask::full(n));
    let mut phi = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..n_permutations {
        order.shuffle(rng);
        let mut mask = CoalitionMask::empty(n);
        let mut prev = v_empty;
        for (k, &i) in order.iter().enumerate() {
            mask.insert(i);
            // The last step always reaches the full coalition.
            let cur = if k + 1 == n { v_full } else { eval(&mask) };
            phi[i] += cur - prev;
            prev = cur;
        }
    }
    phi.iter_mut().for_each(|p| *p /= n_permutations as f64);
    Ok(ShapleyEstimate {
        phi,
        estimator: Estimator::Permutation,
        n_evaluations: cache.len(),
        v_full,
        v_empty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{make_rng, StreamId};

    fn rng() -> RngStream {
        make_rng(5, StreamId::ShapleySampling)
    }

    #[test]
    fn mask_basics() {
        let mut m = CoalitionMask::empty(70);
        m.insert(0);
        m.insert(69);
        assert!(m.contains(69) && !m.contains(68));
        assert_eq!(m.len(), 2);
        assert_eq!(m.complement().len(), 68);
        m.remove(69);
        assert_eq!(m.members().collect::<Vec<_>>(), vec![0]);
        assert_eq!(CoalitionMask::from_bits(3, 0b101).members().collect::<Vec<_>>(), vec![0, 2]);
        assert!(CoalitionMask::empty(4).is_empty());
        assert_eq!(CoalitionMask::full(4).len(), 4);
    }

    #[test]
    fn subset_enumeration_counts() {
        let mut c = 0;
        for_each_subset(6, 3, |m| {
            assert_eq!(m.len(), 3);
            c += 1;
        });
        assert_eq!(c, 20);
    }

    #[test]
    fn exact_two_player_symmetric() {
        let est = exact_shapley(|m| m.len() as f64, 2).unwrap();
        assert_eq!(est.phi, vec![1.0, 1.0]);
    }

    #[test]
    fn exact_square_game() {
        let est = exact_shapley(|m| (m.len() * m.len()) as f64, 3).unwrap();
        for p in &est.phi {
            assert!((p - 3.0).abs() < 1e-12);
        }
        assert_eq!(est.n_evaluations, 8);
    }

    #[test]
    fn exact_dummy_player() {
        // player 2 never changes the value
        let est = exact_shapley(|m| if m.contains(0) && m.contains(1) { 5.0 } else if m.contains(0) { 2.0 } else { 0.0 }, 3).unwrap();
        assert_eq!(est.phi[2], 0.0);
        assert!(est.efficiency_gap() < 1e-12);
    }

    #[test]
    fn exact_refuses_large_games() {
        assert!(matches!(exact_shapley(|_| 0.0, 15), Err(Error::TooManyPlayers { n: 15, .. })));
    }

    #[test]
    fn kernel_linear_game_recovers_weights() {
        let c = [0.7, -1.2, 3.3, 0.05, 2.0];
        let game = |m: &CoalitionMask| m.members().map(|i| c[i]).sum::<f64>();
        // Sampled coalitions arrive with their complements, which add no rank,
        // so the smallest budgets may be singular; every solvable one is exact.
        let mut solved = 0;
        for budget in 7..=30 {
            let Ok(est) = kernel_shap(game, 5, budget, &mut make_rng(budget as u64, StreamId::ShapleySampling)) else {
                continue;
            };
            solved += 1;
            for (p, ci) in est.phi.iter().zip(c) {
                assert!((p - ci).abs() < 1e-9, "budget {budget}: {:?}", est.phi);
            }
        }
        assert!(solved >= 20, "only {solved} budgets solvable");
    }

    #[test]
    fn kernel_efficiency_any_budget() {
        let game = |m: &CoalitionMask| {
            let s = m.len() as f64;
            (s * 1.3).sin() + m.members().map(|i| (i as f64).sqrt()).sum::<f64>() * s
        };
        for budget in [30, 60, 100, 300] {
            let est = kernel_shap(game, 10, budget, &mut rng()).unwrap();
            assert!(est.efficiency_gap() < 1e-9);
        }
    }

    #[test]
    fn duplicate_coalitions_are_singular() {
        let m = CoalitionMask::from_members(3, [0]);
        let rows = vec![(m.clone(), 1.0), (m, 1.0)];
        let err = solve_constrained_wls(3, &rows, &[1.0, 1.0], 0.0, 3.0).unwrap_err();
        assert!(matches!(err, Error::InsufficientCoverage(_)));
    }

    #[test]
    fn kernel_rejects_tiny_budget() {
        assert!(kernel_shap(|m| m.len() as f64, 8, 5, &mut rng()).is_err());
    }

    #[test]
    fn permutation_symmetric_two_player() {
        for k in [1, 3, 10] {
            let est = permutation_shapley(|m| m.len() as f64, 2, k, &mut rng()).unwrap();
            assert_eq!(est.phi, vec![1.0, 1.0]);
        }
    }

    #[test]
    fn permutation_single_sample_is_efficient() {
        let est = permutation_shapley(|m| (m.len() as f64).powi(3) - m.contains(1) as u8 as f64, 6, 1, &mut rng()).unwrap();
        assert!(est.efficiency_gap() < 1e-9);
    }

    #[test]
    fn evaluation_metric_scores_the_final_model() {
        use crate::engine::run_simulation;
        use crate::ingest::generate_synthetic;
        use crate::types::EvalMethod;
        let pop = generate_synthetic(6, 3, &mut make_rng(2, StreamId::Population)).unwrap();
        let expert = pop.users()[1].prefs.clone();
        for eval in EvalMethod::ALL {
            let config = SimConfig { n_users: 6, n_groups: 2, n_rounds: 20, eval_method: eval, seed: 2, ..Default::default() };
            let game = SimulationGame::new(config.clone(), pop.clone(), expert.clone()).unwrap();
            let scored = game.clone().with_metric(ValueMetric::Evaluation);
            let full = CoalitionMask::full(6);
            let record = run_simulation(&config, &pop, &expert).unwrap();
            let model = &record.rounds.last().unwrap().model_after;
            let want = match eval {
                EvalMethod::L2 => -crate::vector::distance_l2(model, &expert).unwrap(),
                EvalMethod::L1 => -crate::vector::distance_l1(model, &expert).unwrap(),
                EvalMethod::DotProduct => model.dot(&expert).unwrap(),
            };
            assert!((scored.value(&full) - want).abs() < 1e-12);
            if eval == EvalMethod::L2 {
                for bits in 0..64 {
                    let m = CoalitionMask::from_bits(6, bits);
                    assert_eq!(game.value(&m), scored.value(&m));
                }
            }
        }
    }
}
