//! Per-round user partitioning: random, epsilon-greedy and interleaved.
//!
//! Every method deals users into `m` groups whose sizes differ by at most one.
//! Score ties always break by ascending user id.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{GroupingMethod, ScoreLedger, SimConfig, UserId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub groups: Vec<Vec<UserId>>,
    pub round: usize,
}

impl Partition {
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Checks disjointness, exact coverage of `population` and balance.
    pub fn check(&self, population: &[UserId]) -> std::result::Result<(), String> {
        if self.groups.is_empty() {
            return Err("partition has no groups".into());
        }
        let mut seen: Vec<UserId> = self.groups.iter().flatten().copied().collect();
        seen.sort_unstable();
        let mut expected = population.to_vec();
        expected.sort_unstable();
        if seen != expected {
            return Err("groups are not a disjoint cover of the population".into());
        }
        let min = self.groups.iter().map(Vec::len).min().unwrap_or(0);
        let max = self.groups.iter().map(Vec::len).max().unwrap_or(0);
        if max - min > 1 {
            return Err(format!("group sizes range from {min} to {max}"));
        }
        Ok(())
    }
}

fn check_sizes(n: usize, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidConfig("group count must be at least 1".into()));
    }
    if m > n {
        return Err(Error::TooManyGroups { groups: m, users: n });
    }
    Ok(())
}

/// Deals `seq` into `m` groups: element k goes to group k mod m.
pub(crate) fn deal_round_robin<T: Copy>(seq: &[T], m: usize) -> Vec<Vec<T>> {
    let mut groups: Vec<Vec<T>> = (0..m).map(|_| Vec::with_capacity(seq.len() / m + 1)).collect();
    for (k, &x) in seq.iter().enumerate() {
        groups[k % m].push(x);
    }
    groups
}

/// Splits `seq` into `m` contiguous blocks; the first `len mod m` blocks get
/// one extra element.
pub(crate) fn split_blocks<T: Copy>(seq: &[T], m: usize) -> Vec<Vec<T>> {
    let base = seq.len() / m;
    let extra = seq.len() % m;
    let mut out = Vec::with_capacity(m);
    let mut start = 0;
    for g in 0..m {
        let len = base + usize::from(g < extra);
        out.push(seq[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Orders `ids` by score descending, then id ascending.
pub(crate) fn rank_by_score(ids: &[UserId], score: impl Fn(UserId) -> f64) -> Vec<UserId> {
    let mut keyed: Vec<(f64, UserId)> = ids.iter().map(|&id| (score(id), id)).collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, id)| id).collect()
}

/// h1, l1, h2, l2, ... where the top half takes the extra element.
pub(crate) fn interleave_halves(sorted: &[UserId]) -> Vec<UserId> {
    let split = sorted.len().div_ceil(2);
    let (high, low) = sorted.split_at(split);
    let mut out = Vec::with_capacity(sorted.len());
    for (i, &h) in high.iter().enumerate() {
        out.push(h);
        if let Some(&l) = low.get(i) {
            out.push(l);
        }
    }
    out
}

pub fn group_random(user_ids: &[UserId], m: usize, rng: &mut RngStream) -> Result<Partition> {
    check_sizes(user_ids.len(), m)?;
    Ok(Partition {
        groups: random_groups(user_ids, m, rng),
        round: 0,
    })
}

fn random_groups<T: Copy>(items: &[T], m: usize, rng: &mut RngStream) -> Vec<Vec<T>> {
    let mut shuffled = items.to_vec();
    shuffled.shuffle(rng);
    deal_round_robin(&shuffled, m)
}

/// With probability ε(t) behaves like [`group_random`]; otherwise puts the
/// highest scorers together in contiguous blocks (group 0 holds the top).
///
/// The coin is only drawn when 0 < ε(t) < 1, so ε = 1 consumes exactly the
/// draws of [`group_random`] and ε = 0 consumes none.
pub fn group_epsilon_greedy(
    user_ids: &[UserId],
    ledger: &ScoreLedger,
    m: usize,
    t: usize,
    config: &SimConfig,
    rng: &mut RngStream,
) -> Result<Partition> {
    check_sizes(user_ids.len(), m)?;
    Ok(Partition {
        groups: epsilon_greedy_groups(user_ids, |id| ledger.get(id), m, t, config, rng),
        round: t,
    })
}

fn epsilon_greedy_groups(
    items: &[usize],
    score: impl Fn(usize) -> f64,
    m: usize,
    t: usize,
    config: &SimConfig,
    rng: &mut RngStream,
) -> Vec<Vec<usize>> {
    let eps = config.epsilon_at(t);
    let explore = if eps >= 1.0 {
        true
    } else if eps <= 0.0 {
        false
    } else {
        rng.random::<f64>() < eps
    };
    if explore {
        random_groups(items, m, rng)
    } else {
        split_blocks(&rank_by_score(items, score), m)
    }
}

/// Deterministic balanced teams: rank by points, alternate between the top
/// and bottom halves, and deal the alternating sequence round-robin.
pub fn group_interleaved(user_ids: &[UserId], ledger: &ScoreLedger, m: usize) -> Result<Partition> {
    check_sizes(user_ids.len(), m)?;
    Ok(Partition {
        groups: interleaved_groups(user_ids, |id| ledger.get(id), m),
        round: 0,
    })
}

fn interleaved_groups(items: &[usize], score: impl Fn(usize) -> f64, m: usize) -> Vec<Vec<usize>> {
    deal_round_robin(&interleave_halves(&rank_by_score(items, score)), m)
}

/// Groups `items` by `config.grouping_method` for round `t`.
///
/// `items` must be in ascending order so that index ties match id ties; the
/// engine passes population positions here, which sort like user ids.
pub(crate) fn assign(
    items: &[usize],
    score: impl Fn(usize) -> f64,
    m: usize,
    t: usize,
    config: &SimConfig,
    rng: &mut RngStream,
) -> Result<Vec<Vec<usize>>> {
    check_sizes(items.len(), m)?;
    Ok(match config.grouping_method {
        GroupingMethod::Random => random_groups(items, m, rng),
        GroupingMethod::EpsilonGreedy => epsilon_greedy_groups(items, score, m, t, config, rng),
        GroupingMethod::Interleaved => interleaved_groups(items, score, m),
    })
}

/// Dispatches on `config.grouping_method` for round `t`.
pub fn partition_round(
    user_ids: &[UserId],
    ledger: &ScoreLedger,
    m: usize,
    t: usize,
    config: &SimConfig,
    rng: &mut RngStream,
) -> Result<Partition> {
    Ok(Partition {
        groups: assign(user_ids, |id| ledger.get(id), m, t, config, rng)?,
        round: t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{make_rng, StreamId};
    use proptest::prelude::*;

    fn ledger(scores: &[f64]) -> ScoreLedger {
        let mut l = ScoreLedger::new(0..scores.len(), 0.0);
        for (id, &s) in scores.iter().enumerate() {
            l.add(id, s);
        }
        l
    }

    #[test]
    fn random_balance_and_degenerate() {
        let ids: Vec<_> = (0..6).collect();
        let mut rng = make_rng(1, StreamId::Grouping);
        let p = group_random(&ids, 3, &mut rng).unwrap();
        assert!(p.groups.iter().all(|g| g.len() == 2));
        p.check(&ids).unwrap();
        let single = group_random(&ids, 1, &mut rng).unwrap();
        let mut g = single.groups[0].clone();
        g.sort();
        assert_eq!(g, ids);
        assert!(matches!(
            group_random(&ids, 7, &mut rng),
            Err(Error::TooManyGroups { .. })
        ));
    }

    #[test]
    fn random_is_uniform_over_groups() {
        let ids = [0, 1, 2];
        let mut rng = make_rng(17, StreamId::Grouping);
        let mut counts = [[0usize; 3]; 3];
        let trials = 6000;
        for _ in 0..trials {
            let p = group_random(&ids, 3, &mut rng).unwrap();
            for (g, members) in p.groups.iter().enumerate() {
                counts[members[0]][g] += 1;
            }
        }
        for row in counts {
            for c in row {
                let frac = c as f64 / trials as f64;
                assert!((0.30..=0.36).contains(&frac), "{counts:?}");
            }
        }
    }

    #[test]
    fn egreedy_full_exploration_matches_random() {
        let ids: Vec<_> = (0..9).collect();
        let cfg = SimConfig { epsilon_start: 1.0, ..Default::default() };
        let l = ledger(&[1.0; 9]);
        let a = group_epsilon_greedy(&ids, &l, 3, 1, &cfg, &mut make_rng(4, StreamId::Grouping)).unwrap();
        let b = group_random(&ids, 3, &mut make_rng(4, StreamId::Grouping)).unwrap();
        assert_eq!(a.groups, b.groups);
    }

    #[test]
    fn egreedy_pure_greedy_blocks() {
        let ids = [0, 1, 2, 3];
        let cfg = SimConfig { n_rounds: 10, epsilon_end: 0.0, ..Default::default() };
        let l = ledger(&[5.0, 4.0, 3.0, 2.0]);
        let p = group_epsilon_greedy(&ids, &l, 2, 10, &cfg, &mut make_rng(0, StreamId::Grouping)).unwrap();
        assert_eq!(p.groups, vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn egreedy_zero_epsilon_ignores_rng() {
        let ids: Vec<_> = (0..10).collect();
        let cfg = SimConfig { epsilon_start: 0.0, epsilon_end: 0.0, ..Default::default() };
        let l = ledger(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0]);
        let a = group_epsilon_greedy(&ids, &l, 3, 5, &cfg, &mut make_rng(1, StreamId::Grouping)).unwrap();
        let b = group_epsilon_greedy(&ids, &l, 3, 5, &cfg, &mut make_rng(2, StreamId::Grouping)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn egreedy_exploit_frequency_at_final_round() {
        let ids: Vec<_> = (0..12).collect();
        let cfg = SimConfig { n_rounds: 100, epsilon_start: 1.0, epsilon_end: 0.1, ..Default::default() };
        let l = ledger(&(0..12).map(|i| i as f64).collect::<Vec<_>>());
        let greedy = split_blocks(&rank_by_score(&ids, |id| l.get(id)), 3);
        let mut rng = make_rng(23, StreamId::Grouping);
        let trials = 2000;
        let hits = (0..trials)
            .filter(|_| group_epsilon_greedy(&ids, &l, 3, 100, &cfg, &mut rng).unwrap().groups == greedy)
            .count();
        let frac = hits as f64 / trials as f64;
        assert!((frac - 0.9).abs() <= 0.03, "greedy fraction {frac}");
    }

    #[test]
    fn interleaved_hand_trace() {
        let l = ledger(&[9.0, 7.0, 5.0, 3.0]);
        let ids = [0, 1, 2, 3];
        assert_eq!(interleave_halves(&rank_by_score(&ids, |id| l.get(id))), vec![0, 2, 1, 3]);
        let p = group_interleaved(&ids, &l, 2).unwrap();
        assert_eq!(p.groups, vec![vec![0, 1], vec![2, 3]]);
        let single = group_interleaved(&ids, &l, 1).unwrap();
        assert_eq!(single.groups, vec![vec![0, 2, 1, 3]]);
    }

    #[test]
    fn interleaved_ties_follow_ids() {
        let l = ledger(&[1.0; 5]);
        let ids = [0, 1, 2, 3, 4];
        // ranked 0..5, halves [0,1,2] [3,4] -> 0,3,1,4,2
        let p = group_interleaved(&ids, &l, 2).unwrap();
        assert_eq!(p.groups, vec![vec![0, 1, 2], vec![3, 4]]);
        p.check(&ids).unwrap();
    }

    fn any_method() -> impl Strategy<Value = GroupingMethod> {
        prop_oneof![
            Just(GroupingMethod::Random),
            Just(GroupingMethod::EpsilonGreedy),
            Just(GroupingMethod::Interleaved)
        ]
    }

    proptest! {
        #[test]
        fn partitions_are_valid(
            n in 1usize..=200,
            m_frac in 0.0f64..1.0,
            t in 1usize..=100,
            seed in any::<u64>(),
            method in any_method(),
        ) {
            let m = 1 + ((n - 1) as f64 * m_frac) as usize;
            let ids: Vec<_> = (0..n).map(|i| i * 3 + 1).collect();
            let mut l = ScoreLedger::new(ids.iter().copied(), 1.0);
            for (k, &id) in ids.iter().enumerate() {
                l.add(id, (k * 7 % 5) as f64);
            }
            let cfg = SimConfig { grouping_method: method, n_users: n, n_groups: m, ..Default::default() };
            let p = partition_round(&ids, &l, m, t, &cfg, &mut make_rng(seed, StreamId::Grouping)).unwrap();
            prop_assert_eq!(p.n_groups(), m);
            prop_assert!(p.check(&ids).is_ok());
        }

        #[test]
        fn interleaved_is_pure(scores in proptest::collection::vec(0.0f64..10.0, 1..40), m_frac in 0.0f64..1.0) {
            let n = scores.len();
            let m = 1 + ((n - 1) as f64 * m_frac) as usize;
            let l = ledger(&scores);
            let ids: Vec<_> = (0..n).collect();
            prop_assert_eq!(group_interleaved(&ids, &l, m).unwrap(), group_interleaved(&ids, &l, m).unwrap());
        }
    }
}
