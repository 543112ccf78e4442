//! Shared domain types: users, the point ledger and simulation settings.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::PreferenceVector;

pub type UserId = usize;

/// Points every user holds before the first round.
pub const INITIAL_SCORE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: UserId,
    pub prefs: PreferenceVector,
}

/// Accumulated points per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLedger {
    pub scores: BTreeMap<UserId, f64>,
    pub initial_score: f64,
}

impl ScoreLedger {
    pub fn new(user_ids: impl IntoIterator<Item = UserId>, initial_score: f64) -> Self {
        Self {
            scores: user_ids.into_iter().map(|id| (id, initial_score)).collect(),
            initial_score,
        }
    }

    /// Points held by `user_id`; users without an entry hold nothing.
    pub fn get(&self, user_id: UserId) -> f64 {
        self.scores.get(&user_id).copied().unwrap_or(0.0)
    }

    pub fn add(&mut self, user_id: UserId, points: f64) {
        *self.scores.entry(user_id).or_insert(0.0) += points;
    }

    pub fn total(&self) -> f64 {
        self.scores.values().sum()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GroupingMethod {
    Random,
    EpsilonGreedy,
    Interleaved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EvalMethod {
    L2,
    L1,
    DotProduct,
}

impl GroupingMethod {
    pub const ALL: [GroupingMethod; 3] = [
        GroupingMethod::Random,
        GroupingMethod::EpsilonGreedy,
        GroupingMethod::Interleaved,
    ];

    /// Short lowercase name used on the command line and in tables.
    pub fn short_name(self) -> &'static str {
        match self {
            GroupingMethod::Random => "random",
            GroupingMethod::EpsilonGreedy => "egreedy",
            GroupingMethod::Interleaved => "interleaved",
        }
    }
}

impl EvalMethod {
    pub const ALL: [EvalMethod; 3] = [EvalMethod::L2, EvalMethod::L1, EvalMethod::DotProduct];

    pub fn short_name(self) -> &'static str {
        match self {
            EvalMethod::L2 => "l2",
            EvalMethod::L1 => "l1",
            EvalMethod::DotProduct => "dot",
        }
    }
}

impl fmt::Display for GroupingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl fmt::Display for EvalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Settings for one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_users: usize,
    pub n_groups: usize,
    pub n_rounds: usize,
    pub delta: f64,
    pub grouping_method: GroupingMethod,
    pub eval_method: EvalMethod,
    pub expert_error_rate: f64,
    pub seed: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_users: 50,
            n_groups: 3,
            n_rounds: 100,
            delta: 0.1,
            grouping_method: GroupingMethod::Random,
            eval_method: EvalMethod::L2,
            expert_error_rate: 0.05,
            seed: 0,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_users == 0 {
            return bad("n_users must be at least 1".into());
        }
        if self.n_groups == 0 {
            return bad("n_groups must be at least 1".into());
        }
        if self.n_groups > self.n_users {
            return Err(Error::TooManyGroups {
                groups: self.n_groups,
                users: self.n_users,
            });
        }
        if self.n_rounds == 0 {
            return bad("n_rounds must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad(format!("delta must lie in (0, 1], got {}", self.delta));
        }
        if !(0.0..1.0).contains(&self.expert_error_rate) {
            return bad(format!(
                "expert_error_rate must lie in [0, 1), got {}",
                self.expert_error_rate
            ));
        }
        for (name, eps) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
        ] {
            if !(0.0..=1.0).contains(&eps) {
                return bad(format!("{name} must lie in [0, 1], got {eps}"));
            }
        }
        Ok(())
    }

    /// Exploration probability at round `t` (1-based): a linear anneal from
    /// `epsilon_start` at t = 1 to `epsilon_end` at t = T.
    pub fn epsilon_at(&self, t: usize) -> f64 {
        if self.n_rounds <= 1 {
            return self.epsilon_start;
        }
        let frac = (t.saturating_sub(1)) as f64 / (self.n_rounds - 1) as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac.min(1.0)
    }
}
