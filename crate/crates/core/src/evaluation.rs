//! Candidate scoring against the expert target. Lower scores are better for
//! every method.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::EvalMethod;
use crate::vector::{dot, l2, PreferenceVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub group_index: usize,
    pub score: f64,
    pub method: EvalMethod,
}

/// Group indices from best (rank 0) to worst.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    pub order: Vec<usize>,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn best(&self) -> usize {
        self.order[0]
    }

    /// `rank[g]` is the rank of group `g`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.order.len()];
        for (r, &g) in self.order.iter().enumerate() {
            ranks[g] = r;
        }
        ranks
    }
}

pub(crate) fn raw_score(model: &[f64], target: &[f64], method: EvalMethod) -> f64 {
    match method {
        EvalMethod::L2 => l2(model, target),
        EvalMethod::L1 => model.iter().zip(target).map(|(a, b)| (a - b).abs()).sum(),
        // Negated so the largest inner product ranks first.
        EvalMethod::DotProduct => -dot(model, target),
    }
}

pub fn score(
    model: &PreferenceVector,
    target: &PreferenceVector,
    method: EvalMethod,
) -> Result<CandidateScore> {
    model.check_dim(target)?;
    Ok(CandidateScore {
        group_index: 0,
        score: raw_score(model.components(), target.components(), method),
        method,
    })
}

pub fn rank_candidates(scores: &[CandidateScore]) -> Result<Ranking> {
    let first = scores
        .first()
        .ok_or_else(|| Error::Empty("no candidates to rank".into()))?;
    if scores.iter().any(|s| s.method != first.method) {
        return Err(Error::InvalidConfig(
            "candidates were scored with different methods".into(),
        ));
    }
    if let Some(s) = scores.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "candidate {} has a non-finite score",
            s.group_index
        )));
    }
    Ok(Ranking {
        order: rank_scores(scores.iter().map(|s| (s.group_index, s.score))),
    })
}

/// Ascending by score, ties by ascending group index.
pub(crate) fn rank_scores(scores: impl Iterator<Item = (usize, f64)>) -> Vec<usize> {
    let mut v: Vec<(usize, f64)> = scores.collect();
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(g, _)| g).collect()
}
