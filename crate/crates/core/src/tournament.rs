//! Multi-model selection fine-tuning over an abstract fine-tuner.
//!
//! Each iteration clones the current model `j` times, trains every clone on
//! its own share of the remaining samples, keeps the clone closest to the
//! target centroid and drops that clone's samples from the pool.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::deal_round_robin;
use crate::rng::RngStream;
use crate::vector::{l2, PreferenceVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub vec: PreferenceVector,
}

/// Fine-tuning samples and the centroid they define. The centroid is fixed
/// at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePool {
    pub samples: Vec<Sample>,
    pub target_centroid: PreferenceVector,
}

impl SamplePool {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Empty("sample pool is empty".into()))?;
        let dim = first.vec.dim();
        if let Some(s) = samples.iter().find(|s| s.vec.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.vec.dim(),
            });
        }
        let refs: Vec<&Sample> = samples.iter().collect();
        let target_centroid = PreferenceVector::from_finite(mean_of(&refs, dim));
        Ok(Self {
            samples,
            target_centroid,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn mean_of(samples: &[&Sample], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for s in samples {
        for (o, x) in out.iter_mut().zip(s.vec.components()) {
            *o += x;
        }
    }
    let n = samples.len() as f64;
    out.iter_mut().for_each(|x| *x /= n);
    out
}

/// Draws `k` samples from an isotropic Gaussian of scale `spread` around `target`.
pub fn build_pool(target: &PreferenceVector, k: usize, spread: f64, rng: &mut RngStream) -> Result<SamplePool> {
    if k == 0 {
        return Err(Error::InvalidConfig("pool needs k >= 1".into()));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidConfig(format!("spread must be finite and >= 0, got {spread}")));
    }
    let samples = (0..k)
        .map(|_| {
            let c = target
                .components()
                .iter()
                .map(|t| {
                    let z: f64 = StandardNormal.sample(rng);
                    t + spread * z
                })
                .collect();
            Sample {
                vec: PreferenceVector::from_finite(c),
            }
        })
        .collect();
    SamplePool::new(samples)
}

pub trait FineTuner {
    /// Returns the model after training on `samples`. Must be deterministic.
    fn train(&self, model: &PreferenceVector, samples: &[&Sample]) -> PreferenceVector;
}

/// Moves the model a fraction `eta` of the way to the mean of its samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMassFineTuner {
    eta: f64,
}

pub fn point_mass_finetuner(eta: f64) -> Result<PointMassFineTuner> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidConfig(format!("eta must lie in (0, 1], got {eta}")));
    }
    Ok(PointMassFineTuner { eta })
}

impl PointMassFineTuner {
    pub fn eta(&self) -> f64 {
        self.eta
    }
}

impl FineTuner for PointMassFineTuner {
    fn train(&self, model: &PreferenceVector, samples: &[&Sample]) -> PreferenceVector {
        if samples.is_empty() {
            return model.clone();
        }
        let mean = mean_of(samples, model.dim());
        if self.eta == 1.0 {
            return PreferenceVector::from_finite(mean);
        }
        let out = model
            .components()
            .iter()
            .zip(&mean)
            .map(|(m, x)| m + self.eta * (x - m))
            .collect();
        PreferenceVector::from_finite(out)
    }
}

/// Trains a fresh copy of `model0` on the first `c` samples for each count
/// and reports the distance to the pool's centroid.
pub fn run_single_model(
    pool: &SamplePool,
    tuner: &impl FineTuner,
    model0: &PreferenceVector,
    sample_counts: &[usize],
) -> Result<Vec<(usize, f64)>> {
    model0.check_dim(&pool.target_centroid)?;
    if sample_counts.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("sample counts must be non-decreasing".into()));
    }
    let target = pool.target_centroid.components();
    sample_counts
        .iter()
        .map(|&c| {
            if c > pool.len() {
                return Err(Error::InvalidConfig(format!(
                    "sample count {c} exceeds pool size {}",
                    pool.len()
                )));
            }
            let subset: Vec<&Sample> = pool.samples[..c].iter().collect();
            let trained = tuner.train(model0, &subset);
            Ok((c, l2(trained.components(), target)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentIteration {
    pub clone_distances: Vec<f64>,
    pub winner: usize,
    /// Pool indices given to each clone.
    pub subsets: Vec<Vec<usize>>,
    /// Pool indices dropped after this iteration (the winner's subset).
    pub removed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentRecord {
    pub iterations: Vec<TournamentIteration>,
    pub initial_distance: f64,
    pub final_distance: f64,
}

pub fn run_tournament(
    pool: &SamplePool,
    tuner: &impl FineTuner,
    model0: &PreferenceVector,
    j: usize,
    iterations: usize,
    rng: &mut RngStream,
) -> Result<TournamentRecord> {
    if j < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 clones, got {j}")));
    }
    model0.check_dim(&pool.target_centroid)?;
    let target = pool.target_centroid.components();
    let initial_distance = l2(model0.components(), target);
    let mut model = model0.clone();
    let mut distance = initial_distance;
    let mut remaining: Vec<usize> = (0..pool.len()).collect();
    let mut record = Vec::with_capacity(iterations);

    for it in 1..=iterations {
        if remaining.is_empty() {
            return Err(Error::PoolExhausted { iteration: it });
        }
        remaining.shuffle(rng);
        let subsets = deal_round_robin(&remaining, j);
        let trained: Vec<PreferenceVector> = subsets
            .iter()
            .map(|idx| {
                let samples: Vec<&Sample> = idx.iter().map(|&i| &pool.samples[i]).collect();
                tuner.train(&model, &samples)
            })
            .collect();
        let clone_distances: Vec<f64> = trained.iter().map(|m| l2(m.components(), target)).collect();
        let winner = clone_distances
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
            .expect("j >= 2 clones");
        let removed = subsets[winner].clone();
        remaining.retain(|i| !removed.contains(i));
        remaining.sort_unstable();
        model = trained[winner].clone();
        distance = clone_distances[winner];
        record.push(TournamentIteration {
            clone_distances,
            winner,
            subsets,
            removed,
        });
    }

    Ok(TournamentRecord {
        iterations: record,
        initial_distance,
        final_distance: distance,
    })
}
