//! Simulation and attribution toolkit for crowd-sourced, tournament-style
//! model fine-tuning.
//!
//! User groups pull a model point toward points-weighted preference
//! centroids, a noisy expert keeps the best candidate each round and users
//! collect rank points. The point ledger can then be checked against Shapley
//! values of the same simulation viewed as a cooperative game.

pub mod engine;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod grouping;
pub mod ingest;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod shapley;
pub mod tournament;
pub mod types;
pub mod vector;

pub use engine::{
    award_points, final_distance, initial_model, propose_candidate, run_simulation,
    select_winner, weighted_centroid, RoundRecord, SimRecord,
};
pub use error::{Error, Result};
pub use evaluation::{rank_candidates, score, CandidateScore, Ranking};
pub use grouping::{group_epsilon_greedy, group_interleaved, group_random, partition_round, Partition};
pub use ingest::{generate_synthetic, parse_movielens, select_expert, Population, PopulationSource};
pub use metrics::{aggregate, build_sweep, pearson, RunSummary, SweepTable};
pub use rng::{derive_seed, make_rng, RngStream, StreamId};
pub use shapley::{
    coalition_score, coalition_value, exact_shapley, kernel_shap, permutation_shapley, CoalitionMask,
    Estimator, ShapleyEstimate, SimulationGame, ValueMetric,
};
pub use tournament::{
    build_pool, point_mass_finetuner, run_single_model, run_tournament, FineTuner,
    PointMassFineTuner, Sample, SamplePool, TournamentRecord,
};
pub use types::{EvalMethod, GroupingMethod, ScoreLedger, SimConfig, UserId, UserProfile, INITIAL_SCORE};
pub use vector::{distance_l1, distance_l2, PreferenceVector};
