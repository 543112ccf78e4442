//! Seeded trials (population, expert, simulation, Shapley values) and
//! parameter sweeps over user and group counts.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_simulation, SimRecord};
use crate::error::{Error, Result};
use crate::ingest::{generate_synthetic, select_expert, Population};
use crate::metrics::{build_sweep, points_vs_shapley, summarize, RunSummary, SweepTable};
use crate::rng::{derive_seed, make_rng, StreamId};
use crate::tournament::{build_pool, point_mass_finetuner, run_single_model, run_tournament, TournamentRecord};
use crate::shapley::{
    exact_shapley, kernel_shap, permutation_shapley, ShapleyEstimate, SimulationGame, ValueMetric,
    DEFAULT_KERNEL_BUDGET, MAX_EXACT_PLAYERS,
};
use crate::types::{EvalMethod, GroupingMethod, SimConfig};
use crate::vector::PreferenceVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapleyMethod {
    /// Exact up to the enumeration cap, kernel above it.
    Auto,
    Exact,
    Kernel,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapleySettings {
    pub method: ShapleyMethod,
    /// Coalitions for the kernel estimator, orderings for the permutation one.
    pub budget: usize,
    #[serde(default)]
    pub metric: ValueMetric,
}

impl Default for ShapleySettings {
    fn default() -> Self {
        Self {
            method: ShapleyMethod::Auto,
            budget: DEFAULT_KERNEL_BUDGET,
            metric: ValueMetric::L2Distance,
        }
    }
}

/// Where a trial's users come from.
#[derive(Debug, Clone)]
pub enum PopulationSpec {
    /// Fresh uniform users of the given dimension for every trial.
    Synthetic { dim: usize },
    /// `n_users` users sampled from a fixed population for every trial.
    Sampled(Population),
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub population: Population,
    pub expert: PreferenceVector,
    pub record: SimRecord,
    pub shapley: Option<ShapleyEstimate>,
    /// Correlation between final points and Shapley values, when defined.
    pub pearson: Option<f64>,
}

/// Population and expert for `config.seed`; identical across method pairs.
pub fn prepare(config: &SimConfig, spec: &PopulationSpec) -> Result<(Population, PreferenceVector)> {
    let mut pop_rng = make_rng(config.seed, StreamId::Population);
    let pop = match spec {
        PopulationSpec::Synthetic { dim } => generate_synthetic(config.n_users, *dim, &mut pop_rng)?,
        PopulationSpec::Sampled(source) if source.len() == config.n_users && source.has_contiguous_ids() => {
            source.clone()
        }
        PopulationSpec::Sampled(source) => source.sample(config.n_users, &mut pop_rng)?,
    };
    let expert = select_expert(&pop, &mut make_rng(config.seed, StreamId::Expert))?;
    Ok((pop, expert))
}

pub fn estimate_shapley(game: &SimulationGame, settings: &ShapleySettings, seed: u64) -> Result<ShapleyEstimate> {
    let n = game.n_players();
    let mut rng = make_rng(seed, StreamId::ShapleySampling);
    let value = |m: &_| game.value(m);
    match settings.method {
        ShapleyMethod::Exact => exact_shapley(value, n),
        ShapleyMethod::Auto if n <= MAX_EXACT_PLAYERS => exact_shapley(value, n),
        ShapleyMethod::Auto | ShapleyMethod::Kernel => kernel_shap(value, n, settings.budget, &mut rng),
        ShapleyMethod::Permutation => permutation_shapley(value, n, settings.budget, &mut rng),
    }
}

pub fn run_trial(config: &SimConfig, spec: &PopulationSpec, shapley: Option<&ShapleySettings>) -> Result<Trial> {
    config.validate()?;
    let (population, expert) = prepare(config, spec)?;
    let record = run_simulation(config, &population, &expert)?;
    let (shapley, pearson) = match shapley {
        Some(settings) => {
            let game = SimulationGame::new(config.clone(), population.clone(), expert.clone())?.with_metric(settings.metric);
            let est = estimate_shapley(&game, settings, config.seed)?;
            let r = points_vs_shapley(&record, &est).ok();
            (Some(est), r)
        }
        None => (None, None),
    };
    Ok(Trial {
        population,
        expert,
        record,
        shapley,
        pearson,
    })
}

/// Grid of user and group counts crossed with method pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub users: Vec<usize>,
    pub groups: Vec<usize>,
    pub groupings: Vec<GroupingMethod>,
    pub evals: Vec<EvalMethod>,
    pub runs: usize,
    pub seed: u64,
    /// Rounds, delta, noise and epsilon settings shared by every cell.
    pub base: SimConfig,
    pub shapley: ShapleySettings,
}

impl SweepSpec {
    /// `(n_users, n_groups)` configurations in cell-index order.
    pub fn configurations(&self) -> Vec<(usize, usize)> {
        self.users
            .iter()
            .flat_map(|&u| self.groups.iter().map(move |&g| (u, g)))
            .collect()
    }

    /// Seed of run `run` in configuration `cell`; shared by all method pairs.
    pub fn run_seed(&self, cell: usize, run: usize) -> u64 {
        derive_seed(derive_seed(self.seed, cell as u64), run as u64)
    }

    pub fn cell_config(&self, cell: usize, run: usize, grouping: GroupingMethod, eval: EvalMethod) -> SimConfig {
        let (n_users, n_groups) = self.configurations()[cell];
        SimConfig {
            n_users,
            n_groups,
            grouping_method: grouping,
            eval_method: eval,
            seed: self.run_seed(cell, run),
            ..self.base.clone()
        }
    }
}

/// Outcome of one run inside a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunPoint {
    pub initial_distance: f64,
    pub final_distance: f64,
    pub pearson: Option<f64>,
}

/// Runs every (configuration, method pair, run) and summarises each cell.
/// Work is spread over the current rayon pool; results do not depend on
/// scheduling.
pub fn run_sweep(spec: &SweepSpec, population: &PopulationSpec) -> Result<(Vec<RunSummary>, SweepTable)> {
    if spec.runs == 0 {
        return Err(Error::InvalidConfig("sweep needs at least one run per cell".into()));
    }
    let configs = spec.configurations();
    if configs.is_empty() || spec.groupings.is_empty() || spec.evals.is_empty() {
        return Err(Error::Empty("sweep grid is empty".into()));
    }
    let mut cells = Vec::new();
    for cell in 0..configs.len() {
        for &g in &spec.groupings {
            for &e in &spec.evals {
                cells.push((cell, g, e));
            }
        }
    }
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.runs).map(move |r| (c, r)))
        .collect();

    let points: Vec<Result<RunPoint>> = tasks
        .par_iter()
        .map(|&(c, run)| {
            let (cell, g, e) = cells[c];
            let config = spec.cell_config(cell, run, g, e);
            let trial = run_trial(&config, population, Some(&spec.shapley)).map_err(|err| Error::Cell {
                cell: format!(
                    "cell users={} groups={} {}+{} run {run}",
                    config.n_users, config.n_groups, g, e
                ),
                error: Box::new(err),
            })?;
            Ok(RunPoint {
                initial_distance: trial.record.initial_distance,
                final_distance: trial.record.final_distance,
                pearson: trial.pearson,
            })
        })
        .collect();
    let points: Vec<RunPoint> = points.into_iter().collect::<Result<_>>()?;

    let summaries = cells
        .iter()
        .enumerate()
        .map(|(c, &(cell, g, e))| {
            let runs = &points[c * spec.runs..(c + 1) * spec.runs];
            let finals: Vec<f64> = runs.iter().map(|p| p.final_distance).collect();
            let initials: Vec<f64> = runs.iter().map(|p| p.initial_distance).collect();
            let pearsons: Vec<Option<f64>> = runs.iter().map(|p| p.pearson).collect();
            let config = SimConfig {
                seed: derive_seed(spec.seed, cell as u64),
                ..spec.cell_config(cell, 0, g, e)
            };
            summarize(config, &finals, &initials, &pearsons)
        })
        .collect::<Result<Vec<_>>>()?;
    let table = build_sweep(&summaries)?;
    Ok((summaries, table))
}

/// Runs `runs` trials of `config`, run r seeded with `derive_seed(config.seed, r)`.
pub fn run_repeated(
    config: &SimConfig,
    population: &PopulationSpec,
    runs: usize,
    shapley: Option<&ShapleySettings>,
) -> Result<Vec<Trial>> {
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let cfg = SimConfig {
                seed: derive_seed(config.seed, r as u64),
                ..config.clone()
            };
            run_trial(&cfg, population, shapley)
        })
        .collect()
}

/// One seeded tournament against the single-model baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentSettings {
    pub k: usize,
    pub clones: usize,
    pub iterations: usize,
    pub eta: f64,
    pub spread: f64,
    pub dim: usize,
    pub seed: u64,
    pub baseline_counts: Vec<usize>,
}

impl Default for TournamentSettings {
    fn default() -> Self {
        Self {
            k: 100,
            clones: 3,
            iterations: 3,
            eta: 0.3,
            spread: 0.2,
            dim: 28,
            seed: 0,
            baseline_counts: vec![33, 66, 100],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentTrial {
    pub record: TournamentRecord,
    /// `(sample count, distance)` for a single model trained once.
    pub baseline: Vec<(usize, f64)>,
}

/// Target and start model are uniform in the unit cube; the pool is
/// Gaussian around the target.
pub fn run_tournament_trial(settings: &TournamentSettings) -> Result<TournamentTrial> {
    if settings.dim == 0 {
        return Err(Error::InvalidConfig("dim must be at least 1".into()));
    }
    let uniform = |stream| {
        let mut rng = make_rng(settings.seed, stream);
        PreferenceVector::new((0..settings.dim).map(|_| rng.random::<f64>()).collect())
    };
    let target = uniform(StreamId::Expert)?;
    let model0 = uniform(StreamId::Initialization)?;
    let pool = build_pool(&target, settings.k, settings.spread, &mut make_rng(settings.seed, StreamId::Pool))?;
    let tuner = point_mass_finetuner(settings.eta)?;
    let record = run_tournament(
        &pool,
        &tuner,
        &model0,
        settings.clones,
        settings.iterations,
        &mut make_rng(settings.seed, StreamId::Tournament),
    )?;
    let baseline = run_single_model(&pool, &tuner, &model0, &settings.baseline_counts)?;
    Ok(TournamentTrial { record, baseline })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_is_deterministic() {
        let cfg = SimConfig { n_users: 8, n_groups: 2, n_rounds: 20, seed: 3, ..Default::default() };
        let spec = PopulationSpec::Synthetic { dim: 4 };
        let a = run_trial(&cfg, &spec, Some(&ShapleySettings::default())).unwrap();
        let b = run_trial(&cfg, &spec, Some(&ShapleySettings::default())).unwrap();
        assert_eq!(a.record, b.record);
        assert_eq!(a.shapley, b.shapley);
        let est = a.shapley.unwrap();
        assert!(est.efficiency_gap() < 1e-9);
        assert_eq!(est.v_full, -a.record.final_distance);
    }

    #[test]
    fn pairs_share_population_and_expert() {
        let spec = SweepSpec {
            users: vec![10],
            groups: vec![2],
            groupings: GroupingMethod::ALL.to_vec(),
            evals: EvalMethod::ALL.to_vec(),
            runs: 2,
            seed: 9,
            base: SimConfig::default(),
            shapley: ShapleySettings::default(),
        };
        let pop = PopulationSpec::Synthetic { dim: 3 };
        let a = prepare(&spec.cell_config(0, 1, GroupingMethod::Random, EvalMethod::L2), &pop).unwrap();
        let b = prepare(&spec.cell_config(0, 1, GroupingMethod::Interleaved, EvalMethod::DotProduct), &pop).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_cell_sweep() {
        let spec = SweepSpec {
            users: vec![6],
            groups: vec![2],
            groupings: GroupingMethod::ALL.to_vec(),
            evals: EvalMethod::ALL.to_vec(),
            runs: 2,
            seed: 1,
            base: SimConfig { n_rounds: 10, ..Default::default() },
            shapley: ShapleySettings::default(),
        };
        let (summaries, table) = run_sweep(&spec, &PopulationSpec::Synthetic { dim: 3 }).unwrap();
        assert_eq!(summaries.len(), 9);
        assert_eq!(table.n_configurations(), 1);
        assert_eq!(table.distance_winner_counts.iter().map(|c| c.count).sum::<usize>(), 1);
    }

    #[test]
    fn sweep_names_failing_cell() {
        let spec = SweepSpec {
            users: vec![3],
            groups: vec![4],
            groupings: vec![GroupingMethod::Random],
            evals: vec![EvalMethod::L2],
            runs: 1,
            seed: 1,
            base: SimConfig::default(),
            shapley: ShapleySettings::default(),
        };
        let err = run_sweep(&spec, &PopulationSpec::Synthetic { dim: 2 }).unwrap_err();
        assert!(err.to_string().contains("users=3 groups=4"), "{err}");
    }

    #[test]
    fn tournament_trial_reports_baseline_counts() {
        let t = run_tournament_trial(&TournamentSettings { seed: 4, ..Default::default() }).unwrap();
        assert_eq!(t.record.iterations.len(), 3);
        let counts: Vec<usize> = t.baseline.iter().map(|b| b.0).collect();
        assert_eq!(counts, [33, 66, 100]);
        // a full-pool single step lands exactly (1 - eta) of the way
        assert!((t.baseline[2].1 - 0.7 * t.record.initial_distance).abs() < 1e-12);
        assert_eq!(t, run_tournament_trial(&TournamentSettings { seed: 4, ..Default::default() }).unwrap());
    }
}
