use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use crowdtune_core::experiment::{
    run_repeated, run_sweep, run_tournament_trial, run_trial, PopulationSpec, ShapleyMethod, ShapleySettings,
    SweepSpec, TournamentSettings, Trial,
};
use crowdtune_core::ingest::MOVIELENS_GENRES;
use crowdtune_core::metrics::summarize;
use crowdtune_core::rng::make_rng;
use crowdtune_core::shapley::{DEFAULT_KERNEL_BUDGET, MAX_EXACT_PLAYERS};
use crowdtune_core::{
    generate_synthetic, parse_movielens, report, EvalMethod, GroupingMethod, Population, SimConfig, StreamId,
    ValueMetric,
};
use serde::{Deserialize, Serialize};

use crate::output::OutputSet;
use crate::settings::{resolve, Overrides};
use crate::{IngestArgs, ShapleyArgs, SimFlags, SimulateArgs, SweepArgs, TournamentArgs, OUT_ENV};

fn out_dir(out: Option<PathBuf>, command: &str) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from("crowdtune-out").join(command))
}

fn fresh_seed(what: &str) -> u64 {
    let seed = rand::random::<u64>();
    println!("{what} seed: {seed}");
    seed
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
        None => Ok(f()),
    }
}

fn load_population(path: &Path) -> Result<Population> {
    let text = fs::read_to_string(path).with_context(|| format!("reading population {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing population {}", path.display()))
}

pub fn ingest(args: IngestArgs) -> Result<()> {
    let out = args.out.unwrap_or_else(|| {
        std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_default()
            .join("population.json")
    });
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    let name = out
        .file_name()
        .context("--out must name a file")?
        .to_string_lossy()
        .into_owned();
    let mut set = OutputSet::new(&dir);
    let (pop, seed, config) = match (args.ratings, args.items, args.synthetic) {
        (Some(ratings), Some(items), None) => {
            let pop = parse_movielens(&ratings, &items)?;
            set.input(&ratings)?;
            set.input(&items)?;
            let config = serde_json::json!({ "ratings": ratings, "items": items });
            (pop, None, config)
        }
        (None, None, Some(n)) => {
            let seed = args.seed.unwrap_or_else(|| fresh_seed("population"));
            let pop = generate_synthetic(n, args.dim, &mut make_rng(seed, StreamId::Population))?;
            let config = serde_json::json!({ "synthetic": n, "dim": args.dim, "seed": seed });
            (pop, Some(seed), config)
        }
        _ => bail!("give either --ratings with --items, or --synthetic"),
    };
    set.write_json(&name, &pop)?;
    let stem = Path::new(&name).file_stem().map_or(name.clone(), |s| s.to_string_lossy().into_owned());
    set.finish(&format!("{stem}.manifest.json"), "ingest", seed, config)?;
    println!("{} users, dim {}", pop.len(), pop.dim());
    println!("wrote {}", out.display());
    Ok(())
}

/// Settings of one simulate or shapley invocation, as recorded in manifests.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProtocolSettings {
    #[serde(flatten)]
    sim: SimConfig,
    runs: usize,
    dim: usize,
    population: Option<PathBuf>,
}

impl Default for ProtocolSettings {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            runs: 1,
            dim: MOVIELENS_GENRES,
            population: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AttributionSettings {
    #[serde(flatten)]
    protocol: ProtocolSettings,
    estimator: ShapleyMethod,
    budget: usize,
    value_metric: ValueMetric,
}

impl Default for AttributionSettings {
    fn default() -> Self {
        Self {
            protocol: ProtocolSettings::default(),
            estimator: ShapleyMethod::Auto,
            budget: DEFAULT_KERNEL_BUDGET,
            value_metric: ValueMetric::L2Distance,
        }
    }
}

fn protocol_overrides(f: &SimFlags) -> Overrides {
    let mut o = Overrides::default();
    o.set("n_users", f.users)
        .set("n_groups", f.groups)
        .set("n_rounds", f.rounds)
        .set("delta", f.delta)
        .set("grouping_method", f.grouping.map(GroupingMethod::from))
        .set("eval_method", f.eval.map(EvalMethod::from))
        .set("expert_error_rate", f.error_rate)
        .set("epsilon_start", f.epsilon_start)
        .set("epsilon_end", f.epsilon_end)
        .set("seed", f.seed)
        .set("runs", f.runs)
        .set("dim", f.dim)
        .set("population", f.population.clone());
    o
}

/// Fills in the population source and user count; records inputs.
fn population_spec(
    protocol: &mut ProtocolSettings,
    users_given: bool,
    config: Option<&Path>,
    set: &mut OutputSet,
) -> Result<PopulationSpec> {
    if let Some(path) = config {
        set.input(path)?;
    }
    match &protocol.population {
        Some(path) => {
            let pop = load_population(path)?;
            set.input(path)?;
            if !users_given {
                protocol.sim.n_users = pop.len();
            }
            Ok(PopulationSpec::Sampled(pop))
        }
        None => Ok(PopulationSpec::Synthetic { dim: protocol.dim }),
    }
}

fn write_trial(set: &mut OutputSet, prefix: &str, trial: &Trial) -> Result<()> {
    set.write_json(&format!("{prefix}record.json"), &trial.record)?;
    set.write(&format!("{prefix}rounds.csv"), report::rounds_table(&trial.record)?)?;
    set.write(&format!("{prefix}ledger.csv"), report::ledger_table(&trial.record.final_ledger)?)?;
    if let Some(est) = &trial.shapley {
        set.write(&format!("{prefix}phi.csv"), report::phi_table(est)?)?;
        set.write(&format!("{prefix}shapley.csv"), report::shapley_summary_table(est, trial.pearson)?)?;
        set.write_json(&format!("{prefix}estimate.json"), est)?;
    }
    Ok(())
}

fn run_protocol(
    command: &str,
    flags: &SimFlags,
    protocol: &mut ProtocolSettings,
    users_given: bool,
    shapley: Option<&ShapleySettings>,
    set: &mut OutputSet,
) -> Result<()> {
    let spec = population_spec(protocol, users_given, flags.config.as_deref(), set)?;
    protocol.sim.validate()?;
    let config = protocol.sim.clone();
    if protocol.runs == 1 {
        let trial = with_jobs(flags.jobs, || run_trial(&config, &spec, shapley))??;
        write_trial(set, "", &trial)?;
        println!(
            "{command}: {} users, {} groups, {} rounds: distance {:.6} -> {:.6}",
            config.n_users, config.n_groups, config.n_rounds, trial.record.initial_distance, trial.record.final_distance
        );
        if let Some(r) = trial.pearson {
            println!("pearson(points, shapley) = {r:.6}");
        }
        return Ok(());
    }
    let trials = with_jobs(flags.jobs, || run_repeated(&config, &spec, protocol.runs, shapley))??;
    let width = (protocol.runs - 1).to_string().len().max(3);
    for (r, trial) in trials.iter().enumerate() {
        write_trial(set, &format!("run_{r:0width$}/"), trial)?;
    }
    let rows: Vec<(u64, f64, f64, Option<f64>)> = trials
        .iter()
        .map(|t| (t.record.config.seed, t.record.initial_distance, t.record.final_distance, t.pearson))
        .collect();
    set.write("runs.csv", report::runs_table(&rows)?)?;
    let summary = summarize(
        config,
        &rows.iter().map(|r| r.2).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.1).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.3).collect::<Vec<_>>(),
    )?;
    set.write("summary.csv", report::summaries_table(std::slice::from_ref(&summary))?)?;
    println!(
        "{command}: {} runs: mean distance {:.6} -> {:.6} (sd {:.6})",
        summary.n_runs, summary.mean_initial_distance, summary.mean_final_distance, summary.std_final_distance
    );
    if let Some(r) = summary.mean_pearson {
        println!("mean pearson(points, shapley) = {r:.6} over {} runs", summary.n_runs - summary.n_pearson_missing);
    }
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let flags = args.sim;
    let resolved = resolve(&ProtocolSettings::default(), flags.config.as_deref(), protocol_overrides(&flags))?;
    let mut protocol = resolved.value;
    if !resolved.explicit.contains("seed") {
        protocol.sim.seed = fresh_seed("simulation");
    }
    let mut set = OutputSet::new(out_dir(flags.out.clone(), "simulate"));
    run_protocol("simulate", &flags, &mut protocol, resolved.explicit.contains("n_users"), None, &mut set)?;
    let dir = set.dir().to_path_buf();
    set.finish("manifest.json", "simulate", Some(protocol.sim.seed), serde_json::to_value(&protocol)?)?;
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn shapley(args: ShapleyArgs) -> Result<()> {
    let flags = args.sim;
    let mut o = protocol_overrides(&flags);
    o.set("estimator", args.estimator.map(ShapleyMethod::from))
        .set("budget", args.budget)
        .set("value_metric", args.value_metric.map(ValueMetric::from));
    let resolved = resolve(&AttributionSettings::default(), flags.config.as_deref(), o)?;
    if !resolved.explicit.contains("seed") {
        bail!("--seed is required for shapley so that estimates can be reproduced");
    }
    let mut settings = resolved.value;
    let mut set = OutputSet::new(out_dir(flags.out.clone(), "shapley"));
    let users_given = resolved.explicit.contains("n_users");
    if settings.estimator == ShapleyMethod::Exact {
        // resolve the user count first so the refusal comes before any work
        let n = match (&settings.protocol.population, users_given) {
            (Some(path), false) => load_population(path)?.len(),
            _ => settings.protocol.sim.n_users,
        };
        if n > MAX_EXACT_PLAYERS {
            bail!(
                "exact Shapley enumerates all 2^n coalitions and is limited to {MAX_EXACT_PLAYERS} users (got {n}); \
                 use --estimator kernel or --estimator perm with --budget"
            );
        }
    }
    let estimator = ShapleySettings {
        method: settings.estimator,
        budget: settings.budget,
        metric: settings.value_metric,
    };
    run_protocol("shapley", &flags, &mut settings.protocol, users_given, Some(&estimator), &mut set)?;
    let dir = set.dir().to_path_buf();
    set.finish("manifest.json", "shapley", Some(settings.protocol.sim.seed), serde_json::to_value(&settings)?)?;
    println!("wrote {}", dir.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SweepSettings {
    users: Vec<usize>,
    groups: Vec<usize>,
    groupings: Vec<GroupingMethod>,
    evals: Vec<EvalMethod>,
    runs: usize,
    seed: Option<u64>,
    n_rounds: usize,
    delta: f64,
    expert_error_rate: f64,
    epsilon_start: f64,
    epsilon_end: f64,
    dim: usize,
    population: Option<PathBuf>,
    estimator: ShapleyMethod,
    budget: usize,
    value_metric: ValueMetric,
}

impl Default for SweepSettings {
    fn default() -> Self {
        let base = SimConfig::default();
        Self {
            users: vec![10, 25, 50, 75, 100],
            groups: vec![2, 3, 4, 5],
            groupings: GroupingMethod::ALL.to_vec(),
            evals: EvalMethod::ALL.to_vec(),
            runs: 20,
            seed: None,
            n_rounds: base.n_rounds,
            delta: base.delta,
            expert_error_rate: base.expert_error_rate,
            epsilon_start: base.epsilon_start,
            epsilon_end: base.epsilon_end,
            dim: MOVIELENS_GENRES,
            population: None,
            estimator: ShapleyMethod::Auto,
            budget: DEFAULT_KERNEL_BUDGET,
            value_metric: ValueMetric::L2Distance,
        }
    }
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let mut o = Overrides::default();
    o.set("users", args.users)
        .set("groups", args.groups)
        .set("groupings", args.grouping.map(|v| v.into_iter().map(GroupingMethod::from).collect::<Vec<_>>()))
        .set("evals", args.eval.map(|v| v.into_iter().map(EvalMethod::from).collect::<Vec<_>>()))
        .set("runs", args.runs)
        .set("seed", args.seed)
        .set("n_rounds", args.rounds)
        .set("delta", args.delta)
        .set("expert_error_rate", args.error_rate)
        .set("epsilon_start", args.epsilon_start)
        .set("epsilon_end", args.epsilon_end)
        .set("dim", args.dim)
        .set("population", args.population)
        .set("estimator", args.estimator.map(ShapleyMethod::from))
        .set("budget", args.budget)
        .set("value_metric", args.value_metric.map(ValueMetric::from));
    let settings = resolve(&SweepSettings::default(), args.config.as_deref(), o)?.value;
    let Some(seed) = settings.seed else {
        bail!("--seed is required for sweep so that every cell can be reproduced");
    };
    let mut set = OutputSet::new(out_dir(args.out, "sweep"));
    if let Some(path) = &args.config {
        set.input(path)?;
    }
    let population = match &settings.population {
        Some(path) => {
            set.input(path)?;
            PopulationSpec::Sampled(load_population(path)?)
        }
        None => PopulationSpec::Synthetic { dim: settings.dim },
    };
    let spec = SweepSpec {
        users: settings.users.clone(),
        groups: settings.groups.clone(),
        groupings: settings.groupings.clone(),
        evals: settings.evals.clone(),
        runs: settings.runs,
        seed,
        base: SimConfig {
            n_rounds: settings.n_rounds,
            delta: settings.delta,
            expert_error_rate: settings.expert_error_rate,
            epsilon_start: settings.epsilon_start,
            epsilon_end: settings.epsilon_end,
            ..SimConfig::default()
        },
        shapley: ShapleySettings {
            method: settings.estimator,
            budget: settings.budget,
            metric: settings.value_metric,
        },
    };
    let (summaries, table) = with_jobs(args.jobs, || run_sweep(&spec, &population))??;
    let n = table.n_configurations();
    set.write("summaries.csv", report::summaries_table(&summaries)?)?;
    set.write("sweep_rows.csv", report::sweep_rows_table(&table)?)?;
    set.write("distance_winners.csv", report::winner_counts_table(&table.distance_winner_counts, n)?)?;
    set.write("pearson_winners.csv", report::winner_counts_table(&table.pearson_winner_counts, n)?)?;
    set.write("configurations.csv", report::configurations_table(&table)?)?;
    set.write_json("sweep.json", &serde_json::json!({ "summaries": summaries, "table": table }))?;

    println!("{n} configurations x {} method pairs x {} runs", spec.groupings.len() * spec.evals.len(), spec.runs);
    println!("{:<20} {:>14} {:>14}", "pair", "distance wins", "pearson wins");
    for &g in &spec.groupings {
        for &e in &spec.evals {
            let pct = |c: usize| 100.0 * c as f64 / n as f64;
            let (d, p) = (table.distance_wins(g, e), table.pearson_wins(g, e));
            println!(
                "{:<20} {:>6} ({:>4.0}%) {:>6} ({:>4.0}%)",
                format!("{g}+{e}"),
                d,
                pct(d),
                p,
                pct(p)
            );
        }
    }
    let dir = set.dir().to_path_buf();
    set.finish("manifest.json", "sweep", Some(seed), serde_json::to_value(&settings)?)?;
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn tournament(args: TournamentArgs) -> Result<()> {
    let mut o = Overrides::default();
    o.set("k", args.k)
        .set("clones", args.clones)
        .set("iterations", args.iterations)
        .set("eta", args.eta)
        .set("spread", args.spread)
        .set("dim", args.dim)
        .set("baseline_counts", args.baseline)
        .set("seed", args.seed);
    let resolved = resolve(&TournamentSettings::default(), args.config.as_deref(), o)?;
    let mut settings = resolved.value;
    if !resolved.explicit.contains("seed") {
        settings.seed = fresh_seed("tournament");
    }
    if settings.clones < 2 {
        bail!("a tournament needs at least 2 clones, got {}", settings.clones);
    }
    let mut set = OutputSet::new(out_dir(args.out, "tournament"));
    if let Some(path) = &args.config {
        set.input(path)?;
    }
    let trial = run_tournament_trial(&settings)?;
    set.write("tournament.csv", report::tournament_table(&trial.record)?)?;
    set.write("baseline.csv", report::baseline_table(&trial.baseline)?)?;
    set.write_json("tournament.json", &trial)?;
    println!(
        "tournament: distance {:.6} -> {:.6} after {} iterations",
        trial.record.initial_distance,
        trial.record.final_distance,
        trial.record.iterations.len()
    );
    for (c, d) in &trial.baseline {
        println!("single model, {c} samples: {d:.6}");
    }
    let dir = set.dir().to_path_buf();
    set.finish("manifest.json", "tournament", Some(settings.seed), serde_json::to_value(&settings)?)?;
    println!("wrote {}", dir.display());
    Ok(())
}
