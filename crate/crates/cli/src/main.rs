//! `pwe`: build graphs, configure tiles, schedule updates, simulate and
//! serve PDP queries from a scenario file.
//!
//! Exit codes: 0 success, 1 invalid input (flags or scenario), 2 runtime
//! failure.

use std::fs;
use std::io::Write as _;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pwe_core::channel::{compute_pdp, pdp_to_csv};
use pwe_core::optimize::{evaluate, OptimizerSpec, SoftLimits};
use pwe_core::scenario::{configuration_csv, links_csv, nodes_csv, parse_scenario, Manifest, Scenario, ScenarioError};
use pwe_core::schedule::{build_model, relax_and_round, solve_exact, validate_consistency, UpdateGraph, UpdateProblem};
use pwe_core::service::PdpService;
use pwe_core::sim::{run_both, run_scenario, PweMode, TimeSeries};
use pwe_core::Configuration;

#[derive(Parser)]
#[command(name = "pwe", version, about = "Programmable wireless environment toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the tile graph as node and link CSVs.
    BuildGraph {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an optimizer and write the configuration, selected paths and objective report.
    Configure {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opt: OptimizerArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute a consistent multi-round update schedule.
    Schedule {
        #[command(flatten)]
        common: Common,
        /// Number of rounds; cycles the scenario's rounds, or repeats the objective pairs.
        #[arg(long)]
        rounds: Option<usize>,
        /// Use relax-and-round instead of the exact solver.
        #[arg(long)]
        relax: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the mobile-receiver simulation and write time series CSVs.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opt: OptimizerArgs,
        #[arg(long, value_enum, default_value = "both")]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer PDP requests, one JSON object per line.
    Serve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opt: OptimizerArgs,
        /// host:port to listen on; standard input/output when omitted or `-`.
        #[arg(long)]
        endpoint: Option<String>,
        /// `off` serves the deactivated environment instead of the optimised one.
        #[arg(long, value_enum, default_value = "on")]
        mode: ModeArg,
    },
    /// Print one PDP as CSV.
    Pdp {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opt: OptimizerArgs,
        /// Defaults to the first objective's transmitter.
        #[arg(long)]
        tx: Option<String>,
        /// Defaults to the first objective's receiver.
        #[arg(long)]
        rx: Option<String>,
        #[arg(long, value_enum, default_value = "on")]
        mode: ModeArg,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's simulation seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct OptimizerArgs {
    /// kpaths, lexicographic, explorer or backprop.
    #[arg(long)]
    optimizer: Option<String>,
    /// Paths per user pair (kpaths only).
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    On,
    Off,
    Both,
}

enum Failure {
    Invalid(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => Failure::Runtime(e.into()),
            ScenarioError::Parse { .. } => Failure::Invalid(e.to_string()),
            ScenarioError::Validation(issues) => Failure::Invalid(
                issues.iter().map(|i| format!("{}: {}", i.path, i.message)).collect::<Vec<_>>().join("\n"),
            ),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("invalid input:\n{m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::BuildGraph { common, out } => build_graph(&common, &out),
        Command::Configure { common, opt, out } => configure(&common, &opt, &out),
        Command::Schedule { common, rounds, relax, out } => schedule(&common, rounds, relax, &out),
        Command::Simulate { common, opt, mode, out } => simulate(&common, &opt, mode, &out),
        Command::Serve { common, opt, endpoint, mode } => serve(&common, &opt, endpoint.as_deref(), mode),
        Command::Pdp { common, opt, tx, rx, mode } => pdp(&common, &opt, tx, rx, mode),
    }
}

fn load(common: &Common) -> Result<Scenario, Failure> {
    Ok(parse_scenario(&common.scenario)?)
}

fn seed_of(common: &Common, scenario: &Scenario) -> u64 {
    common.seed.unwrap_or(scenario.file.simulation.params.seed)
}

/// The scenario's optimizer with command-line overrides applied.
fn optimizer(scenario: &Scenario, opt: &OptimizerArgs, seed: u64) -> Result<OptimizerSpec, Failure> {
    let mut spec = match &opt.optimizer {
        None => scenario.file.optimizer.clone(),
        Some(name) if name == scenario.file.optimizer.name() => scenario.file.optimizer.clone(),
        Some(name) => OptimizerSpec::from_name(name).ok_or_else(|| {
            Failure::Invalid(format!("--optimizer: unknown optimizer `{name}` (kpaths, lexicographic, explorer, backprop)"))
        })?,
    };
    if let Some(k) = opt.k {
        match &mut spec {
            OptimizerSpec::Kpaths { options } if k >= 1 => options.k = k,
            OptimizerSpec::Kpaths { .. } => return Err(Failure::Invalid("--k must be at least 1".into())),
            other => return Err(Failure::Invalid(format!("--k applies to kpaths, not {}", other.name()))),
        }
    }
    if let OptimizerSpec::Explorer { options } = &mut spec {
        options.seed = seed;
    }
    Ok(spec)
}

fn configured(scenario: &Scenario, opt: &OptimizerArgs, seed: u64, mode: ModeArg) -> Result<Configuration, Failure> {
    if mode == ModeArg::Off {
        return Ok(Configuration::empty());
    }
    if scenario.file.objectives.is_empty() {
        return Err(Failure::Invalid("objectives: at least one objective is required".into()));
    }
    let spec = optimizer(scenario, opt, seed)?;
    spec.configure(&scenario.graph, &scenario.file.objectives, &scenario.file.channel)
        .map_err(|e| Failure::Runtime(anyhow!(e).context("optimizer failed")))
}

fn write_outputs(out: &Path, files: &[(&str, String)], manifest: Manifest) -> Outcome {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (name, body) in files {
        let path = out.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    let path = out.join("manifest.json");
    fs::write(&path, manifest.to_json()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn manifest(command: &str, seed: u64, files: &[(&str, String)], scenario: &Scenario) -> Manifest {
    Manifest::new(command, seed, files.iter().map(|(n, _)| n.to_string()).collect(), &scenario.file)
}

fn build_graph(common: &Common, out: &Path) -> Outcome {
    let scenario = load(common)?;
    let seed = seed_of(common, &scenario);
    let files = [("nodes.csv", nodes_csv(&scenario.graph)), ("links.csv", links_csv(&scenario.graph))];
    eprintln!("{} tiles, {} links", scenario.graph.tiles.len(), scenario.graph.links.len());
    write_outputs(out, &files, manifest("build-graph", seed, &files, &scenario))
}

fn configure(common: &Common, opt: &OptimizerArgs, out: &Path) -> Outcome {
    let scenario = load(common)?;
    if scenario.file.objectives.is_empty() {
        return Err(Failure::Invalid("objectives: at least one objective is required".into()));
    }
    let seed = seed_of(common, &scenario);
    let spec = optimizer(&scenario, opt, seed)?;
    let (graph, params) = (&scenario.graph, &scenario.file.channel);
    let result = spec
        .run(graph, &scenario.file.objectives, params)
        .map_err(|e| Failure::Runtime(anyhow!(e).context("optimizer failed")))?;
    let report = evaluate(
        graph,
        &Configuration::empty(),
        &result.configuration,
        &scenario.file.objectives,
        params,
        &SoftLimits::default(),
    )
    .map_err(|e| Failure::Runtime(e.into()))?;
    let mut paths = String::from("tx_id,rx_id,rank,cost_db,nodes\n");
    let mut rank = 0;
    for (i, p) in result.paths.iter().enumerate() {
        rank = if i > 0 && result.paths[i - 1].tx_id == p.tx_id && result.paths[i - 1].rx_id == p.rx_id { rank + 1 } else { 1 };
        let ids: Vec<&str> = p.nodes.iter().map(|&n| graph.node_id(n)).collect();
        paths.push_str(&format!("{},{},{},{},{}\n", p.tx_id, p.rx_id, rank, p.cost_db, ids.join(";")));
    }
    let files = [
        ("configuration.csv", configuration_csv(graph, &result.configuration)),
        ("paths.csv", paths),
        ("report.json", serde_json::to_string_pretty(&report).context("serialising report")? + "\n"),
    ];
    eprintln!("{}: {} tiles configured, {} paths", spec.name(), result.configuration.assignment.len(), result.paths.len());
    write_outputs(out, &files, manifest("configure", seed, &files, &scenario))
}

fn update_problem(scenario: &Scenario, rounds: Option<usize>) -> Result<UpdateProblem, Failure> {
    if rounds == Some(0) {
        return Err(Failure::Invalid("--rounds must be at least 1".into()));
    }
    if !scenario.file.schedule.rounds.is_empty() {
        let mut p = scenario.update_problem()?;
        if let Some(r) = rounds {
            let base = p.pairs_per_round.clone();
            p.pairs_per_round = base.iter().cycle().take(r).cloned().collect();
        }
        return Ok(p);
    }
    let g = &scenario.graph;
    let pairs: Vec<(usize, usize)> = scenario
        .file
        .objectives
        .iter()
        .map(|o| (g.node(&o.tx_id).expect("validated"), g.node(&o.rx_id).expect("validated")))
        .collect();
    if pairs.is_empty() {
        return Err(Failure::Invalid("schedule.rounds: no rounds and no objectives to derive them from".into()));
    }
    let sources: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let sinks: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let mut graph = UpdateGraph::from_pwe(g);
    graph.arcs.retain(|&(u, v)| (g.is_tile(u) || sources.contains(&u)) && (g.is_tile(v) || sinks.contains(&v)));
    let mut active: Vec<bool> = (0..g.node_count()).map(|n| !g.is_tile(n)).collect();
    for id in &scenario.file.schedule.initially_active {
        match g.node(id) {
            Some(n) => active[n] = true,
            None => return Err(Failure::Invalid(format!("schedule.initially_active: unknown tile `{id}`"))),
        }
    }
    Ok(UpdateProblem { graph, initial_active: active, pairs_per_round: vec![pairs; rounds.unwrap_or(2)] })
}

fn schedule(common: &Common, rounds: Option<usize>, relax: bool, out: &Path) -> Outcome {
    let scenario = load(common)?;
    let seed = seed_of(common, &scenario);
    let problem = update_problem(&scenario, rounds)?;
    let spec = &scenario.file.schedule;
    let runtime = |e: pwe_core::ScheduleError| Failure::Runtime(anyhow!(e));
    if !relax {
        spec.exact_limits.check(&problem).map_err(runtime)?;
    }
    let model = build_model(&problem).map_err(runtime)?;
    let result = if relax { relax_and_round(&model, seed, spec.relax_attempts) } else { solve_exact(&model, &spec.exact_limits) };
    let schedule = result.map_err(runtime)?;
    let report = validate_consistency(&problem, &schedule);
    if !report.consistent {
        return Err(Failure::Runtime(anyhow!("schedule failed the consistency check: {:?}", report.violations)));
    }
    eprintln!("{} rounds, {} touches", schedule.rounds.len(), schedule.touches);
    let files = [("schedule.csv", schedule.to_csv())];
    write_outputs(out, &files, manifest(if relax { "schedule --relax" } else { "schedule" }, seed, &files, &scenario))
}

fn simulate(common: &Common, opt: &OptimizerArgs, mode: ModeArg, out: &Path) -> Outcome {
    let scenario = load(common)?;
    let seed = seed_of(common, &scenario);
    let mut setup = scenario.sim_setup(Some(seed))?;
    setup.optimizer = optimizer(&scenario, opt, seed)?;
    let sim_err = |e: pwe_core::sim::SimError| Failure::Runtime(anyhow!(e).context("simulation failed"));
    let series: Vec<TimeSeries> = match mode {
        ModeArg::Both => {
            let (on, off) = run_both(&setup).map_err(sim_err)?;
            vec![on, off]
        }
        ModeArg::On => vec![run_scenario(&setup, PweMode::On).map_err(sim_err)?],
        ModeArg::Off => vec![run_scenario(&setup, PweMode::Off).map_err(sim_err)?],
    };
    let names: Vec<String> = series.iter().map(|s| format!("timeseries_{}.csv", s.mode.as_str())).collect();
    let files: Vec<(&str, String)> = names.iter().map(String::as_str).zip(series.iter().map(TimeSeries::to_csv)).collect();
    for s in &series {
        let n = s.samples.len().max(1) as f64;
        let mean = s.samples.iter().map(|x| x.doppler_spread_hz).sum::<f64>() / n;
        eprintln!("{}: {} samples, mean Doppler spread {mean:.1} Hz", s.mode.as_str(), s.samples.len());
    }
    write_outputs(out, &files, manifest("simulate", seed, &files, &scenario))
}

fn serve(common: &Common, opt: &OptimizerArgs, endpoint: Option<&str>, mode: ModeArg) -> Outcome {
    if mode == ModeArg::Both {
        return Err(Failure::Invalid("--mode both is not meaningful for serve".into()));
    }
    let scenario = load(common)?;
    let seed = seed_of(common, &scenario);
    let config = configured(&scenario, opt, seed, mode)?;
    let service = PdpService::new(scenario.graph.clone(), config, scenario.file.channel);
    match endpoint {
        None | Some("-") => service.serve_stdio().context("serving standard input")?,
        Some(addr) => {
            let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
            eprintln!("listening on {}", listener.local_addr().context("reading local address")?);
            Arc::new(service).serve_tcp(listener).context("accepting connections")?;
        }
    }
    Ok(())
}

fn pdp(common: &Common, opt: &OptimizerArgs, tx: Option<String>, rx: Option<String>, mode: ModeArg) -> Outcome {
    if mode == ModeArg::Both {
        return Err(Failure::Invalid("--mode both is not meaningful for pdp".into()));
    }
    let scenario = load(common)?;
    let seed = seed_of(common, &scenario);
    let first = scenario.file.objectives.first();
    let tx = tx.or_else(|| first.map(|o| o.tx_id.clone()));
    let rx = rx.or_else(|| first.map(|o| o.rx_id.clone()));
    let (Some(tx), Some(rx)) = (tx, rx) else {
        return Err(Failure::Invalid("--tx/--rx are required when the scenario has no objectives".into()));
    };
    for id in [&tx, &rx] {
        if scenario.graph.user_node(id).is_err() {
            return Err(Failure::Invalid(format!("unknown user `{id}`")));
        }
    }
    let config = if mode == ModeArg::Off || scenario.file.objectives.is_empty() {
        Configuration::empty()
    } else {
        configured(&scenario, opt, seed, mode)?
    };
    let pdp = compute_pdp(&scenario.graph, &config, &tx, &rx, &scenario.file.channel).map_err(|e| Failure::Runtime(e.into()))?;
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(pdp_to_csv(&pdp).as_bytes()).context("writing stdout")?;
    Ok(())
}
