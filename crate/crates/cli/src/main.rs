use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use coordscope::afriat::{self, GridSpec, PiecewiseLinearUtility};
use coordscope::harness::{self, ExperimentConfig, Mode, PipelineOptions};
use coordscope::io;
use coordscope::milp::{self, DecideOptions, Decision, MilpError, DEFAULT_NODE_BUDGET};
use coordscope::sim::{self, NetworkSpec};

/// Exit code for runs that hit the node budget.
const UNDECIDED: u8 = 2;

#[derive(Parser)]
#[command(name = "coordscope", version, about = "Test multi-agent data for coordination and reconstruct agent utilities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from the radar-network simulator.
    Simulate(SimulateArgs),
    /// Decide whether a dataset is consistent with coordination.
    Test(TestArgs),
    /// Build certificates and contour tables from a witness.
    Reconstruct(ReconstructArgs),
    /// Run repeated simulate-and-test trials.
    Montecarlo(MontecarloArgs),
    /// Test a dataset and, if it coordinates, reconstruct every agent.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Agent spec file (JSON list of {utility, exponents, weight}).
    #[arg(long)]
    agents: Option<PathBuf>,
    /// Draw each agent's response independently instead, for this many agents.
    #[arg(long, value_name = "M", conflicts_with = "agents")]
    independent: Option<usize>,
    #[arg(long = "T", value_name = "T")]
    steps: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    budget: f64,
    #[arg(long, default_value_t = 2)]
    goods: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write the hidden per-agent responses.
    #[arg(long, value_name = "PATH")]
    emit_truth: Option<PathBuf>,
    /// Also write the dataset as CSV.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    dataset: PathBuf,
    #[arg(long)]
    epsilon_strict: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    node_budget: usize,
    #[arg(long, value_name = "PATH")]
    emit_witness: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    dataset: PathBuf,
    #[arg(long)]
    witness: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Contour grid points per axis.
    #[arg(long, default_value_t = 100)]
    grid: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Coordinated,
    Independent,
}

#[derive(Args)]
struct MontecarloArgs {
    /// Experiment config JSON; other flags are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "independent")]
    mode: ModeArg,
    #[arg(long)]
    agents: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    num_agents: usize,
    #[arg(long = "T", value_name = "T", default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon_strict: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    node_budget: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epsilon_strict: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    node_budget: usize,
    #[arg(long, default_value_t = 100)]
    grid: usize,
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let (dataset, truth) = match args.independent {
        Some(m) => (sim::simulate_independent(m, args.goods, args.steps, args.seed)?, None),
        None => {
            let spec = match &args.agents {
                Some(path) => {
                    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    NetworkSpec::from_agent_file(&text, args.budget, args.goods)?
                }
                None => NetworkSpec::tri_radar(),
            };
            let (d, t) = sim::simulate(&spec, args.steps, args.seed)?;
            (d, Some(t))
        }
    };
    io::write_dataset(&dataset, &args.out)?;
    if let Some(path) = &args.csv {
        fs::write(path, io::dataset_to_csv(&dataset))?;
    }
    if let Some(path) = &args.emit_truth {
        match &truth {
            Some(t) => fs::write(path, io::allocation_to_json(t))?,
            None => {
                // independent responses are not kept apart from the dataset
                bail!("--emit-truth is only available for simulated networks")
            }
        }
    }
    log::info!("wrote {} observations to {}", dataset.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn test(args: TestArgs) -> Result<ExitCode> {
    let dataset = io::read_dataset(&args.dataset)?;
    let eps = args.epsilon_strict.unwrap_or_else(|| milp::default_epsilon(&dataset));
    let problem = milp::build_problem(&dataset, eps)?;
    match milp::decide_with(&problem, &DecideOptions { node_budget: args.node_budget }) {
        Ok(verdict) => {
            let label = if verdict.is_coordinating() { "coordinating" } else { "not-coordinating" };
            println!("{label} ({} nodes, {:.1} ms)", verdict.node_count, verdict.wall_time.as_secs_f64() * 1e3);
            if let (Some(path), Some(w)) = (&args.emit_witness, &verdict.witness) {
                fs::write(path, io::allocation_to_json(w))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(MilpError::NodeBudgetExceeded { budget }) => {
            println!("undecided (node budget {budget} exhausted)");
            Ok(ExitCode::from(UNDECIDED))
        }
        Err(e) => Err(e.into()),
    }
}

fn reconstruct(args: ReconstructArgs) -> Result<ExitCode> {
    let dataset = io::read_dataset(&args.dataset)?;
    let witness = io::allocation_from_json(&fs::read_to_string(&args.witness)?)?;
    let mut files = Vec::new();
    for i in 0..dataset.agents() {
        let cert = afriat::solve_certificate(&dataset, &witness, i)?;
        files.push((format!("certificate_agent{}.json", i + 1), io::certificate_to_json(i, &cert)));
        if dataset.goods() == 2 {
            let utility = PiecewiseLinearUtility::reconstruct(&dataset, &witness, i, &cert);
            let grid = GridSpec::around(&witness.agent_bundles(i), args.grid);
            files.push((format!("contour_agent{}.csv", i + 1), afriat::export_contour(&utility, &grid)?));
        }
    }
    fs::create_dir_all(&args.out)?;
    harness::write_with_manifest(&args.out, &files)?;
    println!("reconstructed {} agents into {}", dataset.agents(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn montecarlo(args: MontecarloArgs) -> Result<ExitCode> {
    let config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let Some(seed) = args.seed else {
                bail!("--seed is required without --config");
            };
            let mode = match args.mode {
                ModeArg::Coordinated => Mode::Coordinated,
                ModeArg::Independent => Mode::Independent,
            };
            let mut c = ExperimentConfig::new(mode, args.steps, args.trials, seed);
            c.agents = args.agents.clone();
            c.num_agents = args.num_agents;
            c.epsilon_strict = args.epsilon_strict;
            c.node_budget = args.node_budget;
            c.out = args.out.clone();
            c.validate()?;
            c
        }
    };
    let summary = harness::run_experiment(&config)?;
    println!(
        "{} trials: {} coordinating, {} not-coordinating, {} undecided (rejection rate {:.3})",
        summary.results.len(),
        summary.coordinating(),
        summary.not_coordinating(),
        summary.undecided(),
        summary.rejection_rate()
    );
    if let Some(dir) = &config.out {
        harness::write_summary(&summary, dir)?;
    }
    Ok(if summary.all_decided() { ExitCode::SUCCESS } else { ExitCode::from(UNDECIDED) })
}

fn pipeline(args: PipelineArgs) -> Result<ExitCode> {
    let options = PipelineOptions { epsilon_strict: args.epsilon_strict, node_budget: args.node_budget, grid: args.grid };
    match harness::run_pipeline(&args.dataset, &args.out, &options) {
        Ok(report) => {
            let label = match report.decision {
                Decision::Coordinating => "coordinating",
                Decision::NotCoordinating => "not-coordinating",
            };
            println!("{label}: wrote {} artifacts to {}", report.artifacts.len(), args.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Err(harness::HarnessError::Milp(MilpError::NodeBudgetExceeded { budget })) => {
            println!("undecided (node budget {budget} exhausted)");
            Ok(ExitCode::from(UNDECIDED))
        }
        Err(e) => Err(e.into()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Test(a) => test(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Montecarlo(a) => montecarlo(a),
        Command::Pipeline(a) => pipeline(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
