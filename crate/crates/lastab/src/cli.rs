use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lastab_core::chain::{check_irreducible, stationary_distribution, Communication, LiftedChain};
use lastab_core::dynamics::{tremble_probabilities, JointState};

use crate::config::{parse_builtin_spec, ExperimentConfig, GameSection, Settings};
use crate::error::{Error, Result};
use crate::par::Runner;
use crate::report::{self, emit_report, Meta};

#[derive(Debug, Parser)]
#[command(name = "lastab", version, about = "Learning dynamics under trembles: simulation, lifted chains and stationary distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a game and parameters; print a summary.
    Validate,
    /// Run trajectories from uniform strategies.
    Simulate,
    /// Estimate the lifted chain over pure strategy states.
    EstimateChain,
    /// Stationary distribution of an estimated or loaded chain.
    Stationary,
    /// Occupation measures over decreasing tremble levels.
    Sweep,
}

#[derive(Debug, Args)]
struct Opts {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Game document (TOML).
    #[arg(long, global = true, conflicts_with = "builtin")]
    game: Option<PathBuf>,
    /// Builtin game, e.g. `coordination` or `constant:n=3,m=2`.
    #[arg(long, global = true)]
    builtin: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Comma separated, non-increasing.
    #[arg(long, global = true, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    runs_per_state: Option<u64>,
    #[arg(long, global = true)]
    t_max: Option<u64>,
    #[arg(long, global = true)]
    steps: Option<u64>,
    #[arg(long, global = true)]
    burn_in: Option<u64>,
    /// Independent trajectories for `simulate`.
    #[arg(long, global = true)]
    runs: Option<u64>,
    /// Trajectory sampling stride; 0 keeps no samples.
    #[arg(long, global = true)]
    stride: Option<u64>,
    /// Chain CSV for `stationary`.
    #[arg(long, global = true)]
    chain: Option<PathBuf>,
    #[arg(long, global = true)]
    censoring_budget: Option<f64>,
}

impl Opts {
    fn settings(self) -> Result<Settings> {
        let base = match &self.config {
            Some(p) => Settings::from_file(p)?,
            None => Settings::default(),
        };
        let game = match (self.game, self.builtin) {
            (Some(file), _) => Some(GameSection {
                file: Some(file),
                ..GameSection::default()
            }),
            (None, Some(spec)) => Some(parse_builtin_spec(&spec)?),
            (None, None) => None,
        };
        Ok(base.overlay(Settings {
            game,
            epsilon: self.epsilon,
            lambda: self.lambda,
            lambdas: self.lambdas,
            delta: self.delta,
            runs_per_state: self.runs_per_state,
            t_max: self.t_max,
            steps: self.steps,
            burn_in: self.burn_in,
            seed: self.seed,
            out: self.out,
            workers: self.workers,
            runs: self.runs,
            stride: self.stride,
            chain: self.chain,
            censoring_budget: self.censoring_budget,
        }))
    }
}

/// Runs the command line; returns the process exit code: 0 on success, 2
/// for invalid input, 1 for failures during a run.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.opts.settings()?.resolve()?;
    match cli.command {
        Command::Validate => validate(&cfg),
        Command::Simulate => simulate(&cfg),
        Command::EstimateChain => estimate_chain(&cfg),
        Command::Stationary => stationary(&cfg),
        Command::Sweep => sweep(&cfg),
    }
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    let game = cfg.game()?;
    if let Some(l) = cfg.lambda {
        tremble_probabilities(l, game.players())?;
    }
    if cfg.epsilon.is_some() {
        cfg.chain_settings()?;
        cfg.dynamics()?;
    }
    if cfg.lambdas.is_some() {
        cfg.sweep_settings()?;
    }
    println!("game: {}", game.name().unwrap_or("(unnamed)"));
    println!("players: {}", game.players());
    println!(
        "actions: {}",
        game.actions().iter().map(|m| m.to_string()).collect::<Vec<_>>().join(" ")
    );
    println!("pure strategy states: {}", game.num_profiles());
    println!("max payoff: {}", game.max_payoff());
    let nash: Vec<String> = game.pure_nash_profiles().iter().map(|p| p.to_string()).collect();
    println!("pure nash: {}", if nash.is_empty() { "none".into() } else { nash.join(" ") });
    println!("config_hash: {}", cfg.hash()?);
    Ok(())
}

fn meta(cfg: &ExperimentConfig, kind: &str) -> Result<Meta> {
    Ok(Meta::new(kind, &cfg.hash()?, cfg.seed))
}

fn emit(cfg: &ExperimentConfig, name: &str, contents: &str) -> Result<()> {
    let path = emit_report(&cfg.out, name, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn simulate(cfg: &ExperimentConfig) -> Result<()> {
    let game = cfg.game()?;
    let dyn_cfg = cfg.dynamics()?;
    if cfg.runs == 0 {
        return Err(Error::config("runs", "must be at least 1"));
    }
    let runner = Runner::new(cfg.workers)?;
    let stop = dyn_cfg.lambda() == 0.0;
    let records = runner.trajectories(
        game,
        &dyn_cfg,
        &JointState::uniform(game),
        cfg.delta,
        stop,
        cfg.stride,
        cfg.runs,
    )?;
    let m = meta(cfg, "runs")?
        .with("epsilon", report::float(dyn_cfg.epsilon()))
        .with("lambda", report::float(dyn_cfg.lambda()))
        .with("delta", report::float(cfg.delta));
    emit(cfg, "runs.csv", &report::runs_csv(&m, &records))?;
    if cfg.stride > 0 {
        let m = Meta { kind: "trajectory".into(), ..m };
        emit(cfg, "trajectory.csv", &report::trajectory_csv(&m, game, cfg.delta, &records)?)?;
    }
    let absorbed = records.iter().filter(|r| r.absorption.is_some()).count();
    if stop {
        println!("absorbed: {absorbed}/{}", records.len());
    }
    Ok(())
}

fn chain_meta(cfg: &ExperimentConfig, chain: &LiftedChain) -> Result<Meta> {
    let censored: u64 = chain.censored().iter().sum();
    Ok(meta(cfg, "chain")?
        .with("epsilon", report::float(cfg.epsilon()?))
        .with("delta", report::float(cfg.delta))
        .with("runs_per_state", cfg.runs_per_state)
        .with("t_max", cfg.t_max)
        .with("censored", censored))
}

fn describe_chain(chain: &LiftedChain) {
    let worst = chain.censoring_rates().into_iter().fold(0.0, f64::max);
    println!("states: {}", chain.size());
    println!("max censoring rate: {worst}");
    match check_irreducible(chain) {
        Communication::Irreducible => println!("irreducible: true"),
        Communication::Reducible(classes) => {
            println!("irreducible: false ({} communicating classes)", classes.len())
        }
    }
}

fn estimate(cfg: &ExperimentConfig) -> Result<LiftedChain> {
    let settings = cfg.chain_settings()?;
    let chain = Runner::new(cfg.workers)?.estimate_lifted_chain(cfg.game()?, &settings)?;
    emit(cfg, "chain.csv", &report::chain_csv(&chain_meta(cfg, &chain)?, &chain))?;
    describe_chain(&chain);
    Ok(chain)
}

fn estimate_chain(cfg: &ExperimentConfig) -> Result<()> {
    estimate(cfg).map(drop)
}

fn stationary(cfg: &ExperimentConfig) -> Result<()> {
    let chain = match &cfg.chain {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            report::parse_chain_csv(&path.display().to_string(), &text)?
        }
        None => estimate(cfg)?,
    };
    let pi = stationary_distribution(&chain)?;
    emit(
        cfg,
        "stationary.csv",
        &report::stationary_csv(&meta(cfg, "stationary")?, chain.states(), &pi),
    )?;
    if !pi.unique {
        println!("warning: chain is reducible; stationary distribution is not unique");
    }
    for (s, p) in chain.states().iter().zip(&pi.pi) {
        println!("pi{} = {p:.6}", s.profile);
    }
    Ok(())
}

fn sweep(cfg: &ExperimentConfig) -> Result<()> {
    let game = cfg.game()?;
    let settings = cfg.sweep_settings()?;
    let report = Runner::new(cfg.workers)?.lambda_sweep(game, &settings)?;
    emit(cfg, "chain.csv", &report::chain_csv(&chain_meta(cfg, &report.chain)?, &report.chain))?;
    emit(
        cfg,
        "stationary.csv",
        &report::stationary_csv(&meta(cfg, "stationary")?, report.chain.states(), &report.pi),
    )?;
    let m = meta(cfg, "sweep")?.with("epsilon", report::float(settings.epsilon));
    emit(cfg, "sweep.csv", &report::sweep_csv(&m, &report))?;
    for row in &report.rows {
        let o = &row.occupation;
        println!(
            "lambda {:.4}: mixed {:.4} tv_to_pi {:.4}{}",
            o.lambda,
            o.mixed_mass,
            row.tv_to_pi,
            if row.mixed_nonincreasing { "" } else { " (mixed mass rose)" }
        );
    }
    Ok(())
}
