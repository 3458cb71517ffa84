//! `antevo`: run evolution episodes and one-shot beamforming solves.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use antevo_core::array::{ArrayConstraints, DoaSet};
use antevo_core::lifecycle::{run_episode_with, DeterministicRouter, EpisodeOutcome, Router};
use antevo_core::llm::{ChatCompletionsClient, EndpointConfig, LlmRouter};
use antevo_core::optimizer::{
    fixed_baseline, optimize_movable, BeamformingSolution, OptimizerConfig, SolutionSource, Strategy,
};
use antevo_core::scenario::{
    events_to_toml, metrics_to_csv, ConstraintSettings, ScenarioConfig, ScenarioError,
};
use antevo_core::Error;

#[derive(Parser, Debug)]
#[command(name = "antevo", version, about = "Movable-antenna beamforming with a self-evolving agent loop")]
struct Cli {
    /// Suppress progress output.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a full episode and write the metrics table and event log.
    Run(RunArgs),
    /// Solve one movable-array problem and compare with the fixed array.
    Optimize(OptimizeArgs),
    /// Gain of the fixed uniform array with optimal weights.
    Baseline(BaselineArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum StrategyArg {
    Auto,
    Gradient,
    Coordinate,
}

impl StrategyArg {
    fn forced(self) -> Option<Strategy> {
        match self {
            StrategyArg::Auto => None,
            StrategyArg::Gradient => Some(Strategy::GradientAlternating),
            StrategyArg::Coordinate => Some(Strategy::CoordinateSearch),
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Scenario file (TOML). The built-in default scenario is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of trajectory steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Route the supervisor through the endpoint in the `[llm]` config section.
    #[arg(long)]
    llm: bool,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// CSI signal-to-noise ratio in dB.
    #[arg(long, allow_negative_numbers = true)]
    snr: Option<f64>,
    #[arg(long, default_value = "metrics.csv")]
    metrics_out: PathBuf,
    #[arg(long, default_value = "events.toml")]
    events_out: PathBuf,
}

#[derive(Args, Debug)]
struct GeometryArgs {
    /// Comma-separated angles in degrees, e.g. `40,90,140`.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    angles: Vec<f64>,
    /// Carrier wavelength in metres.
    #[arg(long)]
    wavelength: Option<f64>,
    #[arg(long)]
    elements: Option<usize>,
    /// Minimum element spacing in metres (default half a wavelength).
    #[arg(long)]
    min_spacing: Option<f64>,
    /// Position bound in metres (default five wavelengths).
    #[arg(long)]
    bound: Option<f64>,
}

impl GeometryArgs {
    fn constraints(&self) -> ArrayConstraints {
        ConstraintSettings {
            wavelength: self.wavelength,
            num_elements: self.elements,
            min_spacing: self.min_spacing,
            position_bound: self.bound,
        }
        .resolve()
    }

    fn doas(&self) -> Result<DoaSet, CliError> {
        DoaSet::new(self.angles.clone()).map_err(|e| CliError::Config(format!("--angles: {e}")))
    }
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[command(flatten)]
    geometry: GeometryArgs,
    #[arg(long, value_enum, default_value = "auto")]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[command(flatten)]
    geometry: GeometryArgs,
}

#[derive(Debug)]
enum CliError {
    /// Malformed configuration or arguments (exit 2).
    Config(String),
    /// Unreadable input or unwritable output (exit 3).
    Io(String),
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Other(m) => m,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Invalid { .. } => CliError::Config(e.to_string()),
            ScenarioError::Io { .. } => CliError::Io(e.to_string()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation(_) | Error::Configuration(_) => CliError::Config(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args, cli.quiet),
        Command::Optimize(args) => cmd_optimize(args),
        Command::Baseline(args) => cmd_baseline(args),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("antevo: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_scenario(args: &RunArgs) -> Result<ScenarioConfig, CliError> {
    let mut scenario = match &args.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(steps) = args.steps {
        scenario.trajectory.num_steps = steps;
    }
    if let Some(snr) = args.snr {
        scenario.csi.snr_db = snr;
    }
    if let Some(strategy) = args.strategy {
        scenario.forced_strategy = strategy.forced();
    }
    scenario.validate()?;
    Ok(scenario)
}

fn cmd_run(args: &RunArgs, quiet: bool) -> Result<String, CliError> {
    let scenario = load_scenario(args)?;
    let outcome = if args.llm {
        let settings = scenario.llm.clone().ok_or_else(|| {
            CliError::Config("llm: --llm needs an [llm] section with base_url and model".into())
        })?;
        let client = ChatCompletionsClient::new(EndpointConfig::from_env(settings)?)?;
        episode(&scenario, &mut LlmRouter::new(client))?
    } else {
        episode(&scenario, &mut DeterministicRouter)?
    };

    write_output(&args.metrics_out, &metrics_to_csv(&outcome.metrics))?;
    write_output(&args.events_out, &events_to_toml(&outcome.events))?;

    let mut out = String::new();
    if !quiet {
        for m in &outcome.metrics {
            let _ = writeln!(
                out,
                "step {:>4}  movable {:>9.4} dB  fixed {:>9.4} dB{}",
                m.step,
                m.movable_gain_db,
                m.fixed_gain_db,
                match (m.evolved, m.trigger_reason) {
                    (true, Some(r)) => format!("  evolved ({})", r.as_str()),
                    (false, Some(r)) => format!("  triggered ({}), not deployed", r.as_str()),
                    _ => String::new(),
                }
            );
        }
        let r = outcome.routing;
        let _ = writeln!(
            out,
            "{} steps, {} events; routing: {} deterministic, {} llm, {} fallback",
            outcome.metrics.len(),
            outcome.events.len(),
            r.deterministic,
            r.llm,
            r.fallback
        );
        let _ = writeln!(
            out,
            "metrics -> {}, events -> {}",
            args.metrics_out.display(),
            args.events_out.display()
        );
    }
    Ok(out)
}

fn episode(scenario: &ScenarioConfig, router: &mut dyn Router) -> Result<EpisodeOutcome, CliError> {
    Ok(run_episode_with(scenario, router)?)
}

fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn cmd_optimize(args: &OptimizeArgs) -> Result<String, CliError> {
    let constraints = args.geometry.constraints();
    let doas = args.geometry.doas()?;
    if doas.len() >= constraints.num_elements {
        return Err(CliError::Config(format!(
            "--angles: {} angles need more than {} elements",
            doas.len(),
            constraints.num_elements
        )));
    }
    let mut config = OptimizerConfig {
        seed: args.seed,
        ..OptimizerConfig::default()
    };
    if let Some(restarts) = args.restarts {
        config.restarts = restarts;
    }
    let candidates: Vec<Strategy> = match args.strategy.forced() {
        Some(s) => vec![s],
        None => vec![Strategy::GradientAlternating, Strategy::CoordinateSearch],
    };
    let mut best: Option<BeamformingSolution> = None;
    for strategy in candidates {
        let solution = optimize_movable(&doas, &OptimizerConfig { strategy, ..config.clone() }, &constraints)?;
        if best.as_ref().is_none_or(|b| solution.gain_linear > b.gain_linear) {
            best = Some(solution);
        }
    }
    let solution = best.expect("at least one strategy runs");
    let fixed = fixed_baseline(&doas, &constraints)?;

    let mut out = String::new();
    let _ = writeln!(out, "strategy = \"{}\"", solution_strategy(&solution));
    let _ = writeln!(out, "positions_wavelengths = {:?}", solution.geometry.positions_in_wavelengths());
    let _ = writeln!(out, "gain_db = {:?}", solution.gain_db);
    let _ = writeln!(out, "gain_linear = {:?}", solution.gain_linear);
    let _ = writeln!(out, "iterations = {}", solution.iterations);
    let _ = writeln!(out, "converged = {}", solution.converged);
    let _ = writeln!(out, "restart = {}", solution.restart);
    let _ = writeln!(out, "fixed_gain_db = {:?}", fixed.gain_db);
    let _ = writeln!(out, "improvement_db = {:?}", solution.gain_db - fixed.gain_db);
    Ok(out)
}

fn solution_strategy(solution: &BeamformingSolution) -> String {
    match solution.strategy_used {
        SolutionSource::Movable(s) => s.to_string(),
        SolutionSource::FixedBaseline => "fixed_baseline".into(),
    }
}

fn cmd_baseline(args: &BaselineArgs) -> Result<String, CliError> {
    let constraints = args.geometry.constraints();
    let doas = args.geometry.doas()?;
    let fixed = fixed_baseline(&doas, &constraints)?;
    let mut out = String::new();
    let _ = writeln!(out, "positions_wavelengths = {:?}", fixed.geometry.positions_in_wavelengths());
    let _ = writeln!(out, "fixed_gain_db = {:?}", fixed.gain_db);
    let _ = writeln!(out, "fixed_gain_linear = {:?}", fixed.gain_linear);
    Ok(out)
}
