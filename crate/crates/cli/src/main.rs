use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phaseonium_cli::{default_out_dir, run, Experiment, RunConfig, EXIT_FATAL};

#[derive(Parser)]
#[command(
    name = "phaseonium",
    version,
    about = "Phaseonium-fuelled photon engine experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map T_phi/T_cl over (alpha, phi).
    TempRatio(RunArgs),
    /// Thermalize one cavity from the vacuum.
    Thermalize(RunArgs),
    /// Single-cavity Otto cycles over a grid of fuel phases.
    #[command(alias = "single-engine-sweep")]
    EngineSweep(RunArgs),
    /// Two-cavity cascade cycle trajectory.
    CascadeCycle(RunArgs),
    /// Correlations against work at decreasing isochore budgets.
    MiVsWork(RunArgs),
    /// Print the default configuration as TOML.
    DefaultConfig,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file layered over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: output_dir from the config, else out/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config key, e.g. --set thermalize.levels=30. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn execute(experiment: Experiment, args: RunArgs) -> anyhow::Result<i32> {
    let config = RunConfig::load(args.config.as_deref(), &args.overrides)?;
    let out = args
        .out
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| default_out_dir(experiment));
    let summary = run(experiment, &config, &out)?;
    eprintln!(
        "{}: wrote {} files to {} (status {})",
        experiment.name(),
        summary.files.len(),
        summary.out_dir.display(),
        summary.status.label()
    );
    Ok(summary.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::TempRatio(a) => (Experiment::TempRatio, a),
        Command::Thermalize(a) => (Experiment::Thermalize, a),
        Command::EngineSweep(a) => (Experiment::EngineSweep, a),
        Command::CascadeCycle(a) => (Experiment::CascadeCycle, a),
        Command::MiVsWork(a) => (Experiment::MiVsWork, a),
        Command::DefaultConfig => {
            print!("{}", RunConfig::default().to_toml());
            return ExitCode::SUCCESS;
        }
    };
    match execute(experiment, args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FATAL as u8)
        }
    }
}
