use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eeprec::{run_pipeline, run_stage, CliError, PipelineConfig, Stage, StageReport};

/// Vision-based end-effector measurement and learned position correction
/// for a cable-driven surgical arm.
///
/// Exit codes: 0 success, 1 runtime failure, 2 configuration error,
/// 3 acceptance threshold violated.
#[derive(Debug, Parser)]
#[command(name = "eeprec", version)]
struct Cli {
    /// TOML config file; every key is optional.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set training.epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize markers, camera priors and the rig motion.
    Scene,
    /// Refine camera poses from marker observations.
    Calibrate,
    /// Render the rig motion into one image per camera and frame.
    Render,
    /// Detect the three balls in every image independently.
    Detect,
    /// Track circles across frames and solve the effector pose.
    Track,
    /// Simulate teleoperation trajectories into a dataset.
    Simulate,
    /// Train the error-correcting network on the dataset.
    Train,
    /// Correct the reported positions of the dataset stream.
    Estimate,
    /// Write reports and check the configured thresholds.
    Evaluate,
    /// Run every stage in order.
    Pipeline,
    /// Print the resolved configuration.
    Config,
}

fn print_report(r: &StageReport) {
    println!("[{}] manifest {}", r.stage.name(), r.manifest.display());
    for (k, v) in &r.summary {
        println!("[{}] {k}: {v}", r.stage.name());
    }
}

fn fail(stage: &str, e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    eprintln!("{}", e.machine_line(stage));
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match PipelineConfig::load(cli.config.as_deref(), &cli.overrides) {
        Ok(c) => c,
        Err(e) => return fail("config", &e),
    };
    let stage = match cli.command {
        Command::Config => {
            print!("{}", cfg.to_toml());
            return ExitCode::SUCCESS;
        }
        Command::Pipeline => {
            return match run_pipeline(&cfg, print_report) {
                Ok(_) => ExitCode::SUCCESS,
                Err((stage, e)) => fail(stage.name(), &e),
            };
        }
        Command::Scene => Stage::Scene,
        Command::Calibrate => Stage::Calibrate,
        Command::Render => Stage::Render,
        Command::Detect => Stage::Detect,
        Command::Track => Stage::Track,
        Command::Simulate => Stage::Simulate,
        Command::Train => Stage::Train,
        Command::Estimate => Stage::Estimate,
        Command::Evaluate => Stage::Evaluate,
    };
    match run_stage(stage, &cfg) {
        Ok(r) => {
            print_report(&r);
            ExitCode::SUCCESS
        }
        Err(e) => fail(stage.name(), &e),
    }
}
