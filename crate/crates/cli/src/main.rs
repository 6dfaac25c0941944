use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use platecal_cli::{commands, MethodChoice, Overrides, ProjectConfig};

#[derive(Parser)]
#[command(
    name = "platecal",
    version,
    about = "Gantry calibration with a calibration plate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Project configuration file.
    #[arg(long, global = true, default_value = "platecal.json")]
    config: PathBuf,
    #[arg(long, global = true, value_enum)]
    method: Option<MethodChoice>,
    /// Overrides the campaign seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate measurements and a reference raster from ground truth.
    Simulate,
    /// Estimate the error parameters from the measurements.
    Identify,
    /// Compare corrected kinematics with the reference raster.
    Validate,
    /// Print estimates and identifiability diagnostics.
    Report,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let overrides = Overrides {
        method: cli.method,
        seed: cli.seed,
        out: cli.out,
    };
    let result = ProjectConfig::load(&cli.config, &overrides).and_then(|cfg| match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Identify => commands::identify(&cfg),
        Command::Validate => commands::validate(&cfg),
        Command::Report => commands::report(&cfg),
    });
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
