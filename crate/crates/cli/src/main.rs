//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 validation error, 3 fit failure, 4 I/O error.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use fluxres_cli::commands::generate::{GenerateArgs, Scenario};
use fluxres_cli::commands::simulate_tuning::{RampDirection, SimulateTuningArgs};
use fluxres_cli::commands::{self, Context};
use fluxres_cli::config::ToolkitConfig;
use fluxres_cli::error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "fluxres",
    version,
    about = "Modeling and analysis for flux-tunable SQUID-terminated resonators"
)]
struct Cli {
    /// Configuration file (TOML); defaults apply when absent.
    #[arg(long, global = true, env = "FLUXRES_CONFIG")]
    config: Option<PathBuf>,

    /// Override the configured RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for batch commands.
    #[arg(long, global = true, default_value_t = 4)]
    workers: usize,

    /// Reject unknown configuration fields.
    #[arg(long, global = true)]
    strict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the resonance-versus-flux tuning curve of the configured device.
    SimulateTuning {
        /// Ramp start (flux quanta).
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        /// Ramp end (flux quanta).
        #[arg(long, default_value_t = 1.0)]
        to: f64,
        /// Number of ramp points (0 writes an empty curve).
        #[arg(long, default_value_t = 401)]
        points: usize,
        /// Sweep direction: up, down or updown.
        #[arg(long, default_value = "up")]
        direction: String,
    },
    /// Fit a notch resonance to a measured S21 sweep file.
    FitS21 { input: PathBuf },
    /// Fit the tuning model to a measured tuning-curve file.
    FitTuning { input: PathBuf },
    /// Analyze the IQ records of a dataset manifest into noise spectra.
    Noise { manifest: PathBuf },
    /// Generate a deterministic synthetic dataset.
    Generate {
        #[arg(long, value_enum)]
        scenario: Scenario,
        /// Complex noise level for the s21 scenario.
        #[arg(long, default_value_t = 1e-3)]
        noise_sigma: f64,
    },
    /// Validate the configuration and print its normalized form.
    ValidateConfig,
}

fn build_context(cli: &Cli) -> CliResult<Context> {
    let config = match &cli.config {
        Some(path) => ToolkitConfig::load(path, cli.strict)?,
        None => ToolkitConfig::default(),
    };
    let out_dir = cli
        .out
        .clone()
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::io(&format!("creating {}", out_dir.display()), e))?;
    let seed = config.seed(cli.seed);
    Ok(Context {
        config,
        out_dir,
        seed,
        workers: cli.workers.clamp(1, 64),
    })
}

fn run(cli: Cli) -> CliResult<()> {
    let ctx = build_context(&cli)?;
    match &cli.command {
        Command::SimulateTuning {
            from,
            to,
            points,
            direction,
        } => {
            let direction = match direction.as_str() {
                "up" => RampDirection::Up,
                "down" => RampDirection::Down,
                "updown" => RampDirection::UpDown,
                other => {
                    return Err(CliError::Validation(format!(
                        "unknown direction {other:?} (up, down, updown)"
                    )))
                }
            };
            commands::simulate_tuning::run(
                &ctx,
                &SimulateTuningArgs {
                    from: *from,
                    to: *to,
                    points: *points,
                    direction,
                },
            )
        }
        Command::FitS21 { input } => commands::fit_s21::run(&ctx, input),
        Command::FitTuning { input } => commands::fit_tuning::run(&ctx, input),
        Command::Noise { manifest } => commands::noise::run(&ctx, manifest),
        Command::Generate {
            scenario,
            noise_sigma,
        } => commands::generate::run(
            &ctx,
            &GenerateArgs {
                scenario: *scenario,
                noise_sigma: *noise_sigma,
            },
        ),
        Command::ValidateConfig => commands::validate_config::run(&ctx),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
