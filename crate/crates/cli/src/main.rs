use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use thermistor_cli::commands::{self, DumpFields};
use thermistor_cli::config::{RunConfig, Scenario};

#[derive(Parser)]
#[command(
    name = "thermistor",
    version,
    about = "Optimal boundary-current heating of a conducting body"
)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    scenario: Option<Scenario>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "final")]
    dump_fields: DumpFields,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the configured scenario and write the report and series.
    Run,
    /// Compare adjoint directional derivatives with finite differences.
    CheckGradient {
        #[arg(long, default_value_t = 5)]
        directions: usize,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
    },
    /// Print mesh measures and the boundary tag audit.
    MeshInfo,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.scenario {
        cfg.scenario = s;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    match cli.command {
        Command::Run => {
            let report = commands::run(&cfg, &cfg.output_dir.clone(), cli.dump_fields)?;
            print!("{}", report.to_json());
        }
        Command::CheckGradient { directions, lambda } => {
            let report = commands::check_gradient(&cfg, directions, cfg.seed, lambda)?;
            print!("{}", report.render());
            if report.max_rel_error > 1e-3 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::MeshInfo => print!("{}", commands::mesh_info(&cfg)?),
    }
    Ok(ExitCode::SUCCESS)
}
