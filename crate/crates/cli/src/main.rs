use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use unmt_cli::config::PipelineConfig;
use unmt_cli::demo::{demo_config, write_demo, DemoConfig};
use unmt_cli::error::{CliError, CliResult};
use unmt_cli::run_stages;
use unmt_cli::stages::{Stage, ALL};

#[derive(Parser)]
#[command(name = "unmt", about = "Unsupervised MT workbench")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one stage, or `all` for the whole pipeline.
    Run {
        stage: String,
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config workdir.
        #[arg(long)]
        workdir: Option<PathBuf>,
    },
    /// Write the synthetic cipher corpus and a matching config.
    DemoData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// List stage names in pipeline order.
    Stages,
}

fn run(args: Args) -> CliResult<()> {
    match args.command {
        Command::Run { stage, config, seed, workdir } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workdir {
                cfg.workdir = w;
            }
            let stages = if stage == "all" { ALL.to_vec() } else { vec![stage.parse::<Stage>()?] };
            let mut started = Instant::now();
            run_stages(&cfg, &stages, |s, status| {
                eprintln!("{s}: {status} ({:.1}s)", started.elapsed().as_secs_f64());
                started = Instant::now();
            })?;
        }
        Command::DemoData { out, seed } => {
            let demo = DemoConfig { seed, ..DemoConfig::default() };
            let paths = write_demo(&out, &demo).map_err(|e| CliError::io(&out, e))?;
            let cfg = demo_config(&paths, out.join("work"), seed);
            let path = out.join("config.json");
            cfg.save(&path)?;
            eprintln!("wrote demo data and {}", path.display());
        }
        Command::Stages => {
            for s in ALL {
                println!("{s}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
