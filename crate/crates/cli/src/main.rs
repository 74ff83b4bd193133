use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use feec::experiments::{run, ExperimentConfig, ExperimentId};
use feec::fem::BoundaryCondition;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Bc {
    Natural,
    Essential,
}

/// Runs one of the finite element exterior calculus experiments and writes
/// CSV tables, two-column plot data and a verdict file.
#[derive(Debug, Parser)]
#[command(name = "feec", version)]
struct Args {
    /// Experiment id (see `--list`).
    #[arg(required_unless_present_any = ["config", "list"])]
    experiment: Option<String>,
    /// Number of refinement levels.
    #[arg(long)]
    levels: Option<usize>,
    /// Polynomial degree.
    #[arg(long)]
    r: Option<u32>,
    /// Family choices, one bit per intermediate degree (`1` = trimmed).
    #[arg(long)]
    pattern: Option<String>,
    #[arg(long, value_enum)]
    bc: Option<Bc>,
    /// Coarsest mesh parameter.
    #[arg(long)]
    base: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `out/<experiment>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON configuration file; command line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the experiment ids and exit.
    #[arg(long)]
    list: bool,
}

fn build_config(args: &Args) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::new(args.experiment.as_deref().unwrap_or_default().parse::<ExperimentId>()?),
    };
    if let Some(id) = &args.experiment {
        config.id = id.parse()?;
    }
    config.levels = args.levels.or(config.levels);
    config.r = args.r.or(config.r);
    config.pattern = args.pattern.clone().or(config.pattern);
    config.base = args.base.or(config.base);
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(bc) = args.bc {
        config.bc = Some(match bc {
            Bc::Natural => BoundaryCondition::Natural,
            Bc::Essential => BoundaryCondition::Essential,
        });
    }
    config.out = Some(args.out.clone().or(config.out).unwrap_or_else(|| PathBuf::from("out").join(config.id.as_str())));
    Ok(config)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list {
        for id in ExperimentId::ALL {
            println!("{id}");
        }
        return ExitCode::SUCCESS;
    }
    let config = match build_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&config) {
        Ok(report) => {
            print!("{}", report.summary());
            println!("output written to {}", config.out.as_ref().expect("set above").display());
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
