use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use seirs_spde::config::Mode;
use seirs_spde::run::{apply_overrides, execute, load_config, Overrides, OUTPUT_ENV};

/// Stochastic SEIRS reaction-diffusion simulator.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// simulate, ensemble, thresholds, convergence or picard.
    mode: Mode,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the environment and the config file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for ensembles and studies (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Master seed (overrides run.seed).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env_out = std::env::var(OUTPUT_ENV).ok();
    let overrides = Overrides {
        mode: Some(cli.mode),
        seed: cli.seed,
        out: cli.out,
    };
    let outcome = load_config(&cli.config).and_then(|c| apply_overrides(c, &overrides, env_out.as_deref()));
    let config = match outcome {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.threads {
        builder = builder.num_threads(k.max(1));
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::FAILURE;
        }
    };
    let threads = pool.current_num_threads();
    match pool.install(|| execute(&config, threads)) {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            for line in &report.warnings {
                eprintln!("{line}");
            }
            println!("wrote {} files to {}", report.files.len(), report.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
