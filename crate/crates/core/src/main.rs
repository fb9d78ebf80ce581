use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sinkbridge::harness::{describe_grid, emit_outputs, run_experiment, Experiment, ExperimentConfig};
use sinkbridge::{Error, Result};

/// Run one of the rate experiments and write CSV/SVG output.
#[derive(Parser, Debug)]
#[command(name = "sinkbridge", version)]
struct Cli {
    /// mse-sample, mse-iter, dim-sweep, eps-search, distill or simulate
    experiment: Experiment,
    /// TOML configuration file
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved grid and exit
    #[arg(long)]
    dry_run: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Ok(v) = std::env::var("SINKBRIDGE_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("SINKBRIDGE_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }

    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if cfg.experiment != cli.experiment {
        return Err(Error::Config(format!(
            "{} declares experiment {}, not {}",
            cli.config.display(),
            cfg.experiment,
            cli.experiment
        )));
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output = Some(out);
    }
    cfg.validate()?;

    if cli.dry_run {
        print!("{}", describe_grid(&cfg));
        return Ok(ExitCode::SUCCESS);
    }

    let output = run_experiment(&cfg)?;
    let dir = cfg.output_dir();
    for path in emit_outputs(&output, &dir)? {
        println!("wrote {}", path.display());
    }
    for (key, value) in &output.summary.entries {
        println!("{key} = {value}");
    }
    for c in &output.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("wall time {:.1} s", output.wall_time_s);
    Ok(if output.passed() { ExitCode::SUCCESS } else { ExitCode::from(3) })
}
