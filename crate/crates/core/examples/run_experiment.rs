//! Run an experiment from a TOML config through the library and write its
//! CSV/SVG outputs; the `sinkbridge` binary is a thin wrapper around this.
//!
//!     cargo run --release --example run_experiment -- configs/eps-search.toml [out-dir]

use sinkbridge::harness::{describe_grid, emit_outputs, run_experiment, ExperimentConfig};

fn main() -> sinkbridge::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/eps-search.toml").into());
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(dir) = args.next() {
        cfg.output = Some(dir.into());
    }
    print!("{}", describe_grid(&cfg));

    let out = run_experiment(&cfg)?;
    for path in emit_outputs(&out, cfg.output_dir())? {
        println!("wrote {}", path.display());
    }
    for c in &out.checks {
        println!("{} {}: {}", if c.passed { "ok  " } else { "miss" }, c.name, c.detail);
    }
    Ok(())
}
