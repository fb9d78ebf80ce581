//! When do more Sinkhorn iterations stop paying off? Measure the
//! optimization error against k and stop once it falls below the
//! estimation error of the same sample.
//!
//!     cargo run --release --example stopping_point

use sinkbridge::harness::{estimate_stopping_k, run_mse_iter, ExperimentConfig, StoppingEstimate};

fn main() -> sinkbridge::Result<()> {
    let cfg = ExperimentConfig::from_toml(
        r#"
experiment = "mse-iter"
seed = 3
epsilon = 0.01
trials = 2
[grid]
m = [800]
n = [800]
k = [0, 10, 20, 50, 100, 200, 400, 800]
tau = [0.9]
[integration]
time_samples = 200
probes_per_time = 5
"#,
    )?;
    let out = run_mse_iter(&cfg)?;
    let curve: Vec<(usize, f64)> = out.table.rows.iter().map(|r| (r.params[3] as usize, r.value)).collect();
    for (k, e) in &curve {
        println!("k = {k:>3}  integrated MSE to b* = {e:.3e}");
    }
    let est = out.summary.get("estimation_error[tau=0.9]").unwrap();
    println!("estimation error of b* itself: {est:.3e}");
    match estimate_stopping_k(est, &curve) {
        StoppingEstimate::Stop(k) => println!("stop at k = {k}"),
        StoppingEstimate::NoStopInRange => println!("curves do not cross in the grid"),
    }
    Ok(())
}
