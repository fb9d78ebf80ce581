//! Simulate the Sinkhorn bridge from eight Gaussians to two moons with
//! Euler–Maruyama and write the trajectories.
//!
//!     cargo run --release --example simulate_bridge -- [out.csv]

use sinkbridge::eot::Scheme;
use sinkbridge::harness::datasets::{eight_gaussians, moons};
use sinkbridge::sde::{simulate_from, SdeConfig};
use sinkbridge::{DriftField, EotProblem, SinkhornSolver, StoppingRule};

fn main() -> sinkbridge::Result<()> {
    let eps = 0.1;
    let x = eight_gaussians(500, 5.0, 0.1, 1)?;
    let y = moons(500, 0.2, 2)?;
    let problem = EotProblem::new(x.clone(), y.clone(), eps)?;
    let solver = SinkhornSolver::new(&problem).with_scheme(Scheme::Absorbed);
    let p = solver.run(StoppingRule::MarginalTolerance { tol: 1e-8, max_iter: 20_000 })?.potentials;
    let field = DriftField::new(y.clone(), p.g, eps)?;

    let cfg = SdeConfig::new(0.99, 500, eps, 42)?.with_record_stride(100)?;
    let batch = simulate_from(&field, &x, &cfg)?;
    for t in [0.0, 0.495, 0.99] {
        let m = batch.marginal_at(t)?.mean();
        println!("t = {t:<5}  mean = [{:+.3}, {:+.3}]", m[0], m[1]);
    }
    let target = y.mean();
    println!("target mean   [{:+.3}, {:+.3}]", target[0], target[1]);

    if let Some(path) = std::env::args().nth(1) {
        batch.write_csv_to(std::fs::File::create(&path)?)?;
        println!("wrote {path}");
    }
    Ok(())
}
