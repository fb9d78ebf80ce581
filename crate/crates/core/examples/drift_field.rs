//! The Sinkhorn-bridge drift and its Markovian-projection interpretation:
//! evaluate the closed-form field and compare it with a Monte-Carlo
//! estimate drawn from the bridge mixture.
//!
//!     cargo run --release --example drift_field

use sinkbridge::drift::markovian_projection_oracle;
use sinkbridge::harness::datasets::{eight_gaussians, moons};
use sinkbridge::{rng, DriftField, EotProblem, SinkhornSolver, StoppingRule};

fn main() -> sinkbridge::Result<()> {
    let eps = 0.5;
    let x = eight_gaussians(8, 2.0, 0.05, 3)?;
    let y = moons(10, 0.1, 4)?;
    let problem = EotProblem::new(x.clone(), y.clone(), eps)?;
    let solver = SinkhornSolver::new(&problem);
    let p = solver.run(StoppingRule::MarginalTolerance { tol: 1e-12, max_iter: 100_000 })?.potentials;

    let field = DriftField::new(y.clone(), p.g.clone(), eps)?;
    let mass = solver.coupling_mass(&p);
    let mut r = rng::stream(7, 0);
    for (z, t) in [([0.0, 0.0], 0.3), ([1.0, -0.5], 0.6), ([-0.5, 0.5], 0.5)] {
        let exact = field.drift_eval(&z, t)?;
        let mc = markovian_projection_oracle(&mass, &x, &y, eps, &z, t, 20_000, &mut r)?;
        println!(
            "b({z:?}, {t}) = [{:.4}, {:.4}]   Monte Carlo [{:.4} ± {:.4}, {:.4} ± {:.4}]",
            exact[0], exact[1], mc.estimate[0], mc.std_error[0], mc.estimate[1], mc.std_error[1]
        );
    }

    // weights are a softmax over targets, so a constant shift of g is invisible
    let shifted = DriftField::new(y, p.g.iter().map(|g| g + 3.0).collect(), eps)?;
    let (a, b) = (shifted.drift_eval(&[0.0, 0.0], 0.3)?, field.drift_eval(&[0.0, 0.0], 0.3)?);
    println!("g + 3: max |Δb| = {:.1e}", a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max));
    Ok(())
}
