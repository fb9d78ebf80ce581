//! Distill a drift field into a small MLP by regression onto bridge
//! displacement targets, then compare the two drifts.
//!
//!     cargo run --release --example distill

use sinkbridge::eot::Scheme;
use sinkbridge::harness::datasets::{eight_gaussians, moons};
use sinkbridge::neural::{train, MlpModel, PairSampler, TrainConfig};
use sinkbridge::{rng, Drift, DriftField, EotProblem, SinkhornSolver, StoppingRule};

fn main() -> sinkbridge::Result<()> {
    let eps = 0.1;
    let x = eight_gaussians(400, 5.0, 0.1, 1)?;
    let y = moons(400, 0.2, 2)?;
    let problem = EotProblem::new(x.clone(), y.clone(), eps)?;
    let solver = SinkhornSolver::new(&problem).with_scheme(Scheme::Absorbed);
    let p = solver.run(StoppingRule::MarginalTolerance { tol: 1e-9, max_iter: 50_000 })?.potentials;
    let mass = solver.coupling_mass(&p);
    let field = DriftField::new(y.clone(), p.g.clone(), eps)?;

    let sampler = PairSampler::new(mass.view(), &x, &y, eps)?;
    let cfg = TrainConfig::new(600, 0.9, 5)?.with_batch_size(1024)?;
    let model = MlpModel::for_drift(2, &[64, 64, 64], 5)?;
    let out = train(&sampler, model, &cfg)?;
    for (step, loss) in out.losses.iter().enumerate().step_by(100) {
        println!("step {step:>4}  loss {loss:.4}");
    }

    // compare on fresh (z, t) pairs from the training distribution
    let batch = sampler.sample(4000, cfg.tau, &mut rng::stream(9, 0));
    let (mut err, mut size) = (0.0, 0.0);
    for row in batch.inputs.rows() {
        let (z, t) = (&row.as_slice().unwrap()[..2], row[2]);
        let (a, b) = (out.model.drift(z, t)?, field.drift(z, t)?);
        err += a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
        size += b.iter().map(|v| v * v).sum::<f64>();
    }
    println!("relative drift MSE of the net: {:.2}%", 100.0 * err / size);
    Ok(())
}
