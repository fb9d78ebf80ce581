use super::common::{key, mean_and_se, TAG_SOURCE, TAG_TARGET};
use super::config::ExperimentConfig;
use super::plot;
use super::table::{run_id, ResultRow, ResultTable, RowFlag, Summary};
use super::ExperimentOutput;
use crate::drift::DriftField;
use crate::eot::{EotProblem, Scheme, SinkhornSolver, StoppingRule};
use crate::error::Result;
use crate::rng;
use crate::sde::{simulate, simulate_from, SdeConfig};

const TAG_SDE: u64 = 0x5D;

/// Simulates the Sinkhorn bridge between two configured datasets. With
/// `simulate.iterations` set, the drift uses that Sinkhorn iterate instead
/// of the converged potentials. Rows give the per-coordinate mean at each
/// recorded time.
pub fn run_simulate(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let eps = cfg.epsilon;
    let tau = cfg.grid.tau[0];
    let data = &cfg.data;
    let xs = data.source.sample(data.m, rng::child_seed(cfg.seed, TAG_SOURCE))?;
    let ys = data.target.sample(data.n, rng::child_seed(cfg.seed, TAG_TARGET))?;
    let problem = EotProblem::new(xs.clone(), ys.clone(), eps)?;
    let solver = SinkhornSolver::new(&problem).with_scheme(Scheme::Absorbed);
    let stop = match cfg.simulate.iterations {
        Some(k) => StoppingRule::Iterations(k),
        None => StoppingRule::MarginalTolerance { tol: cfg.sinkhorn.tol, max_iter: cfg.sinkhorn.max_iter },
    };
    let run = solver.run(stop)?;
    let converged = cfg.simulate.iterations.is_some() || run.potentials.converged;
    let field = DriftField::new(ys.clone(), run.potentials.g.clone(), eps)?;

    let sde = SdeConfig::new(tau, cfg.simulate.steps, eps, rng::child_seed(cfg.seed, TAG_SDE))?
        .with_record_stride(cfg.simulate.record_stride)?;
    let batch = if cfg.simulate.paths == 0 {
        simulate_from(&field, &xs, &sde)?
    } else {
        simulate(&field, &xs, &sde, cfg.simulate.paths)?
    };

    let d = xs.dim();
    let mut table = ResultTable::new(cfg.experiment, run_id(cfg), &["step", "t", "coordinate"]);
    for (r, (&step, &t)) in batch.steps.iter().zip(&batch.times).enumerate() {
        for k in 0..d {
            let vals: Vec<f64> = (0..batch.n_paths()).map(|p| batch.states[[p, r, k]]).collect();
            let (value, std_error) = mean_and_se(&vals);
            table.push(ResultRow {
                params: vec![step as f64, t, (k + 1) as f64],
                value,
                std_error,
                trials: batch.n_paths(),
                flag: if converged { RowFlag::Ok } else { RowFlag::Unconverged },
                seed: cfg.seed,
            });
        }
    }
    let mut summary = Summary::default();
    summary.push("sinkhorn_iterations", run.potentials.iteration as f64);
    summary.push("final_marginal_error", run.final_marginal_error());
    summary.push("paths", batch.n_paths() as f64);
    let end = batch.marginal_at(batch.tau())?;
    let target_mean = ys.mean();
    for (k, (a, b)) in end.mean().iter().zip(&target_mean).enumerate() {
        summary.push(key("endpoint_mean_gap", "coordinate", k + 1), a - b);
    }

    let mut traj = Vec::new();
    batch.write_csv_to(&mut traj)?;
    let mut field_csv = Vec::new();
    field.write_csv_to(&mut field_csv)?;
    let mut files = vec![
        ("trajectories.csv".to_string(), traj),
        ("trajectories.bin".to_string(), batch.encode_binary()),
        ("field.csv".to_string(), field_csv),
    ];
    if d >= 2 {
        let pts = |c: &crate::cloud::PointCloud| c.points().outer_iter().map(|p| (p[0], p[1])).collect();
        let svg = plot::scatter(
            &format!("Simulated endpoints at t = {}", batch.tau()),
            &[("source".into(), pts(&xs)), ("target".into(), pts(&ys)), ("endpoints".into(), pts(&end))],
        );
        files.push(("endpoints.svg".to_string(), svg.into_bytes()));
    }
    Ok(ExperimentOutput { config: cfg.clone(), table, summary, checks: Vec::new(), files, wall_time_s: 0.0 })
}
