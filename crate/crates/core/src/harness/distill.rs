use super::common::{solve, TAG_PROBES, TAG_SOURCE, TAG_TARGET};
use super::config::ExperimentConfig;
use super::plot;
use super::table::{run_id, Check, ResultRow, ResultTable, RowFlag, Summary};
use super::ExperimentOutput;
use crate::drift::{Drift, DriftField};
use crate::error::Result;
use crate::neural::{train, write_loss_curve_to, MlpModel, PairSampler, TrainConfig};
use crate::rng;
use crate::sde::{simulate_from, SdeConfig};

/// Accepted `drift MSE / mean squared drift` of the trained network.
pub const MAX_RELATIVE_MSE: f64 = 0.1;

const TAG_MODEL: u64 = 0x3D;
const TAG_TRAIN: u64 = 0x7E;
const TAG_SDE: u64 = 0x5D;

/// Trains an MLP on bridge regression pairs from the converged coupling and
/// compares it with the Sinkhorn drift on fresh probes from the training
/// distribution.
pub fn run_distill(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let eps = cfg.epsilon;
    let tau = cfg.grid.tau[0];
    let data = &cfg.data;
    let xs = data.source.sample(data.m, rng::child_seed(cfg.seed, TAG_SOURCE))?;
    let ys = data.target.sample(data.n, rng::child_seed(cfg.seed, TAG_TARGET))?;
    let solved = solve(&xs, &ys, eps, cfg)?;
    let field = DriftField::new(ys.clone(), solved.potentials.g.clone(), eps)?;
    let mass = solved.solver.coupling_mass(&solved.potentials);
    let sampler = PairSampler::new(mass.view(), &xs, &ys, eps)?;

    let t = &cfg.train;
    let train_cfg = TrainConfig::new(t.steps, tau, rng::child_seed(cfg.seed, TAG_TRAIN))?
        .with_batch_size(t.batch_size)?
        .with_lr(t.lr)?
        .with_weight_decay(t.weight_decay)?;
    let model = MlpModel::for_drift(xs.dim(), &t.hidden, rng::child_seed(cfg.seed, TAG_MODEL))?;
    let outcome = train(&sampler, model, &train_cfg)?;

    let mut r = rng::stream(rng::child_seed(cfg.seed, TAG_PROBES), 0);
    let probes = sampler.sample(cfg.mc_points, tau, &mut r);
    let predicted = outcome.model.forward(&probes.inputs)?;
    let d = xs.dim();
    let (mut gap, mut magnitude) = (0.0, 0.0);
    let mut b = vec![0.0; d];
    for (inp, out) in probes.inputs.outer_iter().zip(predicted.outer_iter()) {
        let z: Vec<f64> = inp.iter().take(d).copied().collect();
        field.drift_into(&z, inp[d], &mut b)?;
        gap += b.iter().zip(out.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        magnitude += b.iter().map(|x| x * x).sum::<f64>();
    }
    let count = probes.len() as f64;
    let (mse, mean_sq) = (gap / count, magnitude / count);
    let ratio = mse / mean_sq;

    let mut table = ResultTable::new(cfg.experiment, run_id(cfg), &["m", "n", "tau", "steps", "metric"]);
    let base = [data.m as f64, data.n as f64, tau, t.steps as f64];
    for (i, v) in [mse, mean_sq, ratio].into_iter().enumerate() {
        let mut params = base.to_vec();
        params.push(i as f64);
        table.push(ResultRow {
            params,
            value: v,
            std_error: 0.0,
            trials: 1,
            flag: if solved.converged { RowFlag::Ok } else { RowFlag::Unconverged },
            seed: cfg.seed,
        });
    }
    let mut summary = Summary::default();
    summary.push("drift_mse", mse);
    summary.push("mean_squared_drift", mean_sq);
    summary.push("relative_mse", ratio);
    summary.push("final_loss", outcome.losses.last().copied().unwrap_or(f64::NAN));
    summary.push("sinkhorn_iterations", solved.potentials.iteration as f64);
    summary.push("sinkhorn_converged", if solved.converged { 1.0 } else { 0.0 });
    let checks = vec![Check::new(
        "relative-mse",
        ratio <= MAX_RELATIVE_MSE,
        format!("drift MSE {mse:.4} is {:.2}% of mean squared drift {mean_sq:.4}", 100.0 * ratio),
    )];

    let sde = SdeConfig::new(tau, cfg.simulate.steps, eps, rng::child_seed(cfg.seed, TAG_SDE))?
        .with_record_stride(cfg.simulate.record_stride)?;
    let net_paths = simulate_from(&outcome.model, &xs, &sde)?;
    let field_paths = simulate_from(&field, &xs, &sde)?;
    let end = |b: &crate::sde::TrajectoryBatch| -> Result<Vec<(f64, f64)>> {
        let c = b.marginal_at(tau)?;
        Ok(c.points().outer_iter().map(|p| (p[0], p.get(1).copied().unwrap_or(0.0))).collect())
    };
    let pts = |c: &crate::cloud::PointCloud| c.points().outer_iter().map(|p| (p[0], p.get(1).copied().unwrap_or(0.0))).collect();
    let svg = plot::scatter(
        &format!("Endpoints at t = {tau}"),
        &[
            ("source".into(), pts(&xs)),
            ("target".into(), pts(&ys)),
            ("Sinkhorn drift".into(), end(&field_paths)?),
            ("network drift".into(), end(&net_paths)?),
        ],
    );

    let mut loss = Vec::new();
    write_loss_curve_to(&mut loss, &outcome.losses)?;
    let mut traj = Vec::new();
    net_paths.write_csv_to(&mut traj)?;
    let files = vec![
        ("loss.csv".into(), loss),
        ("model.sbnn".into(), outcome.model.to_bytes()),
        ("trajectories.csv".into(), traj),
        ("endpoints.svg".into(), svg.into_bytes()),
    ];
    Ok(ExperimentOutput { config: cfg.clone(), table, summary, checks, files, wall_time_s: 0.0 })
}
