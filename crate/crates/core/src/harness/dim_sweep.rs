use rand::Rng;
use rayon::prelude::*;

use super::common::{bridge_probes, cell_seed, field, key, mean_and_se, solve, TAG_PROBES, TAG_REFERENCE, TAG_SOURCE, TAG_TARGET};
use super::config::ExperimentConfig;
use super::datasets::Dataset;
use super::plot::{self, Scale, Series};
use super::table::{run_id, Check, ResultRow, ResultTable, RowFlag, Summary};
use super::ExperimentOutput;
use crate::drift::DriftField;
use crate::error::Result;
use crate::rng;

/// Accepted `error(smallest d_ν) / error(largest d_ν)`.
pub const MAX_RATIO: f64 = 1.0 / 3.0;

/// Integrated `MSE_sample` over `[0, τ]` for `μ = U[0,1]^d` and `ν` uniform
/// on the unit sphere of the first `d_ν` coordinates. No closed form exists,
/// so the error is measured against a drift fitted on an independent,
/// larger sample, with probes drawn from that reference's bridge mixture.
pub fn run_dim_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let d = cfg.dims.d;
    let eps = cfg.epsilon;
    let tau = cfg.grid.tau[0];
    let max_m = cfg.grid.m.iter().copied().max().unwrap_or(1);
    let big = cfg.reference_size.unwrap_or(10 * max_m);
    let source = Dataset::Cube { dim: d };

    let mut table = ResultTable::new(cfg.experiment, run_id(cfg), &["d", "d_nu", "m", "n", "reference", "tau"]);
    for (ci, &dn) in cfg.dims.intrinsic.iter().enumerate() {
        let target = Dataset::SphereSlice { dim: d, intrinsic: dn };
        // The reference is the bottleneck in memory; trials run one at a time.
        let mut per_trial: Vec<(Vec<f64>, bool)> = Vec::with_capacity(cfg.trials);
        for trial in 0..cfg.trials {
            let seed = cell_seed(cfg.seed, ci, trial);
            let rx = source.sample(big, rng::child_seed(seed, TAG_REFERENCE))?;
            let ry = target.sample(big, rng::child_seed(seed, TAG_REFERENCE + 1))?;
            let reference = solve(&rx, &ry, eps, cfg)?;
            let b_ref = field(&ry, &reference.potentials, eps)?;
            let log_k = reference.solver.kernel().log_entries();
            let g = &reference.potentials.g;
            let mut r = rng::stream(rng::child_seed(seed, TAG_PROBES), 0);
            let mut w = vec![0.0; big];
            let probes = bridge_probes(
                |r| {
                    // source marginal is uniform; draw j from the row conditional
                    let i = r.random_range(0..big);
                    let row = log_k.row(i);
                    let mut max = f64::NEG_INFINITY;
                    for (wj, (l, gj)) in w.iter_mut().zip(row.iter().zip(g)) {
                        *wj = l + gj / eps;
                        max = max.max(*wj);
                    }
                    let mut total = 0.0;
                    for wj in w.iter_mut() {
                        *wj = (*wj - max).exp();
                        total += *wj;
                    }
                    let mut u = r.random::<f64>() * total;
                    let mut j = big - 1;
                    for (k, wj) in w.iter().enumerate() {
                        if u < *wj {
                            j = k;
                            break;
                        }
                        u -= wj;
                    }
                    (i, j)
                },
                &rx,
                &ry,
                eps,
                tau,
                cfg.integration.time_samples,
                cfg.integration.probes_per_time,
                &mut r,
            )?;
            drop(reference);
            let at_ref: Vec<Vec<f64>> = probes
                .times
                .par_iter()
                .zip(&probes.probes)
                .map(|(&t, p)| Ok(b_ref.drift_batch(p.points(), t)?.into_raw_vec_and_offset().0))
                .collect::<Result<_>>()?;
            let mut errs = Vec::with_capacity(cfg.grid.m.len());
            let mut converged = true;
            for (mi, &m) in cfg.grid.m.iter().enumerate() {
                let n = cfg.grid.n.get(mi).copied().unwrap_or(m);
                let xs = source.sample(m, rng::child_seed(seed, TAG_SOURCE + mi as u64))?;
                let ys = target.sample(n, rng::child_seed(seed, TAG_TARGET + mi as u64))?;
                let est = solve(&xs, &ys, eps, cfg)?;
                converged &= est.converged;
                let b: DriftField = field(&ys, &est.potentials, eps)?;
                let mut total = 0.0;
                let mut count = 0usize;
                for ((&t, p), refv) in probes.times.iter().zip(&probes.probes).zip(&at_ref) {
                    let v = b.drift_batch(p.points(), t)?;
                    total += v.iter().zip(refv).map(|(a, c)| (a - c) * (a - c)).sum::<f64>();
                    count += p.len();
                }
                errs.push(tau * total / count as f64);
            }
            per_trial.push((errs, converged));
        }
        for (mi, &m) in cfg.grid.m.iter().enumerate() {
            let n = cfg.grid.n.get(mi).copied().unwrap_or(m);
            let vals: Vec<f64> = per_trial.iter().map(|t| t.0[mi]).collect();
            let (value, std_error) = mean_and_se(&vals);
            table.push(ResultRow {
                params: vec![d as f64, dn as f64, m as f64, n as f64, big as f64, tau],
                value,
                std_error,
                trials: cfg.trials,
                flag: if per_trial.iter().all(|t| t.1) { RowFlag::Ok } else { RowFlag::Unconverged },
                seed: cfg.seed,
            });
        }
    }
    let (summary, checks) = summarize(&table, cfg);
    let series: Vec<Series> = cfg
        .grid
        .m
        .iter()
        .map(|&m| Series {
            label: format!("m = n = {m}"),
            points: table.select("m", m as f64).iter().map(|r| (r.params[1], r.value)).collect(),
        })
        .collect();
    let svg = plot::line_chart("Integrated MSE vs intrinsic dimension", "d_nu", "integrated MSE", Scale::Log, &series);
    Ok(ExperimentOutput { config: cfg.clone(), table, summary, checks, files: vec![("sweep.svg".into(), svg.into_bytes())], wall_time_s: 0.0 })
}

/// Strict monotonicity in `d_ν` and the end-to-end ratio, per sample size.
pub fn summarize(table: &ResultTable, cfg: &ExperimentConfig) -> (Summary, Vec<Check>) {
    let mut summary = Summary::default();
    let mut checks = Vec::new();
    for &m in &cfg.grid.m {
        let rows = table.select("m", m as f64);
        let vals: Vec<f64> = rows.iter().map(|r| r.value).collect();
        let increasing = vals.windows(2).all(|w| w[1] > w[0]);
        let ratio = match (vals.first(), vals.last()) {
            (Some(a), Some(b)) if *b > 0.0 => a / b,
            _ => f64::NAN,
        };
        summary.push(key("increasing", "m", m), increasing as u8 as f64);
        summary.push(key("ratio", "m", m), ratio);
        checks.push(Check::new(key("increasing", "m", m), increasing, format!("values {vals:.4?}")));
        checks.push(Check::new(
            key("ratio", "m", m),
            ratio < MAX_RATIO,
            format!("first/last = {ratio:.4}, required < {MAX_RATIO:.4}"),
        ));
    }
    (summary, checks)
}
