use rayon::prelude::*;

use super::common::{cell_seed, field, gaussian_setup, key, mean_and_se, solve, TAG_PROBES, TAG_SOURCE, TAG_TARGET};
use super::config::ExperimentConfig;
use super::fit::loglog_fit;
use super::plot;
use super::table::{run_id, Check, ResultRow, ResultTable, RowFlag, Summary};
use super::ExperimentOutput;
use crate::error::Result;
use crate::gaussian::{AffineDrift, Side};
use crate::rng;
use crate::sde::drift_mse;

/// Accepted range for the fitted exponent of `1/m + 1/n`.
pub const SLOPE_RANGE: (f64, f64) = (0.7, 1.3);
/// Marginal error above which a trial's drift is not trusted. Instances in
/// Sinkhorn's slow tail stall well below this after `max_iter` iterations.
pub const USABLE_MARGINAL_ERROR: f64 = 1e-6;

/// `MSE_sample(m, n, t)` against the closed-form Gaussian drift, averaged
/// over trials. Trial `r` draws one source and one target sample of the
/// largest grid size and uses prefixes, and probes for `(t, r)` are shared
/// across cells, so neighbouring cells use common random numbers.
pub fn run_mse_sample(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let pair = gaussian_setup(cfg, cfg.epsilon)?;
    let cells = cfg.grid.cells();
    let max_m = cells.iter().map(|c| c.0).max().unwrap_or(0);
    let max_n = cells.iter().map(|c| c.1).max().unwrap_or(0);
    let ts = &cfg.grid.t;

    let mut drifts = Vec::with_capacity(ts.len());
    let mut probes = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let row = ts
            .iter()
            .enumerate()
            .map(|(ti, &t)| pair.sample_marginal(t, cfg.mc_points, rng::child_seed(cell_seed(cfg.seed, ti, trial), TAG_PROBES)))
            .collect::<Result<Vec<_>>>()?;
        probes.push(row);
    }
    for &t in ts {
        drifts.push(AffineDrift::at(&pair, t)?);
    }

    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..cfg.trials).map(move |r| (c, r))).collect();
    let results: Vec<(Vec<f64>, f64)> = jobs
        .par_iter()
        .map(|&(c, trial)| {
            let (m, n) = cells[c];
            let xs = pair.sample(Side::Source, max_m, rng::child_seed(cell_seed(cfg.seed, 0, trial), TAG_SOURCE))?;
            let ys = pair.sample(Side::Target, max_n, rng::child_seed(cell_seed(cfg.seed, 0, trial), TAG_TARGET))?;
            let xs = xs.select(&(0..m).collect::<Vec<_>>())?;
            let ys = ys.select(&(0..n).collect::<Vec<_>>())?;
            let solved = solve(&xs, &ys, cfg.epsilon, cfg)?;
            let b = field(&ys, &solved.potentials, cfg.epsilon)?;
            let errs = ts
                .iter()
                .enumerate()
                .map(|(ti, &t)| drift_mse(&b, &drifts[ti], &probes[trial][ti], t))
                .collect::<Result<Vec<f64>>>()?;
            Ok((errs, solved.solver.marginal_error(&solved.potentials)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = ResultTable::new(cfg.experiment, run_id(cfg), &["m", "n", "t"]);
    for (c, &(m, n)) in cells.iter().enumerate() {
        let per_trial = &results[c * cfg.trials..(c + 1) * cfg.trials];
        let worst = per_trial.iter().map(|r| r.1).fold(0.0, f64::max);
        let flag = if worst <= USABLE_MARGINAL_ERROR { RowFlag::Ok } else { RowFlag::Unconverged };
        for (ti, &t) in ts.iter().enumerate() {
            let vals: Vec<f64> = per_trial.iter().map(|r| r.0[ti]).collect();
            let (value, std_error) = mean_and_se(&vals);
            table.push(ResultRow {
                params: vec![m as f64, n as f64, t],
                value,
                std_error,
                trials: cfg.trials,
                flag,
                seed: cfg.seed,
            });
        }
    }
    let (mut summary, checks) = summarize(&table, ts);
    summary.push("max_marginal_error", results.iter().map(|r| r.1).fold(0.0, f64::max));
    let plots = heatmaps(&table, cfg);
    Ok(ExperimentOutput { config: cfg.clone(), table, summary, checks, files: plots, wall_time_s: 0.0 })
}

/// Diagonal `(m = n)` rows for time `t` in grid order.
fn diagonal(table: &ResultTable, t: f64) -> Vec<&ResultRow> {
    table.rows.iter().filter(|r| r.params[2] == t && r.params[0] == r.params[1]).collect()
}

/// Fits `log MSE ≈ α + β log(1/m + 1/n)` on converged diagonal rows.
pub fn summarize(table: &ResultTable, ts: &[f64]) -> (Summary, Vec<Check>) {
    let mut summary = Summary::default();
    let mut checks = Vec::new();
    for &t in ts {
        let rows: Vec<&ResultRow> = diagonal(table, t).into_iter().filter(|r| r.flag == RowFlag::Ok).collect();
        let x: Vec<f64> = rows.iter().map(|r| 1.0 / r.params[0] + 1.0 / r.params[1]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.value).collect();
        let fit = loglog_fit(&x, &y);
        let beta = fit.map_or(f64::NAN, |f| f.slope);
        summary.push(key("beta", "t", t), beta);
        summary.push(key("alpha", "t", t), fit.map_or(f64::NAN, |f| f.intercept));
        summary.push(key("r2", "t", t), fit.map_or(f64::NAN, |f| f.r2));
        let steps = y.len().saturating_sub(1);
        let decreasing = y.windows(2).filter(|w| w[1] < w[0]).count();
        summary.push(key("decreasing_steps", "t", t), decreasing as f64);
        checks.push(Check::new(
            key("slope", "t", t),
            beta >= SLOPE_RANGE.0 && beta <= SLOPE_RANGE.1,
            format!("beta = {beta:.4}, accepted [{}, {}]", SLOPE_RANGE.0, SLOPE_RANGE.1),
        ));
        checks.push(Check::new(
            key("monotone", "t", t),
            steps > 0 && decreasing + 1 >= steps,
            format!("{decreasing} of {steps} diagonal steps decrease"),
        ));
    }
    if let (Some(&t_lo), Some(&t_hi)) = (
        ts.iter().min_by(|a, b| a.total_cmp(b)),
        ts.iter().max_by(|a, b| a.total_cmp(b)),
    ) {
        if t_lo < t_hi {
            let lo = table.select("t", t_lo);
            let hi = table.select("t", t_hi);
            let ordered = lo.iter().zip(&hi).filter(|(a, b)| a.value.is_finite() && a.value < b.value).count();
            checks.push(Check::new(
                "t-ordering",
                ordered == lo.len(),
                format!("MSE at t={t_lo} below t={t_hi} in {ordered} of {} cells", lo.len()),
            ));
        }
    }
    (summary, checks)
}

fn heatmaps(table: &ResultTable, cfg: &ExperimentConfig) -> Vec<(String, Vec<u8>)> {
    let rows: Vec<String> = cfg.grid.m.iter().map(|m| m.to_string()).collect();
    let cols: Vec<String> = cfg.grid.n.iter().map(|n| n.to_string()).collect();
    cfg.grid
        .t
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let cells: Vec<Vec<Option<f64>>> = cfg
                .grid
                .m
                .iter()
                .map(|&m| {
                    cfg.grid
                        .n
                        .iter()
                        .map(|&n| {
                            table
                                .rows
                                .iter()
                                .find(|r| r.params == [m as f64, n as f64, t])
                                .map(|r| r.value)
                        })
                        .collect()
                })
                .collect();
            let svg = plot::heatmap(&format!("MSE_sample, t = {t} (rows m, columns n)"), &rows, &cols, &cells);
            (format!("heatmap_t{ti}.svg"), svg.into_bytes())
        })
        .collect()
}
