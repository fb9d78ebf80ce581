use rayon::prelude::*;

use super::common::{cell_seed, field, gaussian_setup, key, solve, TAG_PROBES, TAG_SOURCE, TAG_TARGET};
use super::config::ExperimentConfig;
use super::plot::{self, Scale, Series};
use super::table::{run_id, Check, ResultRow, ResultTable, RowFlag, Summary};
use super::ExperimentOutput;
use crate::error::Result;
use crate::gaussian::{AffineDrift, Side};
use crate::rng;
use crate::sde::drift_mse;

/// Result of a one-dimensional search over `log₁₀ ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchResult {
    pub log10_epsilon: f64,
    pub attained: bool,
    /// Objective evaluations spent.
    pub evaluations: usize,
}

/// Smallest `log₁₀ ε` in `[lo, hi]` with `error(ε) ≤ δ`, assuming the error
/// is non-increasing in `ε`. Returns `hi` flagged unattained if even the
/// largest ε misses the target.
pub fn bisect_log_epsilon(
    lo: f64,
    hi: f64,
    steps: usize,
    delta: f64,
    mut error: impl FnMut(f64) -> Result<f64>,
) -> Result<SearchResult> {
    if error(10f64.powf(lo))? <= delta {
        return Ok(SearchResult { log10_epsilon: lo, attained: true, evaluations: 1 });
    }
    if error(10f64.powf(hi))? > delta {
        return Ok(SearchResult { log10_epsilon: hi, attained: false, evaluations: 2 });
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..steps {
        let mid = 0.5 * (a + b);
        if error(10f64.powf(mid))? <= delta {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(SearchResult { log10_epsilon: b, attained: true, evaluations: steps + 2 })
}

/// Smallest grid point of a `points`-point log grid on `[lo, hi]` meeting
/// the target.
pub fn scan_log_epsilon(
    lo: f64,
    hi: f64,
    points: usize,
    delta: f64,
    mut error: impl FnMut(f64) -> Result<f64>,
) -> Result<SearchResult> {
    let points = points.max(2);
    let step = (hi - lo) / (points - 1) as f64;
    for i in 0..points {
        let x = lo + i as f64 * step;
        if error(10f64.powf(x))? <= delta {
            return Ok(SearchResult { log10_epsilon: x, attained: true, evaluations: i + 1 });
        }
    }
    Ok(SearchResult { log10_epsilon: hi, attained: false, evaluations: points })
}

/// Trial-averaged `MSE_sample` at the configured times, as a function of ε.
/// Samples and probe seeds are fixed across ε (common random numbers).
fn error_at(cfg: &ExperimentConfig, cell: usize, m: usize, n: usize, epsilon: f64) -> Result<f64> {
    let pair = gaussian_setup(cfg, epsilon)?;
    let per_trial = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = cell_seed(cfg.seed, cell, trial);
            let xs = pair.sample(Side::Source, m, rng::child_seed(seed, TAG_SOURCE))?;
            let ys = pair.sample(Side::Target, n, rng::child_seed(seed, TAG_TARGET))?;
            let solved = solve(&xs, &ys, epsilon, cfg)?;
            let b = field(&ys, &solved.potentials, epsilon)?;
            let mut total = 0.0;
            for (ti, &t) in cfg.grid.t.iter().enumerate() {
                let probes = pair.sample_marginal(t, cfg.mc_points, rng::child_seed(seed, TAG_PROBES + ti as u64))?;
                total += drift_mse(&b, &AffineDrift::at(&pair, t)?, &probes, t)?;
            }
            Ok(total / cfg.grid.t.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_trial.iter().sum::<f64>() / per_trial.len() as f64)
}

/// For each sample size, the smallest ε whose error meets `search.delta`.
/// Rows report `log₁₀ ε`; unattained rows carry the upper end of the range.
pub fn run_eps_search(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let s = &cfg.search;
    let mut params = vec!["m", "n", "min_mn", "delta"];
    if s.scan_points > 0 {
        params.push("scan_log10_epsilon");
    }
    let mut table = ResultTable::new(cfg.experiment, run_id(cfg), &params);
    for (ci, &m) in cfg.grid.m.iter().enumerate() {
        let n = cfg.grid.n.get(ci).copied().unwrap_or(m);
        let found = bisect_log_epsilon(s.log10_min, s.log10_max, s.steps, s.delta, |e| error_at(cfg, ci, m, n, e))?;
        let mut p = vec![m as f64, n as f64, m.min(n) as f64, s.delta];
        if s.scan_points > 0 {
            let scan = scan_log_epsilon(s.log10_min, s.log10_max, s.scan_points, s.delta, |e| error_at(cfg, ci, m, n, e))?;
            p.push(scan.log10_epsilon);
        }
        table.push(ResultRow {
            params: p,
            value: found.log10_epsilon,
            std_error: 0.0,
            trials: cfg.trials,
            flag: if found.attained { RowFlag::Ok } else { RowFlag::Unattained },
            seed: cfg.seed,
        });
    }
    let (summary, checks) = summarize(&table, cfg);
    let series = vec![Series {
        label: format!("delta = {}", s.delta),
        points: table.rows.iter().map(|r| (r.params[2], 10f64.powf(r.value))).collect(),
    }];
    let svg = plot::line_chart("Smallest epsilon meeting the target error", "min(m, n)", "epsilon", Scale::Log, &series);
    Ok(ExperimentOutput { config: cfg.clone(), table, summary, checks, files: vec![("epsilon.svg".into(), svg.into_bytes())], wall_time_s: 0.0 })
}

/// Monotonicity (one inversion allowed), a steep-then-mild profile (the
/// drop in `log₁₀ ε` over the first half of the grid exceeds the drop over
/// the second half), and agreement with the scan when present.
pub fn summarize(table: &ResultTable, cfg: &ExperimentConfig) -> (Summary, Vec<Check>) {
    let mut summary = Summary::default();
    let mut checks = Vec::new();
    let e: Vec<f64> = table.rows.iter().map(|r| r.value).collect();
    let inversions = e.windows(2).filter(|w| w[1] > w[0]).count();
    summary.push("inversions", inversions as f64);
    checks.push(Check::new("non-increasing", inversions <= 1, format!("{inversions} inversions in {e:?}")));
    if e.len() >= 3 {
        let mid = e.len() / 2;
        let first = e[0] - e[mid];
        let second = e[mid] - e[e.len() - 1];
        summary.push("drop_first_half", first);
        summary.push("drop_second_half", second);
        checks.push(Check::new(
            "two-phase",
            first > second && first > 0.0,
            format!("log10 drop {first:.3} over the first half, {second:.3} over the second"),
        ));
    }
    let s = &cfg.search;
    if s.scan_points > 0 {
        let step = (s.log10_max - s.log10_min) / (s.scan_points.max(2) - 1) as f64;
        let scan_col = table.param_index("scan_log10_epsilon").expect("scan column");
        let agree = table.rows.iter().filter(|r| (r.value - r.params[scan_col]).abs() <= step + 1e-12).count();
        for r in &table.rows {
            summary.push(key("scan_gap", "m", r.params[0]), r.value - r.params[scan_col]);
        }
        checks.push(Check::new(
            "scan-agreement",
            agree == table.rows.len(),
            format!("{agree} of {} rows within one scan step ({step:.3})", table.rows.len()),
        ));
    }
    (summary, checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_target_returns_lower_end() {
        let r = bisect_log_epsilon(-4.0, 9.0, 16, f64::INFINITY, |e| Ok(1.0 / e)).unwrap();
        assert_eq!(r.log10_epsilon, -4.0);
        assert!(r.attained);
    }

    #[test]
    fn bisection_matches_scan_on_monotone_error() {
        // error(ε) = 10 / ε crosses 1 at log₁₀ ε = 1
        let err = |e: f64| Ok(10.0 / e);
        let b = bisect_log_epsilon(-4.0, 9.0, 16, 1.0, err).unwrap();
        assert!((b.log10_epsilon - 1.0).abs() < 13.0 / 65536.0 + 1e-12);
        let s = scan_log_epsilon(-4.0, 9.0, 16, 1.0, err).unwrap();
        assert!((b.log10_epsilon - s.log10_epsilon).abs() <= 13.0 / 15.0);
    }

    #[test]
    fn unattainable_is_flagged() {
        let r = bisect_log_epsilon(-1.0, 1.0, 8, 0.5, |_| Ok(1.0)).unwrap();
        assert!(!r.attained);
        assert_eq!(r.log10_epsilon, 1.0);
    }
}
