use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::config::ExperimentConfig;
use crate::cloud::PointCloud;
use crate::drift::DriftField;
use crate::eot::{DualPotentials, EotProblem, Scheme, SinkhornSolver, StoppingRule};
use crate::error::{Error, Result};
use crate::gaussian::{random_spd, GaussianPair};
use crate::rng::{self, Stream};

pub(crate) const TAG_COVARIANCE: u64 = 0xC0;
pub(crate) const TAG_SOURCE: u64 = 0x50;
pub(crate) const TAG_TARGET: u64 = 0x7A;
pub(crate) const TAG_PROBES: u64 = 0x9B;
pub(crate) const TAG_TIMES: u64 = 0x71;
pub(crate) const TAG_REFERENCE: u64 = 0xEF;

/// Seed for `(cell, trial)` under the master seed.
pub(crate) fn cell_seed(seed: u64, cell: usize, trial: usize) -> u64 {
    rng::child_seed(rng::child_seed(seed, cell as u64), trial as u64)
}

/// `μ = N(0, I_d)`, `ν = N(0, B)` with `B` drawn once from the master seed.
pub fn gaussian_setup(cfg: &ExperimentConfig, epsilon: f64) -> Result<GaussianPair> {
    let d = cfg.dims.d;
    let b = random_spd(d, cfg.gaussian.cov_min, cfg.gaussian.cov_max, rng::child_seed(cfg.seed, TAG_COVARIANCE));
    GaussianPair::new(DVector::zeros(d), DMatrix::identity(d, d), DVector::zeros(d), b, epsilon)
}

pub(crate) struct Solved {
    pub solver: SinkhornSolver,
    pub potentials: DualPotentials,
    pub converged: bool,
}

/// Sinkhorn from zero potentials to the configured tolerance.
pub(crate) fn solve(source: &PointCloud, target: &PointCloud, epsilon: f64, cfg: &ExperimentConfig) -> Result<Solved> {
    let problem = EotProblem::new(source.clone(), target.clone(), epsilon)?;
    let solver = SinkhornSolver::new(&problem).with_scheme(Scheme::Absorbed);
    let run = solver.run(StoppingRule::MarginalTolerance { tol: cfg.sinkhorn.tol, max_iter: cfg.sinkhorn.max_iter })?;
    let converged = run.potentials.converged;
    Ok(Solved { solver, potentials: run.potentials, converged })
}

pub(crate) fn field(target: &PointCloud, potentials: &DualPotentials, epsilon: f64) -> Result<DriftField> {
    DriftField::new(target.clone(), potentials.g.clone(), epsilon)
}

/// Mean and standard error of the mean (0 for a single value).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Draws `(z, t)` probes from the bridge mixture of a coupling: one
/// `U[0, τ]` time per group, `per_time` bridge points per time.
pub(crate) struct MixtureProbes {
    pub times: Vec<f64>,
    /// `probes[i]` holds the points for `times[i]`.
    pub probes: Vec<PointCloud>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn mixture_probes(
    mass: &ndarray::Array2<f64>,
    source: &PointCloud,
    target: &PointCloud,
    epsilon: f64,
    tau: f64,
    times: usize,
    per_time: usize,
    rng: &mut Stream,
) -> Result<MixtureProbes> {
    let n = target.len();
    let cells = WeightedIndex::new(mass.iter().copied()).map_err(|e| Error::Numeric(format!("coupling: {e}")))?;
    bridge_probes(|r| {
        let c = cells.sample(r);
        (c / n, c % n)
    }, source, target, epsilon, tau, times, per_time, rng)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn bridge_probes(
    mut pair: impl FnMut(&mut Stream) -> (usize, usize),
    source: &PointCloud,
    target: &PointCloud,
    epsilon: f64,
    tau: f64,
    times: usize,
    per_time: usize,
    rng: &mut Stream,
) -> Result<MixtureProbes> {
    let d = source.dim();
    let mut out_t = Vec::with_capacity(times);
    let mut out_p = Vec::with_capacity(times);
    let mut noise = vec![0.0; d];
    for _ in 0..times {
        let t: f64 = rng.random::<f64>() * tau;
        let sd = (epsilon * t * (1.0 - t)).sqrt();
        let mut pts = ndarray::Array2::zeros((per_time, d));
        for mut row in pts.outer_iter_mut() {
            let (i, j) = pair(rng);
            rng::fill_standard_normal(rng, &mut noise);
            let (x0, x1) = (source.point(i), target.point(j));
            for k in 0..d {
                row[k] = (1.0 - t) * x0[k] + t * x1[k] + sd * noise[k];
            }
        }
        out_t.push(t);
        out_p.push(PointCloud::new(pts)?);
    }
    Ok(MixtureProbes { times: out_t, probes: out_p })
}

/// Format helper for summary keys.
pub(crate) fn key(name: &str, param: &str, value: impl std::fmt::Display) -> String {
    format!("{name}[{param}={value}]")
}
