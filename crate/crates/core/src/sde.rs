//! Euler–Maruyama simulation of `dX_t = b(X_t, t) dt + √ε dB_t` on `[0, τ]`.
//!
//! Each path owns a random stream keyed by `(seed, path index)`, so a batch
//! is bitwise reproducible for any degree of parallelism.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use rand::Rng;
use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::drift::Drift;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const TRAJECTORY_MAGIC: &[u8; 4] = b"SBTR";
const INIT_TAG: u64 = 0x1417;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeConfig {
    pub tau: f64,
    pub steps: usize,
    /// Volatility of the driving noise; `0` gives the drift ODE.
    pub epsilon: f64,
    pub seed: u64,
    /// Keep every `record_stride`-th state (the final state is always kept
    /// when `steps` is a multiple of the stride).
    pub record_stride: usize,
}

impl SdeConfig {
    pub fn new(tau: f64, steps: usize, epsilon: f64, seed: u64) -> Result<Self> {
        let cfg = Self { tau, steps, epsilon, seed, record_stride: 1 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_record_stride(mut self, stride: usize) -> Result<Self> {
        self.record_stride = stride;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Range(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Domain(format!("volatility must be nonnegative, got {}", self.epsilon)));
        }
        if self.record_stride == 0 || self.steps % self.record_stride != 0 {
            return Err(Error::Config(format!(
                "record stride {} must divide the step count {}",
                self.record_stride, self.steps
            )));
        }
        Ok(())
    }

    pub fn step_size(&self) -> f64 {
        self.tau / self.steps as f64
    }
}

/// Sample paths on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub times: Vec<f64>,
    /// Integrator step index of every recorded time.
    pub steps: Vec<usize>,
    /// `(paths, recorded times, d)`.
    pub states: Array3<f64>,
    pub seed: u64,
}

impl TrajectoryBatch {
    pub fn n_paths(&self) -> usize {
        self.states.len_of(Axis(0))
    }

    pub fn dim(&self) -> usize {
        self.states.len_of(Axis(2))
    }

    pub fn tau(&self) -> f64 {
        *self.times.last().expect("at least one time")
    }

    /// Point cloud of all paths at the recorded time nearest to `t`.
    pub fn marginal_at(&self, t: f64) -> Result<PointCloud> {
        if self.n_paths() == 0 {
            return Err(Error::Dimension("empty trajectory batch".into()));
        }
        if !(t >= 0.0 && t <= self.tau() + 1e-12) {
            return Err(Error::Range(format!("t = {t} outside [0, {}]", self.tau())));
        }
        let idx = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .expect("non-empty grid");
        PointCloud::new(self.states.index_axis(Axis(1), idx).to_owned())
    }

    /// Long-format CSV: `path_id,step,t,x_1,…,x_d`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv_to(BufWriter::new(File::create(path)?))
    }

    pub fn write_csv_to<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.dim();
        let header: Vec<String> = ["path_id", "step", "t"]
            .iter()
            .map(|s| s.to_string())
            .chain((1..=d).map(|k| format!("x_{k}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (p, path_states) in self.states.outer_iter().enumerate() {
            for (r, state) in path_states.outer_iter().enumerate() {
                let coords: Vec<String> = state.iter().map(|x| x.to_string()).collect();
                writeln!(out, "{p},{},{},{}", self.steps[r], self.times[r], coords.join(","))?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Binary dump: `b"SBTR"`, `u32` LE path count, `u32` LE dimension,
    /// `u32` LE recorded-time count, then the times as `f64`, then the states
    /// as `f64` with the path index fastest, then time, then coordinate.
    pub fn encode_binary(&self) -> Vec<u8> {
        let (p, r, d) = self.states.dim();
        let mut buf = Vec::with_capacity(16 + 8 * (r + p * r * d));
        buf.extend_from_slice(TRAJECTORY_MAGIC);
        for v in [p as u32, d as u32, r as u32] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for t in &self.times {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        for k in 0..d {
            for s in 0..r {
                for i in 0..p {
                    buf.extend_from_slice(&self.states[[i, s, k]].to_le_bytes());
                }
            }
        }
        buf
    }

    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode_binary())?;
        Ok(())
    }
}

/// Simulates `n_paths` paths whose starting points are drawn with
/// replacement from `init`.
pub fn simulate<D: Drift + ?Sized>(
    field: &D,
    init: &PointCloud,
    cfg: &SdeConfig,
    n_paths: usize,
) -> Result<TrajectoryBatch> {
    let init_seed = rng::child_seed(cfg.seed, INIT_TAG);
    let starts: Vec<usize> = (0..n_paths)
        .map(|p| rng::stream(init_seed, p as u64).random_range(0..init.len()))
        .collect();
    let starts = init.select(&starts)?;
    simulate_from(field, &starts, cfg)
}

/// Simulates one path from every row of `starts`.
pub fn simulate_from<D: Drift + ?Sized>(field: &D, starts: &PointCloud, cfg: &SdeConfig) -> Result<TrajectoryBatch> {
    cfg.validate()?;
    let d = field.dim();
    if starts.dim() != d {
        return Err(Error::Dimension(format!(
            "initial points have dimension {}, drift has dimension {d}",
            starts.dim()
        )));
    }
    if let Some(limit) = field.time_limit() {
        if cfg.tau > limit {
            return Err(Error::Range(format!("tau = {} exceeds the drift's limit {limit}", cfg.tau)));
        }
    }
    let h = cfg.step_size();
    let noise = (cfg.epsilon * h).sqrt();
    let n_rec = cfg.steps / cfg.record_stride + 1;
    let paths: Vec<Vec<f64>> = (0..starts.len())
        .into_par_iter()
        .map(|p| {
            let mut stream: Stream = rng::stream(cfg.seed, p as u64);
            let mut x: Vec<f64> = starts.point(p).to_vec();
            let mut b = vec![0.0; d];
            let mut xi = vec![0.0; d];
            let mut rec = Vec::with_capacity(n_rec * d);
            rec.extend_from_slice(&x);
            for step in 0..cfg.steps {
                let t = step as f64 * h;
                field.drift_into(&x, t, &mut b)?;
                rng::fill_standard_normal(&mut stream, &mut xi);
                for k in 0..d {
                    x[k] += h * b[k] + noise * xi[k];
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Simulation { path: p, step: step + 1 });
                }
                if (step + 1) % cfg.record_stride == 0 {
                    rec.extend_from_slice(&x);
                }
            }
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = paths.into_iter().flatten().collect();
    let states = Array3::from_shape_vec((starts.len(), n_rec, d), flat).map_err(|e| Error::Dimension(e.to_string()))?;
    let steps: Vec<usize> = (0..n_rec).map(|r| r * cfg.record_stride).collect();
    let times = steps.iter().map(|&s| s as f64 * h).collect();
    Ok(TrajectoryBatch { times, steps, states, seed: cfg.seed })
}

/// Mean over probes of `‖b_a(z, t) − b_b(z, t)‖²`.
pub fn drift_mse<A: Drift + ?Sized, B: Drift + ?Sized>(a: &A, b: &B, probes: &PointCloud, t: f64) -> Result<f64> {
    let d = a.dim();
    if b.dim() != d || probes.dim() != d {
        return Err(Error::Dimension("drifts and probes must share a dimension".into()));
    }
    let pts = probes.points().as_standard_layout();
    let total: f64 = pts
        .as_slice()
        .expect("standard layout")
        .par_chunks(d)
        .map(|z| {
            let mut ba = vec![0.0; d];
            let mut bb = vec![0.0; d];
            a.drift_into(z, t, &mut ba)?;
            b.drift_into(z, t, &mut bb)?;
            Ok(ba.iter().zip(&bb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .sum();
    Ok(total / probes.len() as f64)
}

/// Mean over probes of `‖b(z, t)‖²`.
pub fn mean_squared_drift<A: Drift + ?Sized>(a: &A, probes: &PointCloud, t: f64) -> Result<f64> {
    drift_mse(a, &crate::drift::ZeroDrift(a.dim()), probes, t)
}

/// How to integrate a time-dependent quantity over `[0, τ]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeQuadrature {
    /// `τ · mean f(t_i)` with `t_i ~ U[0, τ]`.
    MonteCarlo { samples: usize, seed: u64 },
    /// Composite trapezoid rule on `nodes` equispaced nodes.
    Trapezoid { nodes: usize },
}

impl TimeQuadrature {
    /// Nodes and weights on `[0, τ]`.
    pub fn rule(&self, tau: f64) -> Vec<(f64, f64)> {
        match *self {
            TimeQuadrature::MonteCarlo { samples, seed } => {
                let mut r = rng::stream(seed, 0);
                (0..samples)
                    .map(|_| (r.random::<f64>() * tau, tau / samples as f64))
                    .collect()
            }
            TimeQuadrature::Trapezoid { nodes } => {
                let nodes = nodes.max(2);
                let h = tau / (nodes - 1) as f64;
                (0..nodes)
                    .map(|i| {
                        let w = if i == 0 || i == nodes - 1 { h / 2.0 } else { h };
                        (i as f64 * h, w)
                    })
                    .collect()
            }
        }
    }

    pub fn integrate(&self, tau: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
        let mut total = 0.0;
        for (t, w) in self.rule(tau) {
            total += w * f(t)?;
        }
        Ok(total)
    }
}

/// `∫₀^τ drift_mse(a, b, probes(t), t) dt`.
pub fn integrated_drift_mse<A, B, P>(a: &A, b: &B, tau: f64, quadrature: TimeQuadrature, mut probes: P) -> Result<f64>
where
    A: Drift + ?Sized,
    B: Drift + ?Sized,
    P: FnMut(f64) -> Result<PointCloud>,
{
    quadrature.integrate(tau, |t| drift_mse(a, b, &probes(t)?, t))
}

/// Per-coordinate sample variance of a cloud.
pub fn coordinate_variances(cloud: &PointCloud) -> Vec<f64> {
    let pts: &Array2<f64> = cloud.points();
    let n = pts.nrows() as f64;
    let mean = cloud.mean();
    (0..cloud.dim())
        .map(|k| pts.column(k).iter().map(|x| (x - mean[k]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{DriftField, ZeroDrift};

    fn single_target(y: f64) -> DriftField {
        DriftField::new(PointCloud::from_scalars(&[y]).unwrap(), vec![0.0], 1.0).unwrap()
    }

    #[test]
    fn noiseless_zero_drift_is_constant() {
        let init = PointCloud::from_scalars(&[1.0, -2.0, 3.5]).unwrap();
        let cfg = SdeConfig::new(0.5, 50, 0.0, 1).unwrap();
        let batch = simulate(&ZeroDrift(1), &init, &cfg, 10).unwrap();
        for p in batch.states.outer_iter() {
            assert!(p.iter().all(|x| *x == p[[0, 0]]));
        }
    }

    #[test]
    fn noiseless_single_target_follows_the_segment() {
        let field = single_target(3.0);
        let x0 = 1.0;
        let starts = PointCloud::from_scalars(&[x0]).unwrap();
        let cfg = SdeConfig::new(0.5, 1000, 0.0, 0).unwrap();
        let batch = simulate_from(&field, &starts, &cfg).unwrap();
        let exact = 0.5 * x0 + 0.5 * 3.0;
        let end = batch.states[[0, 1000, 0]];
        assert!((end - exact).abs() <= 2e-3 * (3.0 - x0));
    }

    #[test]
    fn refinement_reduces_endpoint_error() {
        // Euler is exact for a single target, so use a two-target field.
        let field = DriftField::new(PointCloud::from_scalars(&[-2.0, 1.0]).unwrap(), vec![0.0, 0.3], 0.5).unwrap();
        let starts = PointCloud::from_scalars(&[0.4]).unwrap();
        let endpoint = |steps: usize| {
            let cfg = SdeConfig::new(0.9, steps, 0.0, 0).unwrap();
            simulate_from(&field, &starts, &cfg).unwrap().states[[0, steps, 0]]
        };
        let exact = endpoint(20_480);
        let errs: Vec<f64> = [10, 20, 40, 80, 160].iter().map(|&s| (endpoint(s) - exact).abs()).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[4] < errs[0] / 8.0, "{errs:?}");
    }

    #[test]
    fn same_seed_same_batch() {
        let field = DriftField::new(PointCloud::from_scalars(&[-1.0, 1.0]).unwrap(), vec![0.2, 0.0], 0.3).unwrap();
        let init = PointCloud::from_scalars(&[0.0, 0.5]).unwrap();
        let cfg = SdeConfig::new(0.8, 40, 0.3, 11).unwrap();
        let a = simulate(&field, &init, &cfg, 25).unwrap();
        let b = simulate(&field, &init, &cfg, 25).unwrap();
        assert_eq!(a, b);
        let c = simulate(&field, &init, &SdeConfig { seed: 12, ..cfg }, 25).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn marginals_snap_to_grid() {
        let init = PointCloud::from_scalars(&[0.25, 0.75]).unwrap();
        let cfg = SdeConfig::new(0.5, 10, 0.1, 3).unwrap();
        let batch = simulate(&ZeroDrift(1), &init, &cfg, 7).unwrap();
        let m0 = batch.marginal_at(0.0).unwrap();
        assert!(m0.points().iter().all(|x| *x == 0.25 || *x == 0.75));
        assert_eq!(batch.marginal_at(0.26).unwrap(), batch.marginal_at(0.25).unwrap());
        assert!(batch.marginal_at(0.6).is_err());
        let one = simulate(&ZeroDrift(1), &init, &cfg, 1).unwrap();
        assert_eq!(one.marginal_at(0.5).unwrap().len(), 1);
    }

    #[test]
    fn tau_beyond_field_limit_is_refused() {
        let field = single_target(1.0).with_tau_max(0.5).unwrap();
        let init = PointCloud::from_scalars(&[0.0]).unwrap();
        let cfg = SdeConfig::new(0.9, 10, 0.1, 0).unwrap();
        assert!(matches!(simulate(&field, &init, &cfg, 1), Err(Error::Range(_))));
    }

    #[test]
    fn config_validation() {
        assert!(SdeConfig::new(1.0, 10, 0.1, 0).is_err());
        assert!(SdeConfig::new(0.5, 0, 0.1, 0).is_err());
        assert!(SdeConfig::new(0.5, 10, -0.1, 0).is_err());
        assert!(SdeConfig::new(0.5, 10, 0.1, 0).unwrap().with_record_stride(3).is_err());
    }

    #[test]
    fn zero_drift_variance_grows_linearly() {
        let init = PointCloud::from_scalars(&[-1.0, 0.0, 1.0]).unwrap();
        let init_var = 2.0 / 3.0;
        let cfg = SdeConfig::new(0.8, 8, 0.5, 21).unwrap();
        let batch = simulate(&ZeroDrift(1), &init, &cfg, 100_000).unwrap();
        for t in [0.2, 0.4, 0.8] {
            let var = coordinate_variances(&batch.marginal_at(t).unwrap())[0];
            let expected = init_var + 0.5 * t;
            assert!((var - expected).abs() <= 0.05 * expected, "t={t}: {var} vs {expected}");
        }
    }

    #[test]
    fn mse_examples() {
        let a = single_target(2.0);
        let b = single_target(-1.0);
        let probe = PointCloud::from_scalars(&[0.3]).unwrap();
        assert_eq!(drift_mse(&a, &a, &probe, 0.4).unwrap(), 0.0);
        let got = drift_mse(&a, &b, &probe, 0.4).unwrap();
        assert!((got - 9.0 / 0.36).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_and_trapezoid_time_integrals_agree() {
        let a = DriftField::new(PointCloud::from_scalars(&[-1.0, 0.5, 2.0]).unwrap(), vec![0.0, 0.3, -0.2], 0.5).unwrap();
        let b = DriftField::new(PointCloud::from_scalars(&[-0.8, 0.4, 1.7]).unwrap(), vec![0.1, 0.0, 0.0], 0.5).unwrap();
        let probes = PointCloud::from_scalars(&[-1.0, -0.2, 0.4, 1.1]).unwrap();
        let mc = integrated_drift_mse(&a, &b, 0.8, TimeQuadrature::MonteCarlo { samples: 1000, seed: 4 }, |_| Ok(probes.clone())).unwrap();
        let tr = integrated_drift_mse(&a, &b, 0.8, TimeQuadrature::Trapezoid { nodes: 2001 }, |_| Ok(probes.clone())).unwrap();
        assert!((mc - tr).abs() <= 0.02 * tr, "{mc} vs {tr}");
    }

    #[test]
    fn binary_header() {
        let init = PointCloud::from_scalars(&[0.0]).unwrap();
        let cfg = SdeConfig::new(0.5, 4, 0.1, 3).unwrap();
        let batch = simulate(&ZeroDrift(1), &init, &cfg, 2).unwrap();
        let bytes = batch.encode_binary();
        assert_eq!(&bytes[..4], b"SBTR");
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 5);
        assert_eq!(bytes.len(), 16 + 8 * (5 + 2 * 5));
    }
}
