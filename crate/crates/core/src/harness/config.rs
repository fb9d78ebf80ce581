use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::datasets::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    MseSample,
    MseIter,
    DimSweep,
    EpsSearch,
    Distill,
    Simulate,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::MseSample,
        Experiment::MseIter,
        Experiment::DimSweep,
        Experiment::EpsSearch,
        Experiment::Distill,
        Experiment::Simulate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::MseSample => "mse-sample",
            Experiment::MseIter => "mse-iter",
            Experiment::DimSweep => "dim-sweep",
            Experiment::EpsSearch => "eps-search",
            Experiment::Distill => "distill",
            Experiment::Simulate => "simulate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    /// Ambient dimension.
    #[serde(default = "default_d")]
    pub d: usize,
    /// Intrinsic target dimensions for the dimension sweep.
    #[serde(default)]
    pub intrinsic: Vec<usize>,
}

impl Default for Dims {
    fn default() -> Self {
        Self { d: default_d(), intrinsic: Vec::new() }
    }
}

/// Which `(m, n)` cells of the sample-size grid to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairs {
    /// Every combination of `m` and `n`.
    #[default]
    Full,
    /// `m[i]` with `n[i]`.
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub m: Vec<usize>,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub pairs: Pairs,
    /// Sinkhorn iteration counts.
    #[serde(default)]
    pub k: Vec<usize>,
    /// Evaluation times.
    #[serde(default)]
    pub t: Vec<f64>,
    /// Integration horizons.
    #[serde(default = "default_tau")]
    pub tau: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self { m: Vec::new(), n: Vec::new(), pairs: Pairs::Full, k: Vec::new(), t: Vec::new(), tau: default_tau() }
    }
}

impl Grid {
    /// The `(m, n)` cells in run order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        match self.pairs {
            Pairs::Full => self.m.iter().flat_map(|&m| self.n.iter().map(move |&n| (m, n))).collect(),
            Pairs::Diagonal => self.m.iter().copied().zip(self.n.iter().copied()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinkhornSettings {
    /// Marginal ℓ₁ tolerance that counts as converged.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for SinkhornSettings {
    fn default() -> Self {
        Self { tol: default_tol(), max_iter: default_max_iter() }
    }
}

/// Time integration over `[0, τ]` by Monte Carlo in `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Integration {
    #[serde(default = "default_time_samples")]
    pub time_samples: usize,
    #[serde(default = "default_probes_per_time")]
    pub probes_per_time: usize,
}

impl Default for Integration {
    fn default() -> Self {
        Self { time_samples: default_time_samples(), probes_per_time: default_probes_per_time() }
    }
}

/// `μ = N(0, I)`, `ν = N(0, B)` with `B` random SPD, eigenvalues in
/// `[cov_min, cov_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSetup {
    #[serde(default = "default_cov_min")]
    pub cov_min: f64,
    #[serde(default = "default_cov_max")]
    pub cov_max: f64,
}

impl Default for GaussianSetup {
    fn default() -> Self {
        Self { cov_min: default_cov_min(), cov_max: default_cov_max() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSettings {
    /// Target error.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_log10_min")]
    pub log10_min: f64,
    #[serde(default = "default_log10_max")]
    pub log10_max: f64,
    /// Bisection steps.
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Also scan this many log-spaced ε values as a cross-check (0 = off).
    #[serde(default)]
    pub scan_points: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            log10_min: default_log10_min(),
            log10_max: default_log10_max(),
            steps: default_steps(),
            scan_points: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub source: Dataset,
    pub target: Dataset,
    pub m: usize,
    pub n: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            source: Dataset::EightGaussians { scale: 5.0, var: 0.1 },
            target: Dataset::Moons { noise: 0.2 },
            m: 1000,
            n: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[serde(default = "default_train_steps")]
    pub steps: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            steps: default_train_steps(),
            batch_size: default_batch(),
            lr: default_lr(),
            weight_decay: default_wd(),
            hidden: default_hidden(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSettings {
    #[serde(default = "default_sim_steps")]
    pub steps: usize,
    /// Paths to simulate; 0 starts one path from every source point.
    #[serde(default)]
    pub paths: usize,
    /// Stop Sinkhorn after this many iterations instead of converging.
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self { steps: default_sim_steps(), paths: 0, iterations: None, record_stride: default_stride() }
    }
}

/// Everything an experiment run depends on. Parsed from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    pub epsilon: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Monte Carlo points per marginal norm.
    #[serde(default = "default_mc_points")]
    pub mc_points: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Reference sample size for the dimension sweep (default ten times the
    /// largest grid size).
    #[serde(default)]
    pub reference_size: Option<usize>,
    #[serde(default)]
    pub dims: Dims,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub sinkhorn: SinkhornSettings,
    #[serde(default)]
    pub integration: Integration,
    #[serde(default)]
    pub gaussian: GaussianSetup,
    #[serde(default)]
    pub search: SearchSettings,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub simulate: SimulateSettings,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("out").join(self.experiment.name()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.mc_points == 0 || self.integration.time_samples == 0 || self.integration.probes_per_time == 0 {
            return bad("Monte Carlo sample counts must be positive".into());
        }
        if self.dims.d == 0 || self.dims.intrinsic.iter().any(|&k| k == 0 || k > self.dims.d) {
            return bad(format!("dimensions must be positive and intrinsic ≤ d = {}", self.dims.d));
        }
        if self.grid.m.contains(&0) || self.grid.n.contains(&0) {
            return bad("sample sizes must be positive".into());
        }
        if self.grid.t.iter().any(|t| !(0.0..1.0).contains(t)) {
            return bad("evaluation times must lie in [0, 1)".into());
        }
        if self.grid.tau.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return bad("integration horizons must lie in (0, 1)".into());
        }
        if !(self.sinkhorn.tol > 0.0) || self.sinkhorn.max_iter == 0 {
            return bad("Sinkhorn tolerance and budget must be positive".into());
        }
        if !(self.gaussian.cov_min > 0.0 && self.gaussian.cov_min <= self.gaussian.cov_max) {
            return bad("Gaussian eigenvalue range must satisfy 0 < cov_min ≤ cov_max".into());
        }
        if !(self.search.log10_min < self.search.log10_max) || self.search.steps == 0 {
            return bad("search range must be nonempty with at least one step".into());
        }
        if self.search.delta.is_nan() || self.search.delta < 0.0 {
            return bad("target error must be nonnegative".into());
        }
        if self.data.m == 0 || self.data.n == 0 || self.data.source.dim() != self.data.target.dim() {
            return bad("data clouds must be nonempty and share a dimension".into());
        }
        if self.train.steps == 0 || self.train.batch_size == 0 || self.train.hidden.contains(&0) {
            return bad("training steps, batch size and widths must be positive".into());
        }
        if self.simulate.steps == 0 || self.simulate.record_stride == 0 || self.simulate.steps % self.simulate.record_stride != 0
        {
            return bad("simulation steps must be a positive multiple of record_stride".into());
        }
        if matches!(self.grid.pairs, Pairs::Diagonal) && self.grid.m.len() != self.grid.n.len() {
            return bad("diagonal grids need equally long m and n lists".into());
        }
        let needs = |ok: bool, what: &str| if ok { Ok(()) } else { bad(format!("{} needs {what}", self.experiment)) };
        match self.experiment {
            Experiment::MseSample => {
                needs(!self.grid.m.is_empty() && !self.grid.n.is_empty(), "grid.m and grid.n")?;
                needs(!self.grid.t.is_empty(), "grid.t")
            }
            Experiment::MseIter => {
                needs(!self.grid.m.is_empty() && !self.grid.n.is_empty(), "grid.m and grid.n")?;
                needs(!self.grid.k.is_empty() && !self.grid.tau.is_empty(), "grid.k and grid.tau")
            }
            Experiment::DimSweep => {
                needs(!self.grid.m.is_empty(), "grid.m")?;
                needs(!self.dims.intrinsic.is_empty(), "dims.intrinsic")?;
                needs(!self.grid.tau.is_empty(), "grid.tau")
            }
            Experiment::EpsSearch => {
                needs(!self.grid.m.is_empty(), "grid.m")?;
                needs(!self.grid.tau.is_empty(), "grid.tau")
            }
            Experiment::Distill => needs(self.grid.tau.len() == 1, "exactly one grid.tau"),
            Experiment::Simulate => needs(self.grid.tau.len() == 1, "exactly one grid.tau"),
        }
    }
}

fn default_d() -> usize {
    3
}
fn default_tau() -> Vec<f64> {
    vec![0.9]
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    100_000
}
fn default_time_samples() -> usize {
    1000
}
fn default_probes_per_time() -> usize {
    10
}
fn default_cov_min() -> f64 {
    0.5
}
fn default_cov_max() -> f64 {
    2.0
}
fn default_delta() -> f64 {
    1.0
}
fn default_log10_min() -> f64 {
    -4.0
}
fn default_log10_max() -> f64 {
    9.0
}
fn default_steps() -> usize {
    16
}
fn default_train_steps() -> usize {
    2000
}
fn default_batch() -> usize {
    4096
}
fn default_lr() -> f64 {
    1e-3
}
fn default_wd() -> f64 {
    1e-5
}
fn default_hidden() -> Vec<usize> {
    vec![64, 64, 64]
}
fn default_sim_steps() -> usize {
    1000
}
fn default_stride() -> usize {
    10
}
fn default_trials() -> usize {
    10
}
fn default_mc_points() -> usize {
    10_000
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment = "mse-sample"
epsilon = 0.1
[grid]
m = [50, 100]
n = [50, 100]
t = [0.5]
"#;

    #[test]
    fn minimal_config_with_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.trials, 10);
        assert_eq!(cfg.mc_points, 10_000);
        assert_eq!(cfg.grid.cells().len(), 4);
        assert_eq!(cfg.output_dir(), PathBuf::from("out/mse-sample"));
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn invariants_are_enforced() {
        for patch in ["trials = 0", "mc_points = 0"] {
            let text = MINIMAL.replacen("epsilon = 0.1", &format!("epsilon = 0.1\n{patch}"), 1);
            assert!(ExperimentConfig::from_toml(&text).is_err(), "{patch}");
        }
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("t = [0.5]", "t = [1.0]")).is_err());
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("m = [50, 100]", "m = [0]")).is_err());
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("mse-sample", "mse-typo")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}\nunknown = 1")).is_err());
        let tau = MINIMAL.replace("t = [0.5]", "t = [0.5]\ntau = [1.0]");
        assert!(ExperimentConfig::from_toml(&tau).is_err());
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
    }
}
