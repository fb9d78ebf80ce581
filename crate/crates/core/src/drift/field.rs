use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use super::Drift;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Evaluation above this time is refused unless configured otherwise.
pub const DEFAULT_TAU_MAX: f64 = 0.99;

/// Normalized exponentials of `log_weights`, with the maximum subtracted first.
pub fn softmax(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = log_weights.iter().map(|a| (a - max).exp()).collect();
    let s: f64 = w.iter().sum();
    for x in &mut w {
        *x /= s;
    }
    w
}

/// Unnormalized and normalized bridge weights over the targets.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeWeights {
    pub log_weights: Vec<f64>,
    pub weights: Vec<f64>,
}

/// The drift
///
/// ```text
/// b(z, t) = ( −z + Σ_j σ_j Y_j ) / (1 − t),
/// σ = softmax_j( (g_j − ‖Y_j − z‖² / (2(1 − t))) / ε )
/// ```
///
/// defined by target samples `Y_j` and a potential `g` on them.
#[derive(Debug, Clone)]
pub struct DriftField {
    targets: PointCloud,
    g: Vec<f64>,
    epsilon: f64,
    tau_max: f64,
    flat: Vec<f64>,
}

impl DriftField {
    pub fn new(targets: PointCloud, g: Vec<f64>, epsilon: f64) -> Result<Self> {
        if targets.len() != g.len() {
            return Err(Error::Dimension(format!(
                "{} targets but {} potential values",
                targets.len(),
                g.len()
            )));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("potential values must be finite".into()));
        }
        let flat = targets.points().as_standard_layout().iter().copied().collect();
        Ok(Self { targets, g, epsilon, tau_max: DEFAULT_TAU_MAX, flat })
    }

    pub fn with_tau_max(mut self, tau_max: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&tau_max) {
            return Err(Error::Range(format!("tau_max must lie in [0, 1), got {tau_max}")));
        }
        self.tau_max = tau_max;
        Ok(self)
    }

    pub fn targets(&self) -> &PointCloud {
        &self.targets
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    fn check(&self, z: &[f64], t: f64) -> Result<()> {
        if z.len() != self.targets.dim() {
            return Err(Error::Dimension(format!(
                "probe has dimension {}, field has dimension {}",
                z.len(),
                self.targets.dim()
            )));
        }
        if !(t >= 0.0 && t <= self.tau_max) {
            return Err(Error::Range(format!("t = {t} outside [0, {}]", self.tau_max)));
        }
        Ok(())
    }

    fn log_weights_into(&self, z: &[f64], t: f64, out: &mut Vec<f64>) {
        let d = z.len();
        let inv = 1.0 / (2.0 * (1.0 - t));
        let inv_eps = 1.0 / self.epsilon;
        out.clear();
        out.extend(self.flat.chunks_exact(d).zip(&self.g).map(|(y, gj)| {
            let sq: f64 = y.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
            (gj - sq * inv) * inv_eps
        }));
    }

    pub fn bridge_weights(&self, z: &[f64], t: f64) -> Result<BridgeWeights> {
        self.check(z, t)?;
        let mut log_weights = Vec::with_capacity(self.g.len());
        self.log_weights_into(z, t, &mut log_weights);
        let weights = softmax(&log_weights);
        Ok(BridgeWeights { log_weights, weights })
    }

    /// Softmax average of the targets, `Σ_j σ_j Y_j`.
    pub fn barycenter_into(&self, z: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        self.check(z, t)?;
        let d = z.len();
        let mut lw = Vec::with_capacity(self.g.len());
        self.log_weights_into(z, t, &mut lw);
        let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.fill(0.0);
        let mut total = 0.0;
        for (y, a) in self.flat.chunks_exact(d).zip(&lw) {
            let w = (a - max).exp();
            total += w;
            for (o, yk) in out.iter_mut().zip(y) {
                *o += w * yk;
            }
        }
        for o in out.iter_mut() {
            *o /= total;
        }
        Ok(())
    }

    pub fn drift_eval(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        self.drift(z, t)
    }

    /// Drift at every row of `probes`.
    pub fn drift_batch(&self, probes: &Array2<f64>, t: f64) -> Result<Array2<f64>> {
        let d = self.targets.dim();
        let probes = probes.as_standard_layout();
        let flat = probes.as_slice().expect("standard layout");
        let rows: Vec<Vec<f64>> = flat
            .par_chunks(d)
            .map(|z| self.drift(z, t))
            .collect::<Result<_>>()?;
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        Array2::from_shape_vec((probes.nrows(), d), data).map_err(|e| Error::Dimension(e.to_string()))
    }

    /// Writes the field as CSV: header `y1,…,yd,g`, one target per row.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv_to(BufWriter::new(File::create(path)?))
    }

    pub fn write_csv_to<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.targets.dim();
        let header: Vec<String> = (1..=d).map(|k| format!("y{k}")).chain(["g".to_string()]).collect();
        writeln!(out, "{}", header.join(","))?;
        for (y, gj) in self.targets.points().rows().into_iter().zip(&self.g) {
            let row: Vec<String> = y.iter().chain(std::iter::once(gj)).map(|x| x.to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>, epsilon: f64) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let mut rows = Vec::new();
        let mut g = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let values = record
                .iter()
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| Error::Format {
                        path: path.to_path_buf(),
                        reason: format!("row {}: {e}", line + 1),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() < 2 {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: "need at least one coordinate and a potential".into(),
                });
            }
            let (y, last) = values.split_at(values.len() - 1);
            rows.push(y.to_vec());
            g.push(last[0]);
        }
        Self::new(PointCloud::from_rows(&rows)?, g, epsilon)
    }
}

impl Drift for DriftField {
    fn dim(&self) -> usize {
        self.targets.dim()
    }

    fn time_limit(&self) -> Option<f64> {
        Some(self.tau_max)
    }

    fn drift_into(&self, z: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        self.barycenter_into(z, t, out)?;
        let s = 1.0 / (1.0 - t);
        for (o, zk) in out.iter_mut().zip(z) {
            *o = (*o - zk) * s;
        }
        Ok(())
    }
}
