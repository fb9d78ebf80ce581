use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Below this effective sample size the estimate is flagged degenerate.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 30.0;
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Monte-Carlo estimate of `E[(X₁ − z)/(1 − t) | X_t = z]` under a bridge
/// mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionEstimate {
    pub estimate: Vec<f64>,
    pub std_error: Vec<f64>,
    pub effective_samples: f64,
    /// Set when the effective sample size is below [`MIN_EFFECTIVE_SAMPLES`].
    pub degenerate: bool,
}

/// Estimates the Markovian-projection drift of the mixture of Brownian
/// bridges `∫ W^ε_{|x₀,x₁} dπ(x₀, x₁)` at `(z, t)`.
///
/// Endpoint pairs are drawn from `coupling` (masses over source × target).
/// Conditioning on `X_t = z` is done by self-normalized importance weights
/// equal to the bridge marginal density `N(z; (1−t)x₀ + t x₁, ε t(1−t) I)`.
/// The standard error is a bootstrap over the drawn pairs.
#[allow(clippy::too_many_arguments)]
pub fn markovian_projection_oracle(
    coupling: &Array2<f64>,
    source: &PointCloud,
    targets: &PointCloud,
    epsilon: f64,
    z: &[f64],
    t: f64,
    n_mc: usize,
    rng: &mut Stream,
) -> Result<ProjectionEstimate> {
    let (m, n) = coupling.dim();
    if m != source.len() || n != targets.len() {
        return Err(Error::Dimension(format!(
            "coupling is {m}x{n}, clouds have {} and {} points",
            source.len(),
            targets.len()
        )));
    }
    if z.len() != source.dim() || source.dim() != targets.dim() {
        return Err(Error::Dimension("probe and clouds must share a dimension".into()));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Range(format!("t must lie in (0, 1), got {t}")));
    }
    if n_mc == 0 {
        return Err(Error::Domain("need at least one Monte-Carlo draw".into()));
    }
    let cells = WeightedIndex::new(coupling.iter().copied())
        .map_err(|e| Error::Domain(format!("invalid coupling: {e}")))?;

    let d = z.len();
    let var = epsilon * t * (1.0 - t);
    let mut log_w = Vec::with_capacity(n_mc);
    let mut values = Vec::with_capacity(n_mc * d);
    for _ in 0..n_mc {
        let cell = cells.sample(rng);
        let (i, j) = (cell / n, cell % n);
        let x0 = source.point(i);
        let x1 = targets.point(j);
        let mut sq = 0.0;
        for k in 0..d {
            let mean = (1.0 - t) * x0[k] + t * x1[k];
            sq += (z[k] - mean).powi(2);
            values.push((x1[k] - z[k]) / (1.0 - t));
        }
        log_w.push(-sq / (2.0 * var));
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|a| (a - max).exp()).collect();

    let weighted_mean = |idx: &mut dyn Iterator<Item = usize>| {
        let mut acc = vec![0.0; d];
        let mut total = 0.0;
        for s in idx {
            total += w[s];
            for k in 0..d {
                acc[k] += w[s] * values[s * d + k];
            }
        }
        acc.iter_mut().for_each(|a| *a /= total);
        acc
    };

    let estimate = weighted_mean(&mut (0..n_mc));
    let sum_w: f64 = w.iter().sum();
    let sum_w2: f64 = w.iter().map(|x| x * x).sum();
    let effective_samples = sum_w * sum_w / sum_w2;

    let boots: Vec<Vec<f64>> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| weighted_mean(&mut (0..n_mc).map(|_| rng.random_range(0..n_mc))))
        .collect();
    let r = BOOTSTRAP_RESAMPLES as f64;
    let std_error = (0..d)
        .map(|k| {
            let mean = boots.iter().map(|b| b[k]).sum::<f64>() / r;
            (boots.iter().map(|b| (b[k] - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
        })
        .collect();

    Ok(ProjectionEstimate {
        estimate,
        std_error,
        effective_samples,
        degenerate: effective_samples < MIN_EFFECTIVE_SAMPLES,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    #[test]
    fn single_cell_coupling_is_exact() {
        let x = PointCloud::from_scalars(&[0.3]).unwrap();
        let y = PointCloud::from_scalars(&[2.0]).unwrap();
        let mut r = rng::stream(0, 0);
        let est = markovian_projection_oracle(&array![[1.0]], &x, &y, 0.5, &[1.0], 0.4, 500, &mut r).unwrap();
        assert!((est.estimate[0] - (2.0 - 1.0) / 0.6).abs() < 1e-12);
        // bootstrap of identical draws
        assert!(est.std_error[0] < 1e-12);
        assert!(!est.degenerate);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = PointCloud::from_scalars(&[0.0]).unwrap();
        let mut r = rng::stream(0, 0);
        let c = array![[1.0]];
        assert!(markovian_projection_oracle(&c, &x, &x, 1.0, &[0.0], 1.0, 10, &mut r).is_err());
        assert!(markovian_projection_oracle(&array![[-1.0]], &x, &x, 1.0, &[0.0], 0.5, 10, &mut r).is_err());
        assert!(markovian_projection_oracle(&array![[0.5, 0.5]], &x, &x, 1.0, &[0.0], 0.5, 10, &mut r).is_err());
    }

    #[test]
    fn symmetric_instance_centres_on_zero() {
        let x = PointCloud::from_scalars(&[-1.0, 1.0]).unwrap();
        let c = array![[0.4, 0.1], [0.1, 0.4]];
        let mut r = rng::stream(5, 1);
        let est = markovian_projection_oracle(&c, &x, &x, 0.5, &[0.0], 0.5, 4000, &mut r).unwrap();
        assert!(est.estimate[0].abs() <= 3.0 * est.std_error[0]);
    }
}
