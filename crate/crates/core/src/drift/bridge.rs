use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Draws from the time-`t` marginal of a Brownian bridge with volatility `ε`,
/// `N((1 − t)x₀ + t x₁, ε t (1 − t) I)`.
#[derive(Debug, Clone)]
pub struct BrownianBridgeSampler {
    epsilon: f64,
    rng: Stream,
}

impl BrownianBridgeSampler {
    /// `ε = 0` is accepted and yields the deterministic interpolation.
    pub fn new(epsilon: f64, rng: Stream) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Domain(format!("epsilon must be nonnegative, got {epsilon}")));
        }
        Ok(Self { epsilon, rng })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sample(&mut self, x0: &[f64], x1: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x0.len()];
        self.sample_into(x0, x1, t, &mut out)?;
        Ok(out)
    }

    pub fn sample_into(&mut self, x0: &[f64], x1: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        if x0.len() != x1.len() || out.len() != x0.len() {
            return Err(Error::Dimension("bridge endpoints must share a dimension".into()));
        }
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Range(format!("bridge time must lie in (0, 1), got {t}")));
        }
        let sd = (self.epsilon * t * (1.0 - t)).sqrt();
        for ((o, a), b) in out.iter_mut().zip(x0).zip(x1) {
            let mean = (1.0 - t) * a + t * b;
            *o = if sd > 0.0 {
                let xi: f64 = StandardNormal.sample(&mut self.rng);
                mean + sd * xi
            } else {
                mean
            };
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_volatility_is_interpolation() {
        let mut s = BrownianBridgeSampler::new(0.0, rng::stream(1, 0)).unwrap();
        let x = s.sample(&[0.0, 2.0], &[4.0, -2.0], 0.25).unwrap();
        assert_eq!(x, vec![1.0, 1.0]);
    }

    #[test]
    fn endpoints_are_rejected() {
        let mut s = BrownianBridgeSampler::new(1.0, rng::stream(1, 0)).unwrap();
        assert!(matches!(s.sample(&[0.0], &[1.0], 0.0), Err(Error::Range(_))));
        assert!(matches!(s.sample(&[0.0], &[1.0], 1.0), Err(Error::Range(_))));
        assert!(BrownianBridgeSampler::new(-1.0, rng::stream(1, 0)).is_err());
    }

    #[test]
    fn midpoint_moments() {
        let n = 100_000;
        let mut s = BrownianBridgeSampler::new(1.0, rng::stream(42, 0)).unwrap();
        let draws: Vec<f64> = (0..n).map(|_| s.sample(&[0.0], &[0.0], 0.5).unwrap()[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 4.0 * 0.5 / (n as f64).sqrt());
        assert!((var - 0.25).abs() <= 0.05 * 0.25);
    }

    #[test]
    fn time_reversal_symmetry() {
        // Same noise stream, mirrored endpoints and time: identical draws.
        let mut a = BrownianBridgeSampler::new(0.3, rng::stream(9, 2)).unwrap();
        let mut b = BrownianBridgeSampler::new(0.3, rng::stream(9, 2)).unwrap();
        for _ in 0..100 {
            let x = a.sample(&[1.0, -2.0], &[3.0, 0.5], 0.3).unwrap();
            let y = b.sample(&[3.0, 0.5], &[1.0, -2.0], 0.7).unwrap();
            for (p, q) in x.iter().zip(&y) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
