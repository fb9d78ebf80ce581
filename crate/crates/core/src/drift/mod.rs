//! The Sinkhorn-bridge drift and its Markovian-projection characterization.

mod bridge;
mod field;
mod projection;

pub use bridge::BrownianBridgeSampler;
pub use field::{softmax, BridgeWeights, DriftField, DEFAULT_TAU_MAX};
pub use projection::{markovian_projection_oracle, ProjectionEstimate, BOOTSTRAP_RESAMPLES, MIN_EFFECTIVE_SAMPLES};

use crate::error::Result;

/// A time-dependent vector field `b(z, t)` on `ℝ^d`.
pub trait Drift: Sync {
    fn dim(&self) -> usize;

    /// Largest time at which the field may be evaluated, if bounded.
    fn time_limit(&self) -> Option<f64> {
        None
    }

    /// Writes `b(z, t)` into `out`.
    fn drift_into(&self, z: &[f64], t: f64, out: &mut [f64]) -> Result<()>;

    fn drift(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.drift_into(z, t, &mut out)?;
        Ok(out)
    }
}

impl<D: Drift + ?Sized> Drift for &D {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn time_limit(&self) -> Option<f64> {
        (**self).time_limit()
    }

    fn drift_into(&self, z: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        (**self).drift_into(z, t, out)
    }
}

/// The zero field.
#[derive(Debug, Clone, Copy)]
pub struct ZeroDrift(pub usize);

impl Drift for ZeroDrift {
    fn dim(&self) -> usize {
        self.0
    }

    fn drift_into(&self, _z: &[f64], _t: f64, out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }
}
