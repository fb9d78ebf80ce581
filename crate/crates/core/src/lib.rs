//! Schrödinger-bridge estimation with the Sinkhorn bridge.
//!
//! The pipeline is: solve entropic OT between two point clouds with
//! log-domain Sinkhorn ([`eot`]), plug the target potential into the bridge
//! drift ([`drift`]), and simulate the resulting SDE by Euler–Maruyama
//! ([`sde`]). [`gaussian`] supplies closed-form ground truth between Gaussian
//! measures, [`neural`] distills a drift field into a small MLP, and
//! [`harness`] runs the rate experiments and writes CSV/SVG output.

pub mod cloud;
pub mod drift;
pub mod eot;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod neural;
pub mod rng;
pub mod sde;

pub use cloud::PointCloud;
pub use drift::{Drift, DriftField};
pub use eot::{DualPotentials, EotProblem, SinkhornSolver, StoppingRule};
pub use error::{Error, Result};
