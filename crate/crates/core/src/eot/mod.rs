//! Entropic optimal transport between uniform empirical measures.
//!
//! The cost is `c(x, y) = ½‖x − y‖²` and the regularization strength is `ε`.
//! Potentials are kept in the log domain throughout; the scaling vectors
//! `u = exp(f/ε)`, `v = exp(g/ε)` only appear in [`scaling`] for cross-checks.

mod hilbert;
mod kernel;
pub mod scaling;
mod sinkhorn;
mod stabilized;

pub use hilbert::{
    contraction_bound, contraction_bound_with, hilbert_metric, hilbert_metric_log, ContractionOptions,
    HilbertDiagnostics, DEFAULT_EXACT_GAMMA_CAP, DEFAULT_GAMMA_SAMPLES,
};
pub use kernel::{build_kernel, EotProblem, KernelMatrix};
pub use sinkhorn::{
    coupling_density, dual_objective, run_sinkhorn, sinkhorn_iterate, DualPotentials, IterationRecord,
    Scheme, SinkhornRun, SinkhornSolver, StoppingRule, REFERENCE_MARGINAL_TOL,
};

/// `log Σ exp(a_i)` with max subtraction. Returns `-inf` for an empty slice.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|&a| (a - max).exp()).sum::<f64>().ln()
}
