//! Scaling-form Sinkhorn, `u ← n·1 ⊘ (K v)`, `v ← m·1 ⊘ (Kᵀ u)`.
//!
//! Overflows for small `ε`; only used to cross-check the log-domain solver.

use ndarray::{Array1, Array2};

use super::kernel::KernelMatrix;

pub fn gibbs_kernel(kernel: &KernelMatrix) -> Array2<f64> {
    kernel.log_entries().mapv(f64::exp)
}

/// One iteration on scaling vectors.
pub fn iterate(k: &Array2<f64>, v: &Array1<f64>) -> (Array1<f64>, Array1<f64>) {
    let (m, n) = k.dim();
    let u = k.dot(v).mapv(|x| n as f64 / x);
    let v = k.t().dot(&u).mapv(|x| m as f64 / x);
    (u, v)
}
