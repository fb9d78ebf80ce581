use rand::Rng;

use super::kernel::EotProblem;
use crate::error::{Error, Result};
use crate::rng;

/// Exact `γ(K)` is computed when `m·n` is at most this.
pub const DEFAULT_EXACT_GAMMA_CAP: usize = 4096;
/// Quadruples drawn when `γ(K)` is estimated.
pub const DEFAULT_GAMMA_SAMPLES: usize = 1_000_000;

/// Hilbert projective metric `log(max u/w · max w/u)` on positive vectors.
pub fn hilbert_metric(u: &[f64], w: &[f64]) -> Result<f64> {
    if u.len() != w.len() {
        return Err(Error::Dimension(format!("vectors of length {} and {}", u.len(), w.len())));
    }
    if u.is_empty() {
        return Err(Error::Dimension("empty vectors".into()));
    }
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for (&a, &b) in u.iter().zip(w) {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Domain(format!("entries must be positive and finite, got {a} and {b}")));
        }
        let r = a.ln() - b.ln();
        hi = hi.max(r);
        lo = lo.min(r);
    }
    Ok(hi - lo)
}

/// Hilbert distance between `exp(a/ε)` and `exp(b/ε)`, computed from the
/// exponents so it never overflows.
pub fn hilbert_metric_log(a: &[f64], b: &[f64], epsilon: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Dimension(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for (x, y) in a.iter().zip(b) {
        let r = x - y;
        if !r.is_finite() {
            return Err(Error::Domain("non-finite log entry".into()));
        }
        hi = hi.max(r);
        lo = lo.min(r);
    }
    Ok((hi - lo) / epsilon)
}

/// Contraction constants of the Sinkhorn map together with an optional
/// per-iteration error trace.
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertDiagnostics {
    /// `log γ(K)`; `γ(K)` itself overflows for small `ε`.
    pub log_gamma_k: f64,
    /// `λ(K) = (√γ − 1)/(√γ + 1) = tanh(log γ / 4)`.
    pub lambda_k: f64,
    /// `tanh(R²/ε)` with `R` the larger cloud radius.
    pub tanh_bound: f64,
    /// `d_Hilb(v^(k), v*)` for `k = 0, 1, …`.
    pub per_iteration_hilbert_error: Vec<f64>,
    /// `γ(K)` was estimated from sampled quadruples.
    pub gamma_approximate: bool,
    /// The reference solution hit its iteration cap before reaching tolerance.
    pub reference_approximate: bool,
}

impl HilbertDiagnostics {
    pub fn gamma_k(&self) -> f64 {
        self.log_gamma_k.exp()
    }

    /// Successive ratios `d(v^(k+1), v*) / d(v^(k), v*)` for iterations whose
    /// error is still above `floor`.
    pub fn contraction_ratios(&self, floor: f64) -> Vec<f64> {
        self.per_iteration_hilbert_error
            .windows(2)
            .take_while(|w| w[0] >= floor && w[1] >= floor)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ContractionOptions {
    pub exact_cap: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for ContractionOptions {
    fn default() -> Self {
        Self {
            exact_cap: DEFAULT_EXACT_GAMMA_CAP,
            samples: DEFAULT_GAMMA_SAMPLES,
            seed: 0,
        }
    }
}

pub fn contraction_bound(problem: &EotProblem) -> HilbertDiagnostics {
    contraction_bound_with(problem, ContractionOptions::default())
}

/// `γ(K) = max exp((X_i − X_j)ᵀ(Y_k − Y_l)/ε)`.
///
/// The exact path reduces the quadruple maximum to a maximum over source
/// pairs of the range of `(X_i − X_j)ᵀ Y_k` over `k`, which is the same
/// quantity in `O(m² n d)`.
pub fn contraction_bound_with(problem: &EotProblem, opts: ContractionOptions) -> HilbertDiagnostics {
    let x = problem.source().points();
    let y = problem.target().points();
    let (m, n) = (x.nrows(), y.nrows());
    let eps = problem.epsilon();
    let (max_cross, approximate) = if m * n <= opts.exact_cap {
        let proj = x.dot(&y.t());
        let mut best: f64 = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                let mut hi = f64::NEG_INFINITY;
                let mut lo = f64::INFINITY;
                for k in 0..n {
                    let v = proj[[i, k]] - proj[[j, k]];
                    hi = hi.max(v);
                    lo = lo.min(v);
                }
                best = best.max(hi - lo);
            }
        }
        (best, false)
    } else {
        let mut r = rng::stream(opts.seed, 0);
        let mut best: f64 = 0.0;
        for _ in 0..opts.samples {
            let (i, j) = (r.random_range(0..m), r.random_range(0..m));
            let (k, l) = (r.random_range(0..n), r.random_range(0..n));
            let v: f64 = (0..x.ncols())
                .map(|c| (x[[i, c]] - x[[j, c]]) * (y[[k, c]] - y[[l, c]]))
                .sum();
            best = best.max(v);
        }
        (best, true)
    };
    let log_gamma_k = max_cross / eps;
    let radius = problem.radius();
    HilbertDiagnostics {
        log_gamma_k,
        lambda_k: (log_gamma_k / 4.0).tanh(),
        tanh_bound: (radius * radius / eps).tanh(),
        per_iteration_hilbert_error: Vec::new(),
        gamma_approximate: approximate,
        reference_approximate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointCloud;

    fn problem(x: &[f64], y: &[f64], eps: f64) -> EotProblem {
        EotProblem::new(PointCloud::from_scalars(x).unwrap(), PointCloud::from_scalars(y).unwrap(), eps)
            .unwrap()
    }

    #[test]
    fn metric_examples() {
        assert_eq!(hilbert_metric(&[1.0, 3.0], &[1.0, 3.0]).unwrap(), 0.0);
        let d = hilbert_metric(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        assert!((d - 4f64.ln()).abs() < 1e-15);
        let a = hilbert_metric(&[1.0, 2.0, 5.0], &[0.3, 0.7, 0.2]).unwrap();
        let b = hilbert_metric(&[1.0, 2.0, 5.0], &[0.9, 2.1, 0.6]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn metric_domain_errors() {
        assert!(matches!(hilbert_metric(&[1.0, 0.0], &[1.0, 1.0]), Err(Error::Domain(_))));
        assert!(matches!(hilbert_metric(&[1.0, -1.0], &[1.0, 1.0]), Err(Error::Domain(_))));
        assert!(matches!(hilbert_metric(&[1.0], &[1.0, 1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn log_metric_agrees_with_direct() {
        let a = [0.1, -0.4, 0.9];
        let b = [0.0, 0.2, -0.3];
        let eps = 0.7;
        let u: Vec<f64> = a.iter().map(|x: &f64| (x / eps).exp()).collect();
        let w: Vec<f64> = b.iter().map(|x: &f64| (x / eps).exp()).collect();
        let direct = hilbert_metric(&u, &w).unwrap();
        assert!((hilbert_metric_log(&a, &b, eps).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn single_atom_gamma_is_one() {
        let d = contraction_bound(&problem(&[0.4], &[-2.0], 0.3));
        assert_eq!(d.gamma_k(), 1.0);
        assert_eq!(d.lambda_k, 0.0);
    }

    #[test]
    fn gamma_by_enumeration_of_quadruples() {
        let x = [-1.0, 1.0];
        let y = [-1.0, 1.0];
        let mut best = f64::NEG_INFINITY;
        for xi in x {
            for xj in x {
                for yk in y {
                    for yl in y {
                        best = best.max((xi - xj) * (yk - yl));
                    }
                }
            }
        }
        assert_eq!(best, 4.0);
        let d = contraction_bound(&problem(&x, &y, 1.0));
        assert!((d.log_gamma_k - 4.0).abs() < 1e-15);
        let lambda = (4f64.exp().sqrt() - 1.0) / (4f64.exp().sqrt() + 1.0);
        assert!((d.lambda_k - lambda).abs() < 1e-15);
        assert!(d.lambda_k <= d.tanh_bound + 1e-12);
    }

    #[test]
    fn sampled_gamma_is_a_lower_bound() {
        let xs: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin()).collect();
        let ys: Vec<f64> = (0..70).map(|i| (i as f64 * 0.91).cos()).collect();
        let p = problem(&xs, &ys, 0.5);
        let exact = contraction_bound_with(&p, ContractionOptions { exact_cap: usize::MAX, ..Default::default() });
        let sampled = contraction_bound_with(&p, ContractionOptions { exact_cap: 0, samples: 200_000, seed: 3 });
        assert!(sampled.gamma_approximate && !exact.gamma_approximate);
        assert!(sampled.log_gamma_k <= exact.log_gamma_k + 1e-12);
        assert!(sampled.log_gamma_k > 0.9 * exact.log_gamma_k);
    }
}
