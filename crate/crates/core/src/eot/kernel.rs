use ndarray::Array2;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// An entropic OT instance between `μ_m` (source) and `ν_n` (target).
#[derive(Debug, Clone)]
pub struct EotProblem {
    source: PointCloud,
    target: PointCloud,
    epsilon: f64,
}

impl EotProblem {
    pub fn new(source: PointCloud, target: PointCloud, epsilon: f64) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::Dimension(format!(
                "source has dimension {}, target has dimension {}",
                source.dim(),
                target.dim()
            )));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Domain(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        Ok(Self { source, target, epsilon })
    }

    pub fn source(&self) -> &PointCloud {
        &self.source
    }

    pub fn target(&self) -> &PointCloud {
        &self.target
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn m(&self) -> usize {
        self.source.len()
    }

    pub fn n(&self) -> usize {
        self.target.len()
    }

    /// Same clouds, different regularization.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.source.clone(), self.target.clone(), epsilon)
    }

    /// Larger of the two cloud radii.
    pub fn radius(&self) -> f64 {
        self.source.radius().max(self.target.radius())
    }
}

/// Log of the Gibbs kernel: entry `(i, j)` is `−½‖X_i − Y_j‖² / ε`.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    log_entries: Array2<f64>,
    epsilon: f64,
}

impl KernelMatrix {
    pub fn log_entries(&self) -> &Array2<f64> {
        &self.log_entries
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn m(&self) -> usize {
        self.log_entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.log_entries.ncols()
    }
}

pub fn build_kernel(problem: &EotProblem) -> KernelMatrix {
    let x = problem.source().points();
    let y = problem.target().points();
    let scale = -0.5 / problem.epsilon();
    let (m, n, d) = (x.nrows(), y.nrows(), x.ncols());
    let xs = x.as_standard_layout();
    let ys = y.as_standard_layout();
    let xs = xs.as_slice().expect("standard layout");
    let ys = ys.as_slice().expect("standard layout");
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let xi = &xs[i * d..(i + 1) * d];
        for j in 0..n {
            let yj = &ys[j * d..(j + 1) * d];
            let sq: f64 = xi.iter().zip(yj).map(|(a, b)| (a - b) * (a - b)).sum();
            out.push(scale * sq);
        }
    }
    KernelMatrix {
        log_entries: Array2::from_shape_vec((m, n), out).expect("shape matches"),
        epsilon: problem.epsilon(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn problem(x: &[f64], y: &[f64], eps: f64) -> EotProblem {
        EotProblem::new(PointCloud::from_scalars(x).unwrap(), PointCloud::from_scalars(y).unwrap(), eps)
            .unwrap()
    }

    #[test]
    fn one_dimensional_entries() {
        assert_eq!(build_kernel(&problem(&[0.0], &[0.0], 1.0)).log_entries(), &array![[0.0]]);
        assert_eq!(build_kernel(&problem(&[0.0], &[2.0], 1.0)).log_entries(), &array![[-2.0]]);
    }

    #[test]
    fn two_dimensional_entries() {
        let p = EotProblem::new(
            PointCloud::new(array![[0.0, 0.0], [1.0, 0.0]]).unwrap(),
            PointCloud::new(array![[0.0, 1.0]]).unwrap(),
            0.5,
        )
        .unwrap();
        assert_eq!(build_kernel(&p).log_entries(), &array![[-1.0], [-2.0]]);
    }

    #[test]
    fn rejects_bad_problems() {
        let a = PointCloud::from_scalars(&[0.0]).unwrap();
        let b = PointCloud::new(array![[0.0, 1.0]]).unwrap();
        assert!(matches!(EotProblem::new(a.clone(), b, 1.0), Err(Error::Dimension(_))));
        assert!(EotProblem::new(a.clone(), a.clone(), 0.0).is_err());
        assert!(EotProblem::new(a.clone(), a, f64::NAN).is_err());
    }

    #[test]
    fn entries_are_nonpositive() {
        let p = problem(&[-3.0, 0.5, 2.0], &[1.0, 1.0, -0.25, 4.0], 0.3);
        assert!(build_kernel(&p).log_entries().iter().all(|&e| e <= 0.0));
    }
}
