//! Closed-form Schrödinger bridge between Gaussian measures.
//!
//! For `μ = N(m₀, Σ₀)`, `ν = N(m₁, Σ₁)` and volatility `ε`, the optimal
//! entropic coupling is Gaussian with cross-covariance
//!
//! ```text
//! C = ½ (Σ₀^{1/2} D Σ₀^{-1/2} − ε I),   D = (4 Σ₀^{1/2} Σ₁ Σ₀^{1/2} + ε² I)^{1/2}.
//! ```
//!
//! The bridge is the mixture of Brownian bridges under that coupling, so its
//! time marginal is `N(m_t, Σ_t)` with `m_t = (1−t)m₀ + t m₁` and
//!
//! ```text
//! Σ_t = (1−t)² Σ₀ + t² Σ₁ + t(1−t) (C + Cᵀ + ε I),
//! ```
//!
//! and its drift is the conditional mean of `(X₁ − z)/(1 − t)` given
//! `X_t = z`, which is affine in `z`:
//!
//! ```text
//! b(z, t) = ( m₁ + S_t Σ_t^{-1} (z − m_t) − z ) / (1 − t),   S_t = (1−t) Cᵀ + t Σ₁.
//! ```

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::drift::Drift;
use crate::error::{Error, Result};
use crate::rng;

/// Eigenvalues below this are clamped when forming matrix functions.
pub const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPair {
    mean0: DVector<f64>,
    mean1: DVector<f64>,
    cov0: DMatrix<f64>,
    cov1: DMatrix<f64>,
    epsilon: f64,
    cross: DMatrix<f64>,
    sqrt0: DMatrix<f64>,
    sqrt1: DMatrix<f64>,
}

fn sym_fn(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let vals = eig.eigenvalues.map(|l| f(l.max(EIGEN_FLOOR)));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

fn check_spd(name: &str, a: &DMatrix<f64>, d: usize) -> Result<()> {
    if a.nrows() != d || a.ncols() != d {
        return Err(Error::Dimension(format!("{name} must be {d}x{d}")));
    }
    let scale = a.amax().max(1.0);
    if (a - a.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Domain(format!("{name} is not symmetric")));
    }
    let min = SymmetricEigen::new(a.clone()).eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::Domain(format!("{name} is not positive definite (min eigenvalue {min})")));
    }
    Ok(())
}

impl GaussianPair {
    pub fn new(
        mean0: DVector<f64>,
        cov0: DMatrix<f64>,
        mean1: DVector<f64>,
        cov1: DMatrix<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let d = mean0.len();
        if d == 0 || mean1.len() != d {
            return Err(Error::Dimension("means must be non-empty and of equal length".into()));
        }
        check_spd("cov0", &cov0, d)?;
        check_spd("cov1", &cov1, d)?;
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
        }
        let sqrt0 = sym_fn(&cov0, f64::sqrt);
        let inv_sqrt0 = sym_fn(&cov0, |l| 1.0 / l.sqrt());
        let sqrt1 = sym_fn(&cov1, f64::sqrt);
        let inner = 4.0 * &sqrt0 * &cov1 * &sqrt0 + DMatrix::identity(d, d) * (epsilon * epsilon);
        let inner = (&inner + inner.transpose()) * 0.5;
        let dmat = sym_fn(&inner, f64::sqrt);
        let cross = (&sqrt0 * dmat * inv_sqrt0 - DMatrix::identity(d, d) * epsilon) * 0.5;
        Ok(Self { mean0, mean1, cov0, cov1, epsilon, cross, sqrt0, sqrt1 })
    }

    /// Isotropic-free 1-D convenience constructor from variances.
    pub fn one_dimensional(mean0: f64, var0: f64, mean1: f64, var1: f64, epsilon: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, mean0),
            DMatrix::from_element(1, 1, var0),
            DVector::from_element(1, mean1),
            DMatrix::from_element(1, 1, var1),
            epsilon,
        )
    }

    pub fn dim(&self) -> usize {
        self.mean0.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mean(&self, side: Side) -> &DVector<f64> {
        match side {
            Side::Source => &self.mean0,
            Side::Target => &self.mean1,
        }
    }

    pub fn cov(&self, side: Side) -> &DMatrix<f64> {
        match side {
            Side::Source => &self.cov0,
            Side::Target => &self.cov1,
        }
    }

    /// `Cov(X₀, X₁)` under the optimal entropic coupling.
    pub fn cross_covariance(&self) -> &DMatrix<f64> {
        &self.cross
    }

    /// Mean and covariance of the bridge marginal at `t ∈ [0, 1]`.
    pub fn marginal(&self, t: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Range(format!("t must lie in [0, 1], got {t}")));
        }
        let s = 1.0 - t;
        let mean = &self.mean0 * s + &self.mean1 * t;
        if t == 0.0 {
            return Ok((mean, self.cov0.clone()));
        }
        if t == 1.0 {
            return Ok((mean, self.cov1.clone()));
        }
        let d = self.dim();
        let mixed = &self.cross + self.cross.transpose() + DMatrix::identity(d, d) * self.epsilon;
        let cov = &self.cov0 * (s * s) + &self.cov1 * (t * t) + mixed * (t * s);
        Ok((mean, (&cov + cov.transpose()) * 0.5))
    }

    /// `(A(t), c(t))` with `b(z, t) = A(t) z + c(t)`.
    pub fn drift_affine(&self, t: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
        if !(0.0..1.0).contains(&t) {
            return Err(Error::Range(format!("drift requires t in [0, 1), got {t}")));
        }
        let (mean_t, cov_t) = self.marginal(t)?;
        let s = 1.0 - t;
        let cross_t = self.cross.transpose() * s + &self.cov1 * t;
        let chol = cov_t
            .cholesky()
            .ok_or_else(|| Error::Numeric(format!("marginal covariance at t = {t} is not positive definite")))?;
        // gain = S_t Σ_t^{-1} = (Σ_t^{-1} S_tᵀ)ᵀ
        let gain = chol.solve(&cross_t.transpose()).transpose();
        let d = self.dim();
        let a = (&gain - DMatrix::identity(d, d)) / s;
        let c = (&self.mean1 - &gain * mean_t) / s;
        Ok((a, c))
    }

    pub fn gaussian_bridge_drift(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        let (a, c) = self.drift_affine(t)?;
        if z.len() != self.dim() {
            return Err(Error::Dimension("probe dimension mismatch".into()));
        }
        Ok((a * DVector::from_column_slice(z) + c).iter().copied().collect())
    }

    /// Seeded draws from one of the two Gaussians.
    pub fn sample(&self, side: Side, count: usize, seed: u64) -> Result<PointCloud> {
        let root = match side {
            Side::Source => &self.sqrt0,
            Side::Target => &self.sqrt1,
        };
        sample_normal(self.mean(side), root, count, seed)
    }

    /// Seeded draws from the bridge marginal at `t`.
    pub fn sample_marginal(&self, t: f64, count: usize, seed: u64) -> Result<PointCloud> {
        let (mean, cov) = self.marginal(t)?;
        sample_normal(&mean, &sym_fn(&cov, f64::sqrt), count, seed)
    }

    pub fn to_config(&self) -> GaussianPairConfig {
        GaussianPairConfig {
            mean0: self.mean0.iter().copied().collect(),
            mean1: self.mean1.iter().copied().collect(),
            cov0: row_major(&self.cov0),
            cov1: row_major(&self.cov1),
            epsilon: self.epsilon,
        }
    }
}

fn row_major(a: &DMatrix<f64>) -> Vec<f64> {
    a.transpose().iter().copied().collect()
}

fn sample_normal(mean: &DVector<f64>, root: &DMatrix<f64>, count: usize, seed: u64) -> Result<PointCloud> {
    let d = mean.len();
    let mut r = rng::stream(seed, 0);
    let mut out = Array2::zeros((count, d));
    let mut xi = DVector::zeros(d);
    for mut row in out.outer_iter_mut() {
        for x in xi.iter_mut() {
            *x = StandardNormal.sample(&mut r);
        }
        let p = mean + root * &xi;
        for (o, v) in row.iter_mut().zip(p.iter()) {
            *o = *v;
        }
    }
    PointCloud::new(out)
}

impl Drift for GaussianPair {
    fn dim(&self) -> usize {
        self.mean0.len()
    }

    fn drift_into(&self, z: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let b = self.gaussian_bridge_drift(z, t)?;
        out.copy_from_slice(&b);
        Ok(())
    }
}

/// The closed-form drift frozen at one time, for repeated evaluation.
#[derive(Debug, Clone)]
pub struct AffineDrift {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    pub t: f64,
}

impl AffineDrift {
    pub fn at(pair: &GaussianPair, t: f64) -> Result<Self> {
        let (a, c) = pair.drift_affine(t)?;
        Ok(Self { a, c, t })
    }
}

impl Drift for AffineDrift {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn drift_into(&self, z: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        if t != self.t {
            return Err(Error::Range(format!("affine drift frozen at t = {}, asked for {t}", self.t)));
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.c[i] + (0..z.len()).map(|k| self.a[(i, k)] * z[k]).sum::<f64>();
        }
        Ok(())
    }
}

/// Text form of a [`GaussianPair`]: means as arrays, covariances row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPairConfig {
    pub mean0: Vec<f64>,
    pub mean1: Vec<f64>,
    pub cov0: Vec<f64>,
    pub cov1: Vec<f64>,
    pub epsilon: f64,
}

impl GaussianPairConfig {
    pub fn build(&self) -> Result<GaussianPair> {
        let d = self.mean0.len();
        if self.cov0.len() != d * d || self.cov1.len() != d * d {
            return Err(Error::Config(format!("covariances must have {} entries", d * d)));
        }
        GaussianPair::new(
            DVector::from_vec(self.mean0.clone()),
            DMatrix::from_row_slice(d, d, &self.cov0),
            DVector::from_vec(self.mean1.clone()),
            DMatrix::from_row_slice(d, d, &self.cov1),
            self.epsilon,
        )
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// `Q Λ Qᵀ` with `Q` a seeded random orthogonal matrix (QR of a Gaussian
/// matrix, sign-corrected) and `Λ` uniform on `[lo, hi]`.
pub fn random_spd(d: usize, lo: f64, hi: f64, seed: u64) -> DMatrix<f64> {
    let mut r = rng::stream(seed, 0);
    let g: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut r));
    let qr = g.qr();
    let mut q = qr.q();
    let rdiag = qr.r().diagonal();
    for j in 0..d {
        if rdiag[j] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let spread = Uniform::new_inclusive(lo, hi).expect("lo <= hi");
    let lambda = DVector::from_fn(d, |_, _| spread.sample(&mut r));
    let b: DMatrix<f64> = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
    (&b + b.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair3() -> GaussianPair {
        GaussianPair::new(
            DVector::zeros(3),
            DMatrix::identity(3, 3),
            DVector::from_vec(vec![0.5, -0.2, 0.1]),
            random_spd(3, 0.5, 2.0, 7),
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn cross_covariance_solves_the_coupling_equation() {
        // Off-diagonal precision block of the joint law must be −I/ε.
        let p = pair3();
        let c = p.cross_covariance();
        let inv0 = p.cov(Side::Source).clone().try_inverse().unwrap();
        let lhs = &inv0 * c * p.epsilon();
        let rhs = p.cov(Side::Target) - c.transpose() * &inv0 * c;
        assert!((lhs - rhs).amax() < 1e-10);
    }

    #[test]
    fn one_dimensional_cross_covariance() {
        let p = GaussianPair::one_dimensional(0.0, 1.0, 0.0, 2.0, 0.1).unwrap();
        let expected = (-0.1 + (0.01f64 + 8.0).sqrt()) / 2.0;
        assert!((p.cross_covariance()[(0, 0)] - expected).abs() < 1e-14);
    }

    #[test]
    fn boundary_marginals() {
        let p = pair3();
        let (m0, c0) = p.marginal(0.0).unwrap();
        let (m1, c1) = p.marginal(1.0).unwrap();
        assert_eq!(&m0, p.mean(Side::Source));
        assert_eq!(&c0, p.cov(Side::Source));
        assert_eq!(&m1, p.mean(Side::Target));
        assert_eq!(&c1, p.cov(Side::Target));
        assert!(p.marginal(1.1).is_err());
    }

    #[test]
    fn symmetric_instance_has_zero_drift_at_origin() {
        let p = GaussianPair::one_dimensional(0.0, 1.5, 0.0, 1.5, 0.3).unwrap();
        for t in [0.0, 0.2, 0.7, 0.95] {
            assert!(p.gaussian_bridge_drift(&[0.0], t).unwrap()[0].abs() < 1e-14);
        }
    }

    #[test]
    fn drift_is_affine() {
        let p = pair3();
        let z1 = [0.3, -1.0, 2.0];
        let z2 = [-0.7, 0.4, 0.1];
        let alpha = 0.35;
        let mix: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        let t = 0.6;
        let b1 = p.gaussian_bridge_drift(&z1, t).unwrap();
        let b2 = p.gaussian_bridge_drift(&z2, t).unwrap();
        let bm = p.gaussian_bridge_drift(&mix, t).unwrap();
        for k in 0..3 {
            assert!((bm[k] - (alpha * b1[k] + (1.0 - alpha) * b2[k])).abs() < 1e-10);
        }
        assert!(matches!(p.gaussian_bridge_drift(&z1, 1.0), Err(Error::Range(_))));
    }

    #[test]
    fn marginal_covariance_obeys_the_fokker_planck_equation() {
        // dΣ/dt = AΣ + ΣAᵀ + εI for an affine drift.
        let p = pair3();
        for t in [0.1, 0.5, 0.85] {
            let h = 1e-5;
            let (_, lo) = p.marginal(t - h).unwrap();
            let (_, hi) = p.marginal(t + h).unwrap();
            let deriv = (hi - lo) / (2.0 * h);
            let (_, cov) = p.marginal(t).unwrap();
            let (a, _) = p.drift_affine(t).unwrap();
            let rhs = &a * &cov + &cov * a.transpose() + DMatrix::identity(3, 3) * p.epsilon();
            assert!((deriv - rhs).amax() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn sample_moments() {
        let p = GaussianPair::new(
            DVector::zeros(2),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])),
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            0.5,
        )
        .unwrap();
        let n = 100_000;
        let s = p.sample(Side::Source, n, 3).unwrap();
        let var = crate::sde::coordinate_variances(&s);
        assert!((var[0] - 1.0).abs() < 0.1 && (var[1] - 4.0).abs() < 0.4);
        let t = p.sample(Side::Target, n, 4).unwrap();
        for m in t.mean() {
            assert!(m.abs() < 4.0 / (n as f64).sqrt());
        }
        assert_eq!(p.sample(Side::Target, 1, 9).unwrap(), p.sample(Side::Target, 1, 9).unwrap());
    }

    #[test]
    fn rejects_non_spd() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianPair::new(DVector::zeros(2), bad, DVector::zeros(2), DMatrix::identity(2, 2), 1.0).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(GaussianPair::new(DVector::zeros(2), asym, DVector::zeros(2), DMatrix::identity(2, 2), 1.0).is_err());
    }

    #[test]
    fn random_spd_spectrum() {
        let b = random_spd(3, 0.5, 2.0, 11);
        let eig = SymmetricEigen::new(b).eigenvalues;
        assert!(eig.iter().all(|l| (0.5 - 1e-12..=2.0 + 1e-12).contains(l)));
    }

    #[test]
    fn config_round_trip() {
        let p = pair3();
        let text = p.to_config().to_toml().unwrap();
        let back = GaussianPairConfig::from_toml(&text).unwrap().build().unwrap();
        assert_eq!(back.mean(Side::Target), p.mean(Side::Target));
        assert!((back.cov(Side::Target) - p.cov(Side::Target)).amax() == 0.0);
    }
}
