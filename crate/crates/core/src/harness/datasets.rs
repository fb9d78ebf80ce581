//! Point-cloud generators for the experiments.

use std::f64::consts::PI;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::rng;

/// Uniform on the closed ball `B(0, radius)`.
pub fn uniform_ball(count: usize, dim: usize, radius: f64, seed: u64) -> Result<PointCloud> {
    let mut r = rng::stream(seed, 0);
    let mut pts = Array2::zeros((count, dim));
    let mut z = vec![0.0; dim];
    for mut row in pts.outer_iter_mut() {
        let norm = loop {
            rng::fill_standard_normal(&mut r, &mut z);
            let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                break n;
            }
        };
        let scale = radius * r.random::<f64>().powf(1.0 / dim as f64) / norm;
        for (x, v) in row.iter_mut().zip(&z) {
            *x = v * scale;
        }
    }
    PointCloud::new(pts)
}

/// Uniform on `[0, 1]^dim`.
pub fn uniform_cube(count: usize, dim: usize, seed: u64) -> Result<PointCloud> {
    let mut r = rng::stream(seed, 0);
    PointCloud::new(Array2::from_shape_simple_fn((count, dim), || r.random::<f64>()))
}

/// Uniform on the unit sphere of the first `intrinsic` coordinates of
/// `R^dim`; the remaining coordinates are exactly zero.
pub fn sphere_slice(count: usize, dim: usize, intrinsic: usize, seed: u64) -> Result<PointCloud> {
    if intrinsic == 0 || intrinsic > dim {
        return Err(Error::Config(format!("intrinsic dimension {intrinsic} must lie in 1..={dim}")));
    }
    let mut r = rng::stream(seed, 0);
    let mut pts = Array2::zeros((count, dim));
    let mut z = vec![0.0; intrinsic];
    for mut row in pts.outer_iter_mut() {
        let norm = loop {
            rng::fill_standard_normal(&mut r, &mut z);
            let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                break n;
            }
        };
        for k in 0..intrinsic {
            row[k] = z[k] / norm;
        }
    }
    PointCloud::new(pts)
}

/// Mixture of eight isotropic Gaussians centred on the circle of radius
/// `scale`, each with variance `var`.
pub fn eight_gaussians(count: usize, scale: f64, var: f64, seed: u64) -> Result<PointCloud> {
    let mut r = rng::stream(seed, 0);
    let sd = var.sqrt();
    let mut pts = Array2::zeros((count, 2));
    let mut z = [0.0; 2];
    for mut row in pts.outer_iter_mut() {
        let c = r.random_range(0..8) as f64 * PI / 4.0;
        rng::fill_standard_normal(&mut r, &mut z);
        row[0] = scale * c.cos() + sd * z[0];
        row[1] = scale * c.sin() + sd * z[1];
    }
    PointCloud::new(pts)
}

/// Two interleaved half circles on evenly spaced angles with Gaussian
/// noise, mapped by `x ↦ 3x − 1`.
pub fn moons(count: usize, noise: f64, seed: u64) -> Result<PointCloud> {
    let mut r = rng::stream(seed, 0);
    let n_out = count / 2;
    let n_in = count - n_out;
    let angles = |k: usize, of: usize| if of > 1 { PI * k as f64 / (of - 1) as f64 } else { 0.0 };
    let mut pts = Array2::zeros((count, 2));
    let mut z = [0.0; 2];
    for i in 0..count {
        let (x, y) = if i < n_out {
            let a = angles(i, n_out);
            (a.cos(), a.sin())
        } else {
            let a = angles(i - n_out, n_in);
            (1.0 - a.cos(), 0.5 - a.sin())
        };
        rng::fill_standard_normal(&mut r, &mut z);
        pts[[i, 0]] = 3.0 * (x + noise * z[0]) - 1.0;
        pts[[i, 1]] = 3.0 * (y + noise * z[1]) - 1.0;
    }
    PointCloud::new(pts)
}

/// Named samplers usable from configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Dataset {
    EightGaussians {
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default = "default_var")]
        var: f64,
    },
    Moons {
        #[serde(default = "default_noise")]
        noise: f64,
    },
    UnitBall {
        dim: usize,
    },
    Cube {
        dim: usize,
    },
    SphereSlice {
        dim: usize,
        intrinsic: usize,
    },
    StandardNormal {
        dim: usize,
    },
}

fn default_scale() -> f64 {
    5.0
}
fn default_var() -> f64 {
    0.1
}
fn default_noise() -> f64 {
    0.2
}

impl Dataset {
    pub fn dim(&self) -> usize {
        match *self {
            Dataset::EightGaussians { .. } | Dataset::Moons { .. } => 2,
            Dataset::UnitBall { dim } | Dataset::Cube { dim } | Dataset::StandardNormal { dim } => dim,
            Dataset::SphereSlice { dim, .. } => dim,
        }
    }

    pub fn sample(&self, count: usize, seed: u64) -> Result<PointCloud> {
        match *self {
            Dataset::EightGaussians { scale, var } => eight_gaussians(count, scale, var, seed),
            Dataset::Moons { noise } => moons(count, noise, seed),
            Dataset::UnitBall { dim } => uniform_ball(count, dim, 1.0, seed),
            Dataset::Cube { dim } => uniform_cube(count, dim, seed),
            Dataset::SphereSlice { dim, intrinsic } => sphere_slice(count, dim, intrinsic, seed),
            Dataset::StandardNormal { dim } => {
                let mut r = rng::stream(seed, 0);
                let mut pts = Array2::zeros((count, dim));
                rng::fill_standard_normal(&mut r, pts.as_slice_mut().expect("fresh array"));
                PointCloud::new(pts)
            }
        }
    }
}

impl FromStr for Dataset {
    type Err = Error;

    /// Short names for the two planar datasets.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eight-gaussians" => Ok(Dataset::EightGaussians { scale: default_scale(), var: default_var() }),
            "moons" => Ok(Dataset::Moons { noise: default_noise() }),
            other => Err(Error::Config(format!("unknown dataset {other:?}"))),
        }
    }
}
