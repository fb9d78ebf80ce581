//! Point clouds and their on-disk formats.
//!
//! Two formats are supported:
//!
//! * CSV, one point per row, `d` columns, no header.
//! * A binary dump: 16-byte header (`b"SBPC"`, `u32` LE point count, `u32` LE
//!   dimension, `u32` reserved zero) followed by the coordinates as
//!   little-endian `f64` in column-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

pub const CLOUD_MAGIC: &[u8; 4] = b"SBPC";

/// An ordered set of `d`-dimensional points, the support of a uniform
/// empirical measure.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Array2<f64>,
    radius: f64,
}

impl PointCloud {
    /// Builds a cloud from an `m × d` array. Rejects empty clouds, zero
    /// dimension and non-finite coordinates.
    pub fn new(points: Array2<f64>) -> Result<Self> {
        let (m, d) = points.dim();
        if m == 0 {
            return Err(Error::Dimension("point cloud must contain at least one point".into()));
        }
        if d == 0 {
            return Err(Error::Dimension("point dimension must be at least 1".into()));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("point coordinates must be finite".into()));
        }
        let radius = points
            .rows()
            .into_iter()
            .map(|p| p.dot(&p).sqrt())
            .fold(0.0, f64::max);
        Ok(Self { points, radius })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Dimension(format!(
                "row {bad} has {} coordinates, expected {d}",
                rows[bad].len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let points = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Self::new(points)
    }

    /// One-dimensional cloud from scalar values.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        let points = Array2::from_shape_vec((values.len(), 1), values.to_vec())
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Maximum Euclidean norm over the points.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn into_points(self) -> Array2<f64> {
        self.points
    }

    /// Squared norms of every point.
    pub fn squared_norms(&self) -> Vec<f64> {
        self.points.rows().into_iter().map(|p| p.dot(&p)).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.points
            .mean_axis(Axis(0))
            .expect("cloud is non-empty")
            .to_vec()
    }

    /// Sub-cloud of the given rows, in the given order (duplicates allowed).
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        Self::new(self.points.select(Axis(0), rows))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .map(|field| {
                    field.parse::<f64>().map_err(|e| Error::Format {
                        path: path.to_path_buf(),
                        reason: format!("line {}: {e}", line + 1),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for p in self.points.rows() {
            let line: Vec<String> = p.iter().map(|x| x.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::decode_binary(&bytes).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })?
    }

    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&self.encode_binary())?;
        out.flush()?;
        Ok(())
    }

    pub fn encode_binary(&self) -> Vec<u8> {
        let (m, d) = self.points.dim();
        let mut buf = Vec::with_capacity(16 + 8 * m * d);
        buf.extend_from_slice(CLOUD_MAGIC);
        buf.extend_from_slice(&(m as u32).to_le_bytes());
        buf.extend_from_slice(&(d as u32).to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        for col in self.points.columns() {
            for x in col {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        buf
    }

    /// Outer error is the header/layout problem; inner is cloud validation.
    pub fn decode_binary(bytes: &[u8]) -> std::result::Result<Result<Self>, String> {
        if bytes.len() < 16 || &bytes[..4] != CLOUD_MAGIC {
            return Err("missing SBPC header".into());
        }
        let m = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() != 8 * m * d {
            return Err(format!(
                "expected {} payload bytes for {m}x{d}, found {}",
                8 * m * d,
                body.len()
            ));
        }
        let mut points = Array2::zeros((m, d));
        for (k, chunk) in body.chunks_exact(8).enumerate() {
            let (col, row) = (k / m, k % m);
            points[[row, col]] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(Self::new(points))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn radius_is_max_norm() {
        let c = PointCloud::new(array![[3.0, 4.0], [1.0, 0.0], [0.0, -6.0]]).unwrap();
        assert_eq!(c.radius(), 6.0);
        assert_eq!(c.dim(), 2);
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn rejects_ragged_and_empty() {
        assert!(PointCloud::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(PointCloud::from_rows(&[]).is_err());
        assert!(PointCloud::new(Array2::zeros((3, 0))).is_err());
        assert!(PointCloud::from_scalars(&[f64::NAN]).is_err());
    }

    #[test]
    fn binary_layout_is_column_major() {
        let c = PointCloud::new(array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let bytes = c.encode_binary();
        assert_eq!(&bytes[..4], b"SBPC");
        assert_eq!(bytes.len(), 16 + 32);
        let second = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
        assert_eq!(second, 3.0);
        let back = PointCloud::decode_binary(&bytes).unwrap().unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn binary_rejects_truncation() {
        let c = PointCloud::new(array![[1.0, 2.0]]).unwrap();
        let bytes = c.encode_binary();
        assert!(PointCloud::decode_binary(&bytes[..20]).is_err());
        assert!(PointCloud::decode_binary(b"XXXX").is_err());
    }

    #[test]
    fn csv_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.csv");
        let c = PointCloud::new(array![[0.1, -2.5e-7], [1.0 / 3.0, 7.0]]).unwrap();
        c.write_csv(&path).unwrap();
        assert_eq!(PointCloud::read_csv(&path).unwrap(), c);
        let bin = dir.path().join("cloud.bin");
        c.write_binary(&bin).unwrap();
        assert_eq!(PointCloud::read_binary(&bin).unwrap(), c);
    }
}
