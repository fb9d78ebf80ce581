use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::drift::Drift;
use crate::error::{Error, Result};
use crate::rng;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SBNN";

/// Nonlinearity applied between dense layers (not after the last).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `x · sigmoid(x)`.
    Silu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x / (1.0 + (-x).exp()),
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            }
        }
    }
}

/// Dense network with all parameters in one flat buffer. Layer `l` stores
/// its weight matrix (`dims[l+1] × dims[l]`, row-major) followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    params: Vec<f64>,
    activation: Activation,
}

/// Gradient with the same layout as [`MlpModel::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

struct Tape {
    /// Input to each layer (activations after the nonlinearity).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of every hidden layer.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl MlpModel {
    /// PyTorch-style uniform initialization `U(−1/√fan_in, 1/√fan_in)`.
    pub fn new(layer_dims: Vec<usize>, seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {layer_dims:?}")));
        }
        let mut r = rng::stream(seed, 0);
        let mut params = Vec::with_capacity(param_count(&layer_dims));
        for w in layer_dims.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[1] * w[0] + w[1]) {
                params.push(r.random_range(-bound..bound));
            }
        }
        Ok(Self { layer_dims, params, activation: Activation::Silu })
    }

    /// Network for `d`-dimensional drifts: input `(z, t)`, output `b`.
    pub fn for_drift(d: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut dims = vec![d + 1];
        dims.extend_from_slice(hidden);
        dims.push(d);
        Self::new(dims, seed)
    }

    pub fn from_params(layer_dims: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {layer_dims:?}")));
        }
        if params.len() != param_count(&layer_dims) {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                param_count(&layer_dims),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("parameters must be finite".into()));
        }
        Ok(Self { layer_dims, params, activation: Activation::Silu })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least two layers")
    }

    pub fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    /// Offset of layer `l`'s weights in the flat buffer, and its bias offset.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let start = param_count(&self.layer_dims[..=l]);
        let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
        (start, start + fan_in * fan_out)
    }

    fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let (w, b) = self.layer_offsets(l);
        let shape = (self.layer_dims[l + 1], self.layer_dims[l]);
        ArrayView2::from_shape(shape, &self.params[w..b]).expect("layer shape")
    }

    fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let (_, b) = self.layer_offsets(l);
        ArrayView1::from(&self.params[b..b + self.layer_dims[l + 1]])
    }

    fn forward_tape(&self, input: &Array2<f64>) -> Result<Tape> {
        if input.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} columns, network expects {}",
                input.ncols(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.n_layers());
        let mut pre = Vec::with_capacity(self.n_layers() - 1);
        let mut a = input.clone();
        for l in 0..self.n_layers() {
            let mut z = a.dot(&self.weight(l).t());
            z += &self.bias(l);
            inputs.push(a);
            if l + 1 == self.n_layers() {
                return Ok(Tape { inputs, pre, output: z });
            }
            a = z.mapv(|x| self.activation.apply(x));
            pre.push(z);
        }
        unreachable!("loop returns on the last layer")
    }

    /// Batched forward pass, one row per sample.
    pub fn forward(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_tape(input)?.output)
    }

    /// Loss `(1/N) Σ‖out − target‖²` and its gradient by reverse mode.
    pub fn loss_and_grad(&self, input: &Array2<f64>, target: &Array2<f64>) -> Result<(f64, Gradients)> {
        let tape = self.forward_tape(input)?;
        if target.dim() != tape.output.dim() {
            return Err(Error::Dimension("target shape does not match output".into()));
        }
        let n = input.nrows() as f64;
        let residual = &tape.output - target;
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / n;
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = residual * (2.0 / n);
        for l in (0..self.n_layers()).rev() {
            let (w_off, b_off) = self.layer_offsets(l);
            let gw = delta.t().dot(&tape.inputs[l]);
            grad[w_off..b_off].copy_from_slice(gw.as_standard_layout().as_slice().expect("contiguous"));
            let gb = delta.sum_axis(Axis(0));
            grad[b_off..b_off + gb.len()].copy_from_slice(gb.as_slice().expect("contiguous"));
            if l > 0 {
                let mut back = delta.dot(&self.weight(l));
                ndarray::Zip::from(&mut back)
                    .and(&tape.pre[l - 1])
                    .for_each(|g, &z| *g *= self.activation.derivative(z));
                delta = back;
            }
        }
        Ok((loss, Gradients(grad)))
    }

    pub fn loss(&self, input: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
        let out = self.forward(input)?;
        if target.dim() != out.dim() {
            return Err(Error::Dimension("target shape does not match output".into()));
        }
        Ok((&out - target).iter().map(|r| r * r).sum::<f64>() / input.nrows() as f64)
    }

    /// Checkpoint bytes: `b"SBNN"`, `u32` LE layer count, the widths as
    /// `u32` LE, then the parameters as `f64` LE in layer order (weights
    /// row-major, then bias).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.layer_dims.len() + 8 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(self.layer_dims.len() as u32).to_le_bytes());
        for &w in &self.layer_dims {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Inverse of [`MlpModel::to_bytes`]; the outer error describes a
    /// malformed layout.
    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Result<Self>, String> {
        if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err("missing SBNN header".into());
        }
        let n_dims = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dims_end = 8usize.saturating_add(n_dims.saturating_mul(4));
        if bytes.len() < dims_end {
            return Err("truncated layer widths".into());
        }
        let dims: Vec<usize> = bytes[8..dims_end]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let body = &bytes[dims_end..];
        if body.len() % 8 != 0 {
            return Err("parameter payload is not a whole number of f64".into());
        }
        let params = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self::from_params(dims, params))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&self.to_bytes())?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes).map_err(|reason| Error::Format { path: path.to_path_buf(), reason })?
    }
}

impl Drift for MlpModel {
    fn dim(&self) -> usize {
        self.output_dim()
    }

    fn drift_into(&self, z: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let mut input = Array2::zeros((1, z.len() + 1));
        for (k, v) in z.iter().enumerate() {
            input[[0, k]] = *v;
        }
        input[[0, z.len()]] = t;
        let y = self.forward(&input)?;
        out.copy_from_slice(y.row(0).as_slice().expect("contiguous"));
        Ok(())
    }
}
