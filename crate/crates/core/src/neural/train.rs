use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

use super::mlp::{Gradients, MlpModel};
use super::optim::AdamW;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_steps: usize,
    pub tau: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(max_steps: usize, tau: f64, seed: u64) -> Result<Self> {
        Self { batch_size: 4096, lr: 1e-3, weight_decay: 1e-5, max_steps, tau, seed }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight decay must be nonnegative, got {}", self.weight_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(self)
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Result<Self> {
        self.batch_size = batch_size;
        self.validated()
    }

    pub fn with_lr(mut self, lr: f64) -> Result<Self> {
        self.lr = lr;
        self.validated()
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Result<Self> {
        self.weight_decay = weight_decay;
        self.validated()
    }
}

/// Regression pairs: rows of `inputs` are `(x_t, t)`, rows of `targets`
/// are `(x₁ − x_t)/(1 − t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }
}

/// Categorical sampler over the cells of a coupling, built once per
/// training run.
#[derive(Debug, Clone)]
pub struct PairSampler {
    cells: WeightedIndex<f64>,
    source: PointCloud,
    targets: PointCloud,
    epsilon: f64,
}

impl PairSampler {
    pub fn new(coupling: ArrayView2<'_, f64>, source: &PointCloud, targets: &PointCloud, epsilon: f64) -> Result<Self> {
        if coupling.dim() != (source.len(), targets.len()) {
            return Err(Error::Dimension(format!(
                "coupling is {:?}, clouds have {} and {} points",
                coupling.dim(),
                source.len(),
                targets.len()
            )));
        }
        if source.dim() != targets.dim() {
            return Err(Error::Dimension("source and target dimensions differ".into()));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Domain(format!("epsilon must be nonnegative, got {epsilon}")));
        }
        let cells = WeightedIndex::new(coupling.iter().copied())
            .map_err(|e| Error::Domain(format!("invalid coupling: {e}")))?;
        Ok(Self { cells, source: source.clone(), targets: targets.clone(), epsilon })
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    /// Flat cell index `i * n + j`.
    pub fn sample_cell(&self, rng: &mut Stream) -> (usize, usize) {
        let c = self.cells.sample(rng);
        (c / self.targets.len(), c % self.targets.len())
    }

    pub fn sample(&self, batch_size: usize, tau: f64, rng: &mut Stream) -> TrainBatch {
        let d = self.dim();
        let mut inputs = Array2::zeros((batch_size, d + 1));
        let mut targets = Array2::zeros((batch_size, d));
        let mut noise = vec![0.0; d];
        for r in 0..batch_size {
            let (i, j) = self.sample_cell(rng);
            let t: f64 = rng.random_range(0.0..tau);
            rng::fill_standard_normal(rng, &mut noise);
            let sd = (self.epsilon * t * (1.0 - t)).sqrt();
            let (x0, x1) = (self.source.point(i), self.targets.point(j));
            for k in 0..d {
                let xt = (1.0 - t) * x0[k] + t * x1[k] + sd * noise[k];
                inputs[[r, k]] = xt;
                targets[[r, k]] = (x1[k] - xt) / (1.0 - t);
            }
            inputs[[r, d]] = t;
        }
        TrainBatch { inputs, targets }
    }
}

pub fn sample_training_batch(
    coupling: ArrayView2<'_, f64>,
    source: &PointCloud,
    targets: &PointCloud,
    epsilon: f64,
    cfg: &TrainConfig,
    rng: &mut Stream,
) -> Result<TrainBatch> {
    Ok(PairSampler::new(coupling, source, targets, epsilon)?.sample(cfg.batch_size, cfg.tau, rng))
}

pub fn loss_eval(model: &MlpModel, batch: &TrainBatch) -> Result<f64> {
    model.loss(&batch.inputs, &batch.targets)
}

pub fn grad_params(model: &MlpModel, batch: &TrainBatch) -> Result<Gradients> {
    Ok(model.loss_and_grad(&batch.inputs, &batch.targets)?.1)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Minibatch loss before each optimizer step.
    pub losses: Vec<f64>,
}

/// AdamW on fresh minibatches, one per step. Batches come from
/// `stream(cfg.seed, step)` so the curve depends only on the inputs.
pub fn train(sampler: &PairSampler, mut model: MlpModel, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if model.input_dim() != sampler.dim() + 1 || model.output_dim() != sampler.dim() {
        return Err(Error::Dimension(format!(
            "network widths {:?} do not fit {}-dimensional data",
            model.layer_dims(),
            sampler.dim()
        )));
    }
    let mut opt = AdamW::new(model.params().len(), cfg.lr, cfg.weight_decay);
    let mut losses = Vec::with_capacity(cfg.max_steps);
    for step in 0..cfg.max_steps {
        let mut r = rng::stream(cfg.seed, step as u64);
        let batch = sampler.sample(cfg.batch_size, cfg.tau, &mut r);
        let (loss, grad) = model.loss_and_grad(&batch.inputs, &batch.targets)?;
        if !loss.is_finite() || grad.0.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training(step));
        }
        losses.push(loss);
        opt.step(model.params_mut(), &grad.0);
    }
    Ok(TrainOutcome { model, losses })
}

pub fn write_loss_curve(path: impl AsRef<Path>, losses: &[f64]) -> Result<()> {
    write_loss_curve_to(BufWriter::new(File::create(path)?), losses)
}

/// CSV with header `step,loss`.
pub fn write_loss_curve_to<W: Write>(mut out: W, losses: &[f64]) -> Result<()> {
    writeln!(out, "step,loss")?;
    for (k, l) in losses.iter().enumerate() {
        writeln!(out, "{k},{l}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> (PointCloud, PointCloud, Array2<f64>) {
        let x = PointCloud::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.5]]).unwrap();
        let y = PointCloud::from_rows(&[vec![2.0, -1.0], vec![-1.0, 3.0]]).unwrap();
        (x, y, array![[0.4, 0.1], [0.1, 0.4]])
    }

    #[test]
    fn tau_must_be_open_interval() {
        assert!(TrainConfig::new(10, 0.0, 0).is_err());
        assert!(TrainConfig::new(10, 1.0, 0).is_err());
        assert!(TrainConfig::new(10, 0.9, 0).unwrap().with_lr(0.0).is_err());
        assert!(TrainConfig::new(10, 0.9, 0).unwrap().with_batch_size(0).is_err());
    }

    #[test]
    fn noiseless_single_pair_targets() {
        let x = PointCloud::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let y = PointCloud::from_rows(&[vec![3.0, 2.0]]).unwrap();
        let cfg = TrainConfig::new(1, 0.9, 0).unwrap().with_batch_size(64).unwrap();
        let b = sample_training_batch(array![[1.0]].view(), &x, &y, 0.0, &cfg, &mut rng::stream(1, 0)).unwrap();
        for (inp, tgt) in b.inputs.outer_iter().zip(b.targets.outer_iter()) {
            let t = inp[2];
            assert!((0.0..0.9).contains(&t));
            for k in 0..2 {
                let on_segment = (1.0 - t) * x.point(0)[k] + t * y.point(0)[k];
                assert!((inp[k] - on_segment).abs() < 1e-12);
                assert!((tgt[k] - (y.point(0)[k] - inp[k]) / (1.0 - t)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_model_loss_is_mean_squared_target() {
        let (x, y, c) = tiny();
        let cfg = TrainConfig::new(1, 0.5, 0).unwrap().with_batch_size(32).unwrap();
        let b = sample_training_batch(c.view(), &x, &y, 0.2, &cfg, &mut rng::stream(2, 0)).unwrap();
        let dims = vec![3, 4, 2];
        let n = MlpModel::new(dims.clone(), 0).unwrap().params().len();
        let zero = MlpModel::from_params(dims, vec![0.0; n]).unwrap();
        let expected = b.targets.iter().map(|v| v * v).sum::<f64>() / 32.0;
        assert!((loss_eval(&zero, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn exact_linear_model_has_zero_loss() {
        let batch = TrainBatch { inputs: array![[1.0, 0.2], [-3.0, 0.7]], targets: array![[5.0], [5.0]] };
        let model = MlpModel::from_params(vec![2, 1], vec![0.0, 0.0, 5.0]).unwrap();
        assert_eq!(loss_eval(&model, &batch).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_units_get_equal_gradients() {
        // Zero weights make the two hidden units interchangeable.
        let dims = vec![2, 2, 1];
        let n = MlpModel::new(dims.clone(), 0).unwrap().params().len();
        let mut p = vec![0.0; n];
        p[6] = 0.7;
        p[7] = 0.7; // equal outgoing weights
        let model = MlpModel::from_params(dims, p).unwrap();
        let batch = TrainBatch { inputs: array![[1.0, 0.1], [-1.0, 0.1]], targets: array![[1.0], [1.0]] };
        let g = grad_params(&model, &batch).unwrap().0;
        assert_eq!(g[0..2], g[2..4]);
        assert_eq!(g[4], g[5]);
        assert_eq!(g[6], g[7]);
    }

    #[test]
    fn training_halves_the_loss() {
        let mut r = rng::stream(4, 0);
        let mut rows = |k: usize| (0..k).map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect::<Vec<_>>();
        let x = PointCloud::from_rows(&rows(8)).unwrap();
        let y = PointCloud::from_rows(&rows(8)).unwrap();
        let c = Array2::from_diag_elem(8, 1.0 / 8.0);
        let sampler = PairSampler::new(c.view(), &x, &y, 0.01).unwrap();
        let cfg = TrainConfig::new(200, 0.5, 9).unwrap().with_batch_size(256).unwrap().with_lr(1e-2).unwrap();
        let out = train(&sampler, MlpModel::for_drift(2, &[32, 32], 1).unwrap(), &cfg).unwrap();
        let head: f64 = out.losses[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = out.losses[190..].iter().sum::<f64>() / 10.0;
        assert!(tail <= 0.5 * head, "{head} -> {tail}");
        let again = train(&sampler, MlpModel::for_drift(2, &[32, 32], 1).unwrap(), &cfg).unwrap();
        assert_eq!(out.losses, again.losses);
    }

    #[test]
    fn loss_curve_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("loss.csv");
        write_loss_curve(&p, &[1.5, 0.25]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "step,loss\n0,1.5\n1,0.25\n");
    }
}
