//! Synthetic end-to-end training: a learnable 1×1 projection feeds
//! second-order pooling and a softmax classifier, trained with RMSprop.
//!
//! Every class shares the same feature distribution; only the grid cell
//! holding the object blob differs, so the classes are separable only
//! through the spatial codes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::linalg::{dot, sym, Matrix};
use crate::pipeline::{pool_backward, pool_forward};
use crate::synth::gaussian_matrix;

pub const DEMO_GRID: (usize, usize) = (4, 4);
pub const DEMO_INPUT_DIM: usize = 8;
pub const DEMO_FEATURE_DIM: usize = 8;
pub const SAMPLES_PER_CLASS: usize = 200;
pub const BATCH_SIZE: usize = 32;
const BACKGROUND_STD: f64 = 0.1;
const BLOB_STD: f64 = 0.05;

/// RMSprop: `v ← ρ·v + (1 − ρ)·g²`, `θ ← θ − lr·g / (√v + ε)`.
#[derive(Clone, Debug)]
pub struct Rmsprop {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    cache: Vec<f64>,
}

impl Rmsprop {
    pub fn new(lr: f64, len: usize) -> Self {
        Rmsprop {
            lr,
            decay: 0.99,
            eps: 1e-8,
            cache: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.cache.len());
        assert_eq!(grads.len(), self.cache.len());
        for ((p, &g), v) in params.iter_mut().zip(grads).zip(self.cache.iter_mut()) {
            *v = self.decay * *v + (1.0 - self.decay) * g * g;
            *p -= self.lr * g / (v.sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    /// `DEMO_INPUT_DIM × (W·H)` raw input, columns row-major over the grid.
    pub input: Matrix,
    pub label: usize,
}

/// Cell holding class `k`'s blob: classes are spread along the grid's
/// anti-diagonal sweep so neighbouring labels sit far apart.
pub fn class_cell(k: usize, classes: usize, grid: (usize, usize)) -> usize {
    let cells = grid.0 * grid.1;
    if classes <= 1 {
        return 0;
    }
    (k * (cells - 1) + (classes - 1) / 2) / (classes - 1)
}

/// `samples_per_class` samples per class: half-normal background noise
/// everywhere plus one shared-distribution blob at the class cell.
pub fn make_dataset(classes: usize, samples_per_class: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = DEMO_GRID.0 * DEMO_GRID.1;
    let background = Normal::new(0.0, BACKGROUND_STD).expect("valid std");
    let blob_noise = Normal::new(0.0, BLOB_STD).expect("valid std");
    let blob_mean: Vec<f64> = (0..DEMO_INPUT_DIM).map(|_| rng.random_range(0.2..0.6)).collect();
    let mut data = Vec::with_capacity(classes * samples_per_class);
    for _ in 0..samples_per_class {
        for label in 0..classes {
            let mut input = Matrix::from_fn(DEMO_INPUT_DIM, cells, |_, _| background.sample(&mut rng).abs());
            let cell = class_cell(label, classes, DEMO_GRID);
            for (i, &mu) in blob_mean.iter().enumerate() {
                input[(i, cell)] = (mu + blob_noise.sample(&mut rng)).max(0.0);
            }
            data.push(Sample { input, label });
        }
    }
    data
}

/// Projection `P` (`d × d_in`), classifier weights (one `D × D` matrix per
/// class, `D = d + Z'`) and biases, flattened into one parameter vector.
#[derive(Clone, Debug)]
struct Model {
    params: Vec<f64>,
    classes: usize,
    pooled_dim: usize,
}

impl Model {
    fn new(classes: usize, pooled_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let proj = gaussian_matrix(rng, DEMO_FEATURE_DIM, DEMO_INPUT_DIM).scale(1.0 / (DEMO_INPUT_DIM as f64).sqrt());
        let mut params = proj.into_vec();
        params.resize(params.len() + classes * pooled_dim * pooled_dim + classes, 0.0);
        Model { params, classes, pooled_dim }
    }

    fn proj_len(&self) -> usize {
        DEMO_FEATURE_DIM * DEMO_INPUT_DIM
    }

    fn projection(&self) -> Matrix {
        Matrix::from_vec(DEMO_FEATURE_DIM, DEMO_INPUT_DIM, self.params[..self.proj_len()].to_vec())
            .expect("sized on construction")
    }

    fn class_weights(&self, k: usize) -> &[f64] {
        let sq = self.pooled_dim * self.pooled_dim;
        let start = self.proj_len() + k * sq;
        &self.params[start..start + sq]
    }

    fn bias(&self, k: usize) -> f64 {
        self.params[self.params.len() - self.classes + k]
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Loss of one sample and, if requested, its parameter gradient.
fn sample_loss(model: &Model, sample: &Sample, cfg: &RunConfig, with_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
    let proj = model.projection();
    let y = proj.matmul(&sample.input);
    let pooled = pool_forward(&y, DEMO_GRID, cfg)?;
    let psi = pooled.psi.data();
    let logits: Vec<f64> = (0..model.classes)
        .map(|k| dot(model.class_weights(k), psi) + model.bias(k))
        .collect();
    let probs = softmax(&logits);
    let loss = -probs[sample.label].max(f64::MIN_POSITIVE).ln();
    if !with_grad {
        return Ok((loss, None));
    }
    let mut grad = vec![0.0; model.params.len()];
    let dim = model.pooled_dim;
    let mut d_psi = Matrix::zeros(dim, dim);
    let sq = dim * dim;
    for k in 0..model.classes {
        let delta = probs[k] - if k == sample.label { 1.0 } else { 0.0 };
        let start = model.proj_len() + k * sq;
        for (g, &p) in grad[start..start + sq].iter_mut().zip(psi) {
            *g = delta * p;
        }
        let bias_idx = grad.len() - model.classes + k;
        grad[bias_idx] = delta;
        for (g, &w) in d_psi.data_mut().iter_mut().zip(model.class_weights(k)) {
            *g += delta * w;
        }
    }
    let upstream = sym(&d_psi)?;
    let d_y = pool_backward(&pooled, &upstream, cfg)?;
    let d_proj = d_y.matmul_t(&sample.input);
    grad[..model.proj_len()].copy_from_slice(d_proj.data());
    Ok((loss, Some(grad)))
}

fn mean_loss(model: &Model, data: &[Sample], cfg: &RunConfig) -> Result<f64> {
    let losses: Vec<f64> = data
        .par_iter()
        .map(|s| sample_loss(model, s, cfg, false).map(|(l, _)| l))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / data.len() as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct DemoReport {
    pub command: &'static str,
    pub kind: crate::pn::PoolKind,
    pub alpha: f64,
    pub classes: usize,
    pub samples: usize,
    pub epochs: usize,
    /// Mean training loss before training and after each epoch.
    pub loss_curve: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub accuracy: f64,
}

/// Trains on `cfg.classes × 200` synthetic samples for `cfg.epochs` epochs of
/// shuffled minibatches of 32.
pub fn cmd_demo_train(cfg: &RunConfig) -> Result<DemoReport> {
    cfg.validate()?;
    if cfg.classes < 2 {
        return Err(Error::Config(format!("demo needs at least 2 classes, got {}", cfg.classes)));
    }
    if cfg.spectral.is_some() {
        return Err(Error::Config("the training demo uses element-wise pooling".into()));
    }
    let data = make_dataset(cfg.classes, SAMPLES_PER_CLASS, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xdead_beef);
    let pooled_dim = DEMO_FEATURE_DIM + cfg.code_dim();
    let mut model = Model::new(cfg.classes, pooled_dim, &mut rng);
    let mut opt = Rmsprop::new(cfg.lr, model.params.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = vec![mean_loss(&model, &data, cfg)?];
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(BATCH_SIZE) {
            let grads: Vec<Vec<f64>> = batch
                .par_iter()
                .map(|&i| sample_loss(&model, &data[i], cfg, true).map(|(_, g)| g.expect("requested")))
                .collect::<Result<_>>()?;
            let mut total = vec![0.0; model.params.len()];
            for g in &grads {
                total.iter_mut().zip(g).for_each(|(t, x)| *t += x);
            }
            let scale = 1.0 / batch.len() as f64;
            total.iter_mut().for_each(|t| *t *= scale);
            if total.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!("gradient diverged at step {step} (epoch {epoch})")));
            }
            opt.step(&mut model.params, &total);
            step += 1;
        }
        let loss = mean_loss(&model, &data, cfg)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("loss diverged at step {step} (epoch {epoch})")));
        }
        curve.push(loss);
    }
    let correct: usize = data
        .par_iter()
        .map(|s| predict(&model, s, cfg).map(|k| (k == s.label) as usize))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(DemoReport {
        command: "demo-train",
        kind: cfg.pn.kind,
        alpha: cfg.alpha,
        classes: cfg.classes,
        samples: data.len(),
        epochs: cfg.epochs,
        initial_loss: curve[0],
        final_loss: *curve.last().expect("non-empty"),
        loss_curve: curve,
        accuracy: correct as f64 / data.len() as f64,
    })
}

fn predict(model: &Model, sample: &Sample, cfg: &RunConfig) -> Result<usize> {
    let y = model.projection().matmul(&sample.input);
    let psi = pool_forward(&y, DEMO_GRID, cfg)?.psi;
    let scores: Vec<f64> = (0..model.classes)
        .map(|k| dot(model.class_weights(k), psi.data()) + model.bias(k))
        .collect();
    Ok(scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0))
}
