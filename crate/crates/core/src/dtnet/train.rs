use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::net::{cross_entropy, one_hot, DTNetArch, DTNetModel, DenseLayer, Dropout, Gradients};
use crate::error::{Error, Result};
use crate::util;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Record the full-set loss before training and after every epoch.
    pub record_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            learning_rate: 0.01,
            dropout_rate: 0.02,
            batch_size: 128,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            record_loss: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParam("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidParam(format!(
                "dropout_rate {} not in [0, 1)",
                self.dropout_rate
            )));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::InvalidParam("learning_rate must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Training targets: teacher hard labels, or per-row class distributions.
pub enum Targets<'a> {
    Hard(&'a [usize]),
    Soft(ArrayView2<'a, f64>),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean mini-batch loss of each epoch.
    pub batch_loss: Vec<f64>,
    /// Full-set loss without dropout: entry 0 is at initialization, entry
    /// `e` after epoch `e`. Empty unless `record_loss` is set.
    pub full_loss: Vec<f64>,
}

struct Adam {
    m: Vec<DenseLayer>,
    v: Vec<DenseLayer>,
    t: i32,
}

impl Adam {
    fn new(model: &DTNetModel) -> Self {
        let zeros = || {
            model
                .layers()
                .iter()
                .map(|l| DenseLayer {
                    weights: Array2::zeros(l.weights.dim()),
                    bias: ndarray::Array1::zeros(l.bias.len()),
                })
                .collect::<Vec<_>>()
        };
        Adam {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut DTNetModel, g: &Gradients, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let (lr, eps) = (cfg.learning_rate, cfg.epsilon);
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((layer, gl), ml), vl) in model
            .layers_mut()
            .iter_mut()
            .zip(&g.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            Zip::from(&mut layer.weights)
                .and(&gl.weights)
                .and(&mut ml.weights)
                .and(&mut vl.weights)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&gl.bias)
                .and(&mut ml.bias)
                .and(&mut vl.bias)
                .for_each(update);
        }
    }
}

fn target_matrix(targets: Targets<'_>, n: usize, classes: usize) -> Result<Array2<f64>> {
    let t = match targets {
        Targets::Hard(y) => {
            if let Some(&bad) = y.iter().find(|&&k| k >= classes) {
                return Err(Error::InvalidParam(format!(
                    "label {bad} out of range for {classes} classes"
                )));
            }
            one_hot(y, classes)
        }
        Targets::Soft(p) => {
            if p.ncols() != classes {
                return Err(Error::Shape(format!(
                    "{} target columns for {classes} classes",
                    p.ncols()
                )));
            }
            p.to_owned()
        }
    };
    if t.nrows() != n {
        return Err(Error::Shape(format!("{} targets for {n} rows", t.nrows())));
    }
    Ok(t)
}

/// Mean cross-entropy of the model on a labeled set, without dropout.
pub fn dataset_loss(model: &DTNetModel, x: ArrayView2<'_, f64>, y: &[usize]) -> Result<f64> {
    let logits = model.logits(x)?;
    Ok(cross_entropy(&logits, &one_hot(y, model.arch().output_dim())).0)
}

/// Mini-batch ADAM on softmax cross-entropy from a Glorot initialization.
pub fn train_dtnet(
    arch: &DTNetArch,
    x: ArrayView2<'_, f64>,
    targets: Targets<'_>,
    cfg: &TrainConfig,
) -> Result<(DTNetModel, TrainHistory)> {
    train_from(DTNetModel::glorot(arch.clone(), cfg.seed), x, targets, cfg)
}

/// Same as [`train_dtnet`] but starting from the given parameters.
pub fn train_from(
    mut model: DTNetModel,
    x: ArrayView2<'_, f64>,
    targets: Targets<'_>,
    cfg: &TrainConfig,
) -> Result<(DTNetModel, TrainHistory)> {
    cfg.validate()?;
    let classes = model.arch().output_dim();
    if classes < 2 {
        return Err(Error::InvalidParam("training needs at least two output classes".into()));
    }
    if x.ncols() != model.arch().input_dim() {
        return Err(Error::Shape(format!(
            "input has {} columns, network expects {}",
            x.ncols(),
            model.arch().input_dim()
        )));
    }
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Empty("no training rows".into()));
    }
    let t = target_matrix(targets, n, classes)?;

    let mut history = TrainHistory::default();
    let full_loss = |m: &DTNetModel| -> Result<f64> { Ok(cross_entropy(&m.forward(x, None, false)?.0, &t).0) };
    if cfg.record_loss {
        history.full_loss.push(full_loss(&model)?);
    }

    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = util::rng_stream(cfg.seed, 1);
    let mut dropout_rng = util::rng_stream(cfg.seed, 2);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x.select(Axis(0), idx);
            let tb = t.select(Axis(0), idx);
            let dropout = Some(Dropout {
                rate: cfg.dropout_rate,
                rng: &mut dropout_rng,
            });
            let (logits, cache) = model.forward(xb.view(), dropout, false)?;
            let (loss, dlogits) = cross_entropy(&logits, &tb);
            if !loss.is_finite() {
                return Err(Error::NanLoss { epoch, batch: b });
            }
            let grads = model.backward(&cache, dlogits);
            adam.step(&mut model, &grads, cfg);
            sum += loss;
            batches += 1;
        }
        history.batch_loss.push(sum / batches as f64);
        if cfg.record_loss {
            history.full_loss.push(full_loss(&model)?);
        }
    }
    if model
        .layers()
        .iter()
        .any(|l| l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()))
    {
        return Err(Error::NanLoss {
            epoch: cfg.epochs.saturating_sub(1),
            batch: 0,
        });
    }
    Ok((model, history))
}
