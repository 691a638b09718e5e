//! Adam (or plain gradient descent) on the squared loss.

use convland_core::backprop::{backward_with, loss, BackwardOptions, GradientSet};
use convland_core::{forward, Dataset, Error, NetworkSpec, Params};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
    /// Full-batch gradient descent with the same learning-rate schedule.
    GradientDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// The rate is multiplied by `decay_factor` every `decay_every` epochs.
    pub decay_factor: f64,
    pub decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// `None` trains full batch.
    pub batch_size: Option<usize>,
    pub optimizer: Optimizer,
    /// Seeds the per-epoch batch order.
    pub seed: u64,
    /// Stop once every training sample is classified correctly.
    pub stop_at_zero_error: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 3000,
            learning_rate: 1e-3,
            decay_factor: 0.5,
            decay_every: 500,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: None,
            optimizer: Optimizer::Adam,
            seed: 0,
            stop_at_zero_error: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(self.decay_factor > 0.0) || self.decay_every == 0 {
            return bad("learning rate, decay factor and decay interval must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("Adam needs beta1, beta2 in [0, 1) and epsilon > 0");
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be at least 1");
        }
        if self.optimizer == Optimizer::GradientDescent && self.batch_size.is_some() {
            return bad("gradient descent is full batch");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub params: Params,
    /// Full training loss before each epoch, then once more after the last.
    pub loss_curve: Vec<f64>,
    pub epochs_run: usize,
    pub train_errors: usize,
    pub test_errors: Option<usize>,
}

impl TrainResult {
    pub fn final_loss(&self) -> f64 {
        *self.loss_curve.last().expect("curve holds the initial loss")
    }
}

/// Samples whose largest output differs from their label.
pub fn classification_errors(spec: &NetworkSpec, params: &Params, data: &Dataset) -> Result<usize> {
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| HarnessError::Config("dataset has no class labels".into()))?;
    let out = forward(spec, params, &data.x)?.post.pop().expect("output");
    Ok(count_errors(&out, labels))
}

fn count_errors(out: &nalgebra::DMatrix<f64>, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(i, &c)| out.row(i).transpose().argmax().0 != c)
        .count()
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn evaluate(spec: &NetworkSpec, params: &Params, data: &Dataset, epoch: usize) -> Result<(f64, usize)> {
    let tr = forward(spec, params, &data.x).map_err(|e| diverged(e, epoch))?;
    let phi = loss(&tr, &data.y)?;
    if !phi.is_finite() {
        return Err(HarnessError::Diverged { epoch, loss: phi });
    }
    let errors = data.labels.as_ref().map_or(usize::MAX, |l| count_errors(tr.output(), l));
    Ok((phi, errors))
}

fn diverged(e: Error, epoch: usize) -> HarnessError {
    match e {
        Error::NumericOverflow { .. } => HarnessError::Diverged {
            epoch,
            loss: f64::INFINITY,
        },
        e => e.into(),
    }
}

fn gradient(spec: &NetworkSpec, params: &Params, batch: &Dataset, epoch: usize) -> Result<GradientSet> {
    let tr = forward(spec, params, &batch.x).map_err(|e| diverged(e, epoch))?;
    Ok(backward_with(spec, params, &tr, &batch.y, BackwardOptions::params_only())?)
}

fn batch_of(data: &Dataset, idx: &[usize]) -> Dataset {
    Dataset {
        x: data.x.select_rows(idx.iter()),
        y: data.y.select_rows(idx.iter()),
        labels: data.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
        embedding: data.embedding.clone(),
    }
}

pub fn train(
    spec: &NetworkSpec,
    init: &Params,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    if cfg.stop_at_zero_error && train_set.labels.is_none() {
        return Err(HarnessError::Config("stop_at_zero_error needs class labels".into()));
    }
    let mut params = init.clone();
    let count = params.num_scalars();
    let mut adam = Adam {
        m: vec![0.0; count],
        v: vec![0.0; count],
        t: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs + 1);
    let mut epochs_run = 0;
    for epoch in 0..cfg.epochs {
        let (phi, errors) = evaluate(spec, &params, train_set, epoch)?;
        loss_curve.push(phi);
        if cfg.stop_at_zero_error && errors == 0 {
            break;
        }
        let lr = cfg.learning_rate_at(epoch);
        // `None` stands for the whole training set
        let batches: Vec<Option<Vec<usize>>> = match cfg.batch_size {
            None => vec![None],
            Some(b) => {
                order.shuffle(&mut rng);
                order.chunks(b).map(|c| Some(c.to_vec())).collect()
            }
        };
        for idx in batches {
            let g = match idx {
                None => gradient(spec, &params, train_set, epoch)?,
                Some(idx) => gradient(spec, &params, &batch_of(train_set, &idx), epoch)?,
            };
            let g = g.flatten();
            match cfg.optimizer {
                Optimizer::GradientDescent => params.for_each_mut(|i, w| *w -= lr * g[i]),
                Optimizer::Adam => {
                    adam.t += 1;
                    let c1 = 1.0 - cfg.beta1.powi(adam.t);
                    let c2 = 1.0 - cfg.beta2.powi(adam.t);
                    let (m, v) = (&mut adam.m, &mut adam.v);
                    params.for_each_mut(|i, w| {
                        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                        *w -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.epsilon);
                    });
                }
            }
        }
        epochs_run = epoch + 1;
    }
    let (phi, train_errors) = evaluate(spec, &params, train_set, epochs_run)?;
    if loss_curve.len() == epochs_run {
        loss_curve.push(phi);
    }
    let train_errors = if train_set.labels.is_some() { train_errors } else { 0 };
    let test_errors = test_set
        .filter(|t| t.labels.is_some())
        .map(|t| classification_errors(spec, &params, t))
        .transpose()?;
    Ok(TrainResult {
        params,
        loss_curve,
        epochs_run,
        train_errors,
        test_errors,
    })
}
