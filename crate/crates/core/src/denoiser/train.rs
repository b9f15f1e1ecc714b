use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{sample_loss_and_grad, Gradient};
use super::DenoiserParams;
use crate::diffusion::{forward_sample, rng_from_seed, DiffusionSchedule, NoiseDraw, Rng};
use crate::error::{Error, Result};
use crate::surface::PointCloud;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-4,
            batch_size: 8,
            epochs: 1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !unit(self.beta1) || !unit(self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::invalid("Adam moments must lie in [0, 1) and epsilon be positive"));
        }
        Ok(())
    }
}

/// One supervised draw: a clean cloud, a step and the noise on its free block.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub cloud: PointCloud,
    pub t: usize,
    pub eps: NoiseDraw,
}

/// Mean loss over `examples` and its exact gradient. Examples are evaluated
/// in parallel and reduced in input order.
pub fn loss_and_gradient(
    params: &DenoiserParams,
    examples: &[TrainingExample],
    sched: &DiffusionSchedule,
) -> Result<(f64, Gradient)> {
    if examples.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let weight = 1.0 / examples.len() as f64;
    let parts: Vec<(f64, Gradient)> = examples
        .par_iter()
        .map(|ex| {
            let mut g = vec![0.0; params.len()];
            let xt = forward_sample(ex.cloud.free(), ex.t, &ex.eps, sched)?;
            let loss = sample_loss_and_grad(
                params,
                &xt,
                ex.cloud.condition(),
                ex.t,
                sched.steps(),
                &ex.eps.eps,
                weight,
                &mut g,
            )?;
            Ok((loss, g))
        })
        .collect::<Result<_>>()?;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss * weight, grad))
}

/// Draws t ~ U{1..T} and ε ~ N(0, I) for each cloud, in order.
pub fn draw_examples(batch: &[PointCloud], sched: &DiffusionSchedule, rng: &mut Rng) -> Vec<TrainingExample> {
    batch
        .iter()
        .map(|cloud| {
            let t = rng.random_range(1..=sched.steps());
            let eps = NoiseDraw::sample(cloud.free().len(), rng);
            TrainingExample {
                cloud: cloud.clone(),
                t,
                eps,
            }
        })
        .collect()
}

pub fn loss_gradient(
    params: &DenoiserParams,
    batch: &[PointCloud],
    sched: &DiffusionSchedule,
    rng: &mut Rng,
) -> Result<(f64, Gradient)> {
    let examples = draw_examples(batch, sched, rng);
    loss_and_gradient(params, &examples, sched)
}

pub struct Adam {
    config: TrainConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(config: TrainConfig, n: usize) -> Self {
        Adam {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        let c = &self.config;
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grad[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
        }
    }
}

/// Adam training; returns the trained parameters and per-epoch mean loss.
pub fn fit(
    params: &DenoiserParams,
    dataset: &[PointCloud],
    config: &TrainConfig,
    sched: &DiffusionSchedule,
    seed: u64,
) -> Result<(DenoiserParams, Vec<f64>)> {
    fit_with(params, dataset, config, sched, seed, &mut |_, _| {})
}

/// [`fit`] with a callback after every epoch (index, mean loss).
pub fn fit_with(
    params: &DenoiserParams,
    dataset: &[PointCloud],
    config: &TrainConfig,
    sched: &DiffusionSchedule,
    seed: u64,
    on_epoch: &mut dyn FnMut(usize, f64),
) -> Result<(DenoiserParams, Vec<f64>)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut trained = params.clone();
    let mut adam = Adam::new(config.clone(), params.len());
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<PointCloud> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let examples = draw_examples(&batch, sched, &mut rng);
            let (loss, grad) = match loss_and_gradient(&trained, &examples, sched) {
                Ok(r) => r,
                Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch, loss: f64::NAN }),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, loss });
            }
            total += loss * chunk.len() as f64;
            adam.update(trained.values_mut(), &grad);
        }
        let mean = total / dataset.len() as f64;
        history.push(mean);
        on_epoch(epoch, mean);
    }
    Ok((trained, history))
}
