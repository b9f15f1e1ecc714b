//! Conditional DDPM over point clouds. The free block x̃ is diffused and
//! denoised; the condition block c₀ is held fixed and only ever passed to the
//! noise predictor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::surface::PointCloud;

/// Reference horizon the default β range was tuned for.
pub const REFERENCE_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// The per-run random generator. ChaCha is counter based, so a seed fully
/// determines the stream on every platform.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The three numbers that define a linear schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::linear(self.steps, self.beta_start, self.beta_end)
    }
}

/// β, α and ᾱ tables, indexed externally by t = 1..=T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl DiffusionSchedule {
    /// Linear β from `beta_start` at t = 1 to `beta_end` at t = T.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::invalid(format!(
                "beta range must satisfy 0 < start <= end < 1, got {beta_start}..{beta_end}"
            )));
        }
        if steps == 1 && beta_start != beta_end {
            return Err(Error::invalid("a single-step schedule needs beta_start == beta_end"));
        }
        let beta: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * (i as f64 / (steps - 1) as f64)
                }
            })
            .collect();
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        Ok(DiffusionSchedule {
            beta,
            alpha,
            alpha_bar,
        })
    }

    /// The default β range stretched by `1000 / steps`, so a short chain ends
    /// at roughly the same ᾱ_T as the 1000-step reference. Needs `steps > 20`.
    pub fn scaled_linear(steps: usize) -> Result<Self> {
        let k = REFERENCE_STEPS as f64 / steps.max(1) as f64;
        Self::linear(steps, DEFAULT_BETA_START * k, DEFAULT_BETA_END * k)
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn spec(&self) -> ScheduleSpec {
        ScheduleSpec {
            steps: self.steps(),
            beta_start: self.beta[0],
            beta_end: self.beta[self.steps() - 1],
        }
    }

    fn check(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            Err(Error::invalid(format!("step {t} outside 1..={}", self.steps())))
        } else {
            Ok(t - 1)
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }
}

/// Standard normal noise for the free block only.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub eps: Vec<Vec3>,
    /// Seed of the stream the draw came from, if any.
    pub seed: Option<u64>,
}

impl NoiseDraw {
    pub fn zeros(n: usize) -> Self {
        NoiseDraw {
            eps: vec![[0.0; 3]; n],
            seed: None,
        }
    }

    pub fn sample(n: usize, rng: &mut Rng) -> Self {
        NoiseDraw {
            eps: standard_normal_points(n, rng),
            seed: None,
        }
    }

    pub fn from_seed(n: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        NoiseDraw {
            eps: standard_normal_points(n, &mut rng),
            seed: Some(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    fn is_zero(&self) -> bool {
        self.eps.iter().all(|e| e.iter().all(|&v| v == 0.0))
    }
}

pub fn standard_normal_points(n: usize, rng: &mut Rng) -> Vec<Vec3> {
    (0..n)
        .map(|_| {
            [
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            ]
        })
        .collect()
}

/// ε_θ(x̃_t, c₀, t).
pub trait NoisePredictor: Sync {
    fn predict(&self, xt_free: &[Vec3], c0: &[Vec3], t: usize, steps: usize) -> Result<Vec<Vec3>>;
}

impl<F> NoisePredictor for F
where
    F: Fn(&[Vec3], &[Vec3], usize, usize) -> Result<Vec<Vec3>> + Sync,
{
    fn predict(&self, xt_free: &[Vec3], c0: &[Vec3], t: usize, steps: usize) -> Result<Vec<Vec3>> {
        self(xt_free, c0, t, steps)
    }
}

/// x̃_t = √ᾱ_t·x̃₀ + √(1−ᾱ_t)·ε.
pub fn forward_sample(
    x0_free: &[Vec3],
    t: usize,
    eps: &NoiseDraw,
    sched: &DiffusionSchedule,
) -> Result<Vec<Vec3>> {
    let i = sched.check(t)?;
    if eps.len() != x0_free.len() {
        return Err(Error::shape(format!(
            "{} noise vectors for {} free points",
            eps.len(),
            x0_free.len()
        )));
    }
    let a = sched.alpha_bar[i].sqrt();
    let s = (1.0 - sched.alpha_bar[i]).sqrt();
    Ok(x0_free
        .iter()
        .zip(&eps.eps)
        .map(|(x, e)| [a * x[0] + s * e[0], a * x[1] + s * e[1], a * x[2] + s * e[2]])
        .collect())
}

/// Mean over free points of ‖ε − ε̂‖².
pub fn training_loss(
    denoiser: &dyn NoisePredictor,
    x0: &PointCloud,
    t: usize,
    eps: &NoiseDraw,
    sched: &DiffusionSchedule,
) -> Result<f64> {
    if x0.free().is_empty() {
        return Err(Error::invalid("training cloud has no free points"));
    }
    let xt = forward_sample(x0.free(), t, eps, sched)?;
    let pred = denoiser.predict(&xt, x0.condition(), t, sched.steps())?;
    if pred.len() != xt.len() {
        return Err(Error::shape("denoiser output length differs from free block"));
    }
    let sum: f64 = pred
        .iter()
        .zip(&eps.eps)
        .map(|(p, e)| crate::geom::dist2(*p, *e))
        .sum();
    let loss = sum / xt.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    Ok(loss)
}

/// The scalar update of one reverse step:
/// (1/√α)·(x − ((1−α)/√(1−ᾱ))·ε̂) + √β·z.
#[inline]
pub fn reverse_update(x: f64, eps_hat: f64, z: f64, alpha: f64, alpha_bar: f64, beta: f64) -> f64 {
    (x - (1.0 - alpha) / (1.0 - alpha_bar).sqrt() * eps_hat) / alpha.sqrt() + beta.sqrt() * z
}

/// One ancestral step t → t−1 on the free block. `z` must be zero at t = 1.
pub fn reverse_step(
    xt_free: &[Vec3],
    c0: &[Vec3],
    t: usize,
    z: &NoiseDraw,
    denoiser: &dyn NoisePredictor,
    sched: &DiffusionSchedule,
) -> Result<Vec<Vec3>> {
    let i = sched.check(t)?;
    if z.len() != xt_free.len() {
        return Err(Error::shape(format!(
            "{} noise vectors for {} free points",
            z.len(),
            xt_free.len()
        )));
    }
    if t == 1 && !z.is_zero() {
        return Err(Error::invalid("the final reverse step takes z = 0"));
    }
    let eps_hat = denoiser.predict(xt_free, c0, t, sched.steps())?;
    if eps_hat.len() != xt_free.len() {
        return Err(Error::shape("denoiser output length differs from free block"));
    }
    let (alpha, alpha_bar, beta) = (sched.alpha[i], sched.alpha_bar[i], sched.beta[i]);
    let out: Vec<Vec3> = xt_free
        .iter()
        .zip(&eps_hat)
        .zip(&z.eps)
        .map(|((x, e), zz)| {
            let mut y = [0.0; 3];
            for a in 0..3 {
                y[a] = reverse_update(x[a], e[a], zz[a], alpha, alpha_bar, beta);
            }
            y
        })
        .collect();
    if out.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("reverse step {t}")));
    }
    Ok(out)
}

/// Samples `m` free points conditioned on `c0`: x̃_T ~ N(0, I), then
/// t = T..1 reverse steps. Returns (c₀, x̃₀) with split = |c₀|.
pub fn complete(
    c0: &[Vec3],
    m: usize,
    denoiser: &dyn NoisePredictor,
    sched: &DiffusionSchedule,
    seed: u64,
) -> Result<PointCloud> {
    if m == 0 {
        return Err(Error::invalid("completion needs at least one free point"));
    }
    let mut rng = rng_from_seed(seed);
    let mut x = standard_normal_points(m, &mut rng);
    for t in (1..=sched.steps()).rev() {
        let z = if t > 1 {
            NoiseDraw::sample(m, &mut rng)
        } else {
            NoiseDraw::zeros(m)
        };
        x = reverse_step(&x, c0, t, &z, denoiser, sched)?;
    }
    Ok(PointCloud::from_parts(c0, &x))
}
