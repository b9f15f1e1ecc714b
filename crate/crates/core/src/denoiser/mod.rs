//! The ε-network: sinusoidal step embedding, a set-abstraction /
//! feature-propagation point hierarchy, and a linear head on the free points.
//! Gradients are hand-derived; see `network` for the forward/backward pair.

mod io;
mod network;
mod ops;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_model, save_model, Model, ModelManifest, TrainingRecord};
pub use network::{denoise, time_embedding, Gradient};
pub use ops::{ball_query, farthest_point_sampling, sinusoidal_embedding, three_nn};
pub use train::{fit, fit_with, loss_and_gradient, loss_gradient, Adam, TrainConfig, TrainingExample};

/// Per-point input feature: 1 for condition points, 0 for free points.
pub const INPUT_FEATURES: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetAbstraction {
    /// Fraction of the previous level kept as centres (rounded up).
    pub ratio: f64,
    /// Ball radius; `None` makes a single group of every point about the origin.
    pub radius: Option<f64>,
    pub max_neighbors: usize,
    pub widths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePropagation {
    pub widths: Vec<usize>,
}

/// `feature_propagation[j]` lifts level `L - j` onto level `L - j - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub embed_dim: usize,
    pub slope: f64,
    pub set_abstraction: Vec<SetAbstraction>,
    pub feature_propagation: Vec<FeaturePropagation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A dense layer inside the flat parameter vector. The weight matrix is
/// row-major `[n_out, n_in + n_time]`; the trailing `n_time` columns act on
/// the step embedding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dense {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_time: usize,
    pub n_out: usize,
}

impl Dense {
    pub fn stride(&self) -> usize {
        self.n_in + self.n_time
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layers {
    pub time: [Dense; 2],
    pub sa: Vec<Vec<Dense>>,
    pub fp: Vec<Vec<Dense>>,
    pub head: Dense,
}

impl Architecture {
    /// The desk-scale network: two SA levels (radii scaled to a 576-point
    /// cloud) and two FP levels.
    pub fn toy() -> Self {
        Architecture {
            embed_dim: 64,
            slope: 0.1,
            set_abstraction: vec![
                SetAbstraction {
                    ratio: 0.25,
                    radius: Some(0.75),
                    max_neighbors: 16,
                    widths: vec![32, 64],
                },
                SetAbstraction {
                    ratio: 0.25,
                    radius: Some(1.5),
                    max_neighbors: 32,
                    widths: vec![128],
                },
            ],
            feature_propagation: vec![
                FeaturePropagation { widths: vec![64] },
                FeaturePropagation { widths: vec![64] },
            ],
        }
    }

    /// Four-level hierarchy sized like the 30720-point reference network,
    /// with plain shared MLPs in place of its voxel-convolution blocks.
    pub fn full_scale() -> Self {
        let sa = |ratio, radius, widths: &[usize]| SetAbstraction {
            ratio,
            radius: Some(radius),
            max_neighbors: 128,
            widths: widths.to_vec(),
        };
        Architecture {
            embed_dim: 64,
            slope: 0.1,
            set_abstraction: vec![
                sa(1.0 / 3.0, 0.1, &[32, 32]),
                sa(0.25, 0.2, &[64, 64]),
                sa(0.25, 0.4, &[128, 128]),
                sa(0.25, 0.8, &[128, 128, 256]),
            ],
            feature_propagation: vec![
                FeaturePropagation { widths: vec![256, 256] },
                FeaturePropagation { widths: vec![256, 256] },
                FeaturePropagation { widths: vec![256, 128] },
                FeaturePropagation { widths: vec![128, 128, 64] },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 4 || self.embed_dim % 2 != 0 {
            return Err(Error::invalid("embedding dimension must be even and at least 4"));
        }
        if !(self.slope.is_finite() && self.slope >= 0.0) {
            return Err(Error::invalid("leaky slope must be finite and non-negative"));
        }
        if self.set_abstraction.is_empty() {
            return Err(Error::invalid("at least one set-abstraction level is required"));
        }
        if self.feature_propagation.len() != self.set_abstraction.len() {
            return Err(Error::invalid("need one feature-propagation level per set-abstraction level"));
        }
        for (i, sa) in self.set_abstraction.iter().enumerate() {
            if !(sa.ratio > 0.0 && sa.ratio <= 1.0) || sa.max_neighbors == 0 || sa.widths.is_empty() {
                return Err(Error::invalid(format!("set-abstraction level {} is malformed", i + 1)));
            }
            if let Some(r) = sa.radius {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(Error::invalid(format!("radius of level {} must be positive", i + 1)));
                }
            }
        }
        let widths = self
            .set_abstraction
            .iter()
            .map(|s| &s.widths)
            .chain(self.feature_propagation.iter().map(|f| &f.widths));
        for w in widths {
            if w.is_empty() || w.contains(&0) {
                return Err(Error::invalid("layer widths must be positive"));
            }
        }
        Ok(())
    }

    /// Feature channels of level `l` (level 0 is the input cloud).
    fn level_channels(&self, l: usize) -> usize {
        if l == 0 {
            INPUT_FEATURES
        } else {
            *self.set_abstraction[l - 1].widths.last().unwrap()
        }
    }

    fn build(&self) -> (Vec<TensorSpec>, Layers) {
        let e = self.embed_dim;
        let mut specs = Vec::new();
        let mut offset = 0;
        let mut dense = |name: String, n_in: usize, n_time: usize, n_out: usize| {
            let w = offset;
            specs.push(TensorSpec {
                name: format!("{name}.weight"),
                shape: vec![n_out, n_in + n_time],
            });
            offset += n_out * (n_in + n_time);
            let b = offset;
            specs.push(TensorSpec {
                name: format!("{name}.bias"),
                shape: vec![n_out],
            });
            offset += n_out;
            Dense {
                w,
                b,
                n_in,
                n_time,
                n_out,
            }
        };
        let time = [
            dense("time.fc1".into(), e, 0, e),
            dense("time.fc2".into(), e, 0, e),
        ];
        let levels = self.set_abstraction.len();
        let mut sa = Vec::new();
        for (l, level) in self.set_abstraction.iter().enumerate() {
            let mut layers = Vec::new();
            let mut n_in = 3 + self.level_channels(l);
            for (j, &w) in level.widths.iter().enumerate() {
                let n_time = if j == 0 { e } else { 0 };
                layers.push(dense(format!("sa{}.mlp{}", l + 1, j + 1), n_in, n_time, w));
                n_in = w;
            }
            sa.push(layers);
        }
        let mut fp = Vec::new();
        let mut src = self.level_channels(levels);
        for (j, level) in self.feature_propagation.iter().enumerate() {
            let target = levels - j - 1;
            let skip = if target == 0 { 3 + INPUT_FEATURES } else { self.level_channels(target) };
            let mut layers = Vec::new();
            let mut n_in = src + skip;
            for (k, &w) in level.widths.iter().enumerate() {
                let n_time = if k == 0 { e } else { 0 };
                layers.push(dense(format!("fp{}.mlp{}", j + 1, k + 1), n_in, n_time, w));
                n_in = w;
            }
            src = n_in;
            fp.push(layers);
        }
        let head = dense("head".into(), src, 0, 3);
        (specs, Layers { time, sa, fp, head })
    }

    /// Named tensors in payload order.
    pub fn layout(&self) -> Vec<TensorSpec> {
        self.build().0
    }

    pub fn parameter_count(&self) -> usize {
        self.layout().iter().map(TensorSpec::len).sum()
    }
}

/// Every weight of the network in one flat vector, in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    arch: Architecture,
    values: Vec<f64>,
    init_seed: u64,
    pub(crate) layers: Layers,
}

impl DenoiserParams {
    /// He fan-in normal weights, zero biases, zero head.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        p.init_seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = p.layers.head;
        let mut all: Vec<Dense> = p.layers.time.to_vec();
        all.extend(p.layers.sa.iter().flatten());
        all.extend(p.layers.fp.iter().flatten());
        for d in all {
            let std = (2.0 / d.stride() as f64).sqrt();
            let normal = Normal::new(0.0, std).unwrap();
            for v in &mut p.values[d.w..d.w + d.n_out * d.stride()] {
                *v = normal.sample(&mut rng);
            }
        }
        debug_assert!(p.values[head.w..].iter().all(|&v| v == 0.0));
        Ok(p)
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let (specs, layers) = arch.build();
        let n = specs.iter().map(TensorSpec::len).sum();
        Ok(DenoiserParams {
            arch,
            values: vec![0.0; n],
            init_seed: 0,
            layers,
        })
    }

    pub fn from_values(arch: Architecture, values: Vec<f64>, init_seed: u64) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        if values.len() != p.values.len() {
            return Err(Error::shape(format!(
                "architecture has {} parameters, got {}",
                p.values.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("denoiser parameters".into()));
        }
        p.values = values;
        p.init_seed = init_seed;
        Ok(p)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn layout(&self) -> Vec<TensorSpec> {
        self.arch.layout()
    }

    /// Offset and shape of a named tensor.
    pub fn tensor(&self, name: &str) -> Option<(usize, TensorSpec)> {
        let mut offset = 0;
        for spec in self.layout() {
            if spec.name == name {
                return Some((offset, spec));
            }
            offset += spec.len();
        }
        None
    }
}

impl crate::diffusion::NoisePredictor for DenoiserParams {
    fn predict(
        &self,
        xt_free: &[crate::Vec3],
        c0: &[crate::Vec3],
        t: usize,
        steps: usize,
    ) -> Result<Vec<crate::Vec3>> {
        denoise(xt_free, c0, t, steps, self)
    }
}
