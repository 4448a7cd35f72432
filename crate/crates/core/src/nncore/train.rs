use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::model::{dense, Architecture, ModelParams};
use super::Real;
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// Per-example clipping bound and Gaussian noise multiplier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub clip_norm: f64,
    /// Noise std on the summed clipped gradients is `noise_multiplier * clip_norm`.
    pub noise_multiplier: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp: Option<DpConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            learning_rate: 0.1,
            weight_decay: 5e-4,
            batch_size: 32,
            seed: 0,
            dp: None,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidConfig("weight_decay must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if let Some(dp) = &self.dp {
            if !(dp.clip_norm > 0.0) {
                return Err(Error::InvalidConfig("clip_norm must be positive".into()));
            }
            if !(dp.noise_multiplier >= 0.0 && dp.noise_multiplier.is_finite()) {
                return Err(Error::InvalidConfig("noise_multiplier must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Scratch buffers for one forward/backward pass.
struct Workspace<T> {
    acts: Vec<Vec<T>>,
    delta: Vec<T>,
    next_delta: Vec<T>,
}

impl<T: Real> Workspace<T> {
    fn new() -> Self {
        Self {
            acts: Vec::new(),
            delta: Vec::new(),
            next_delta: Vec::new(),
        }
    }
}

/// Cross-entropy loss of one example; accumulates its gradient into `grad`.
fn example_gradient<T: Real>(
    model: &ModelParams<T>,
    x: &[f32],
    y: usize,
    grad: &mut [T],
    ws: &mut Workspace<T>,
) -> T {
    let layers = model.num_layers();
    ws.acts.clear();
    ws.acts.push(x.iter().map(|&v| T::from_f32(v)).collect());
    for j in 0..layers {
        let (w, b) = model.layer(j);
        let out = dense(w, b, &ws.acts[j], j + 1 < layers);
        ws.acts.push(out);
    }

    let z = &ws.acts[layers];
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let total = exps.iter().fold(T::zero(), |a, &e| a + e);
    let loss = total.ln() - (z[y] - max);

    ws.delta.clear();
    ws.delta.extend(exps.iter().map(|&e| e / total));
    ws.delta[y] = ws.delta[y] - T::one();

    for j in (0..layers).rev() {
        let (fan_in, fan_out) = (model.dims()[j], model.dims()[j + 1]);
        let off = model.layer_offset(j);
        let a_prev = &ws.acts[j];
        {
            let (gw, gb) = grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            for (o, &d) in ws.delta.iter().enumerate() {
                let row = &mut gw[o * fan_in..(o + 1) * fan_in];
                for (g, &a) in row.iter_mut().zip(a_prev) {
                    *g = *g + d * a;
                }
                gb[o] = gb[o] + d;
            }
        }
        if j > 0 {
            let (w, _) = model.layer(j);
            ws.next_delta.clear();
            ws.next_delta.resize(fan_in, T::zero());
            for (o, &d) in ws.delta.iter().enumerate() {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (nd, &wv) in ws.next_delta.iter_mut().zip(row) {
                    *nd = *nd + wv * d;
                }
            }
            for (nd, &a) in ws.next_delta.iter_mut().zip(a_prev) {
                if a <= T::zero() {
                    *nd = T::zero();
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.next_delta);
        }
    }
    loss
}

/// Mean cross-entropy over `indices` and its gradient (no weight decay term).
pub fn batch_loss_and_gradient<T: Real>(
    model: &ModelParams<T>,
    data: &Dataset,
    indices: &[usize],
) -> Result<(T, Vec<T>)> {
    check_shapes(model.dims(), data)?;
    if indices.is_empty() {
        return Err(Error::EmptyInput("gradient batch"));
    }
    let mut ws = Workspace::new();
    let mut sum = vec![T::zero(); model.params().len()];
    let mut loss = T::zero();
    for &i in indices {
        loss = loss + example_gradient(model, data.row(i), data.label(i), &mut sum, &mut ws);
    }
    let n = T::from_f64(indices.len() as f64);
    sum.iter_mut().for_each(|g| *g = *g / n);
    Ok((loss / n, sum))
}

fn l2_norm<T: Real>(g: &[T]) -> f64 {
    g.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt()
}

/// Scales `g` in place so that its l2 norm is at most `clip_norm`.
pub fn clip_gradient_in_place<T: Real>(g: &mut [T], clip_norm: f64) {
    let mut norm = l2_norm(g);
    let mut slack = 1.0;
    while norm > clip_norm {
        let f = T::from_f64(clip_norm / norm * slack);
        g.iter_mut().for_each(|v| *v = *v * f);
        norm = l2_norm(g);
        // Rounding can leave the norm a hair above the bound.
        slack *= 1.0 - 4.0 * T::epsilon().as_f64();
    }
}

pub fn clip_gradient<T: Real>(g: &[T], clip_norm: f64) -> Vec<T> {
    let mut out = g.to_vec();
    clip_gradient_in_place(&mut out, clip_norm);
    out
}

/// `w <- w * (1 - lr * decay) - lr * g` for weights, `b <- b - lr * g` for biases.
pub fn apply_sgd_step<T: Real>(model: &mut ModelParams<T>, grad: &[T], lr: f64, weight_decay: f64) {
    let mask = model.weight_mask();
    let lr_t = T::from_f64(lr);
    let shrink = T::from_f64(1.0 - lr * weight_decay);
    for ((p, &g), &is_weight) in model.params_mut().iter_mut().zip(grad).zip(&mask) {
        *p = if is_weight { *p * shrink - lr_t * g } else { *p - lr_t * g };
    }
}

fn check_shapes(dims: &[usize], data: &Dataset) -> Result<()> {
    if data.dim() != dims[0] {
        return Err(Error::DimensionMismatch {
            expected: dims[0],
            actual: data.dim(),
            context: "dataset feature dimension vs architecture input",
        });
    }
    let classes = *dims.last().expect("dims non-empty");
    if data.num_classes() != classes {
        return Err(Error::DimensionMismatch {
            expected: classes,
            actual: data.num_classes(),
            context: "dataset class count vs architecture output",
        });
    }
    Ok(())
}

/// Mini-batch SGD; a pure function of its inputs.
pub fn train<T: Real>(dataset: &Dataset, arch: &Architecture, config: &TrainConfig) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut model = ModelParams::<T>::initialize(arch, config.seed)?;
    check_shapes(model.dims(), dataset)?;

    let mut shuffle_rng = seed::stream_rng(config.seed, Stream::Shuffle, 0);
    let mut noise_rng = seed::stream_rng(config.seed, Stream::DpNoise, 0);
    let noise = match config.dp {
        Some(dp) if dp.noise_multiplier > 0.0 => {
            Some(Normal::new(0.0, dp.noise_multiplier * dp.clip_norm).map_err(|e| {
                Error::InvalidConfig(format!("bad DP noise: {e}"))
            })?)
        }
        _ => None,
    };

    let n_params = model.params().len();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut sum = vec![T::zero(); n_params];
    let mut example = vec![T::zero(); n_params];
    let mut ws = Workspace::new();

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            sum.iter_mut().for_each(|g| *g = T::zero());
            let mut loss = T::zero();
            for &i in batch {
                let (x, y) = (dataset.row(i), dataset.label(i));
                let Some(dp) = &config.dp else {
                    loss = loss + example_gradient(&model, x, y, &mut sum, &mut ws);
                    continue;
                };
                example.iter_mut().for_each(|g| *g = T::zero());
                loss = loss + example_gradient(&model, x, y, &mut example, &mut ws);
                clip_gradient_in_place(&mut example, dp.clip_norm);
                debug_assert!(l2_norm(&example) <= dp.clip_norm);
                for (s, &e) in sum.iter_mut().zip(&example) {
                    *s = *s + e;
                }
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            if let Some(dist) = &noise {
                for s in sum.iter_mut() {
                    *s = *s + T::from_f64(dist.sample(&mut noise_rng));
                }
            }
            let b = T::from_f64(batch.len() as f64);
            sum.iter_mut().for_each(|g| *g = *g / b);
            apply_sgd_step(&mut model, &sum, config.learning_rate, config.weight_decay);
        }
        if !model.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                step: order.len().div_ceil(config.batch_size),
            });
        }
    }
    Ok(model)
}
