use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    /// Real-valued features: isotropic Gaussian jitter.
    Continuous,
    /// 0/1 features: independent bit flips.
    Binary,
}

/// A perturbed copy of a challenge point carrying the challenge label.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborCandidate {
    pub x: Vec<f32>,
    pub label: usize,
}

const MAX_REDRAWS: usize = 10_000;

/// Draws `count` perturbations of `x`, none equal to `x` itself.
///
/// `noise_scale` is the jitter standard deviation for continuous features and
/// the per-bit flip probability for binary ones.
pub fn gen_neighbors(
    x: &[f32],
    y: usize,
    modality: Modality,
    count: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<Vec<NeighborCandidate>> {
    if count == 0 {
        return Err(Error::InvalidInput("neighbor count must be at least 1".into()));
    }
    if !(noise_scale > 0.0 && noise_scale.is_finite()) {
        return Err(Error::InvalidInput("noise_scale must be positive".into()));
    }
    if modality == Modality::Binary && noise_scale > 1.0 {
        return Err(Error::InvalidInput("binary flip probability must be at most 1".into()));
    }
    let mut rng = seed::rng(seed);
    let jitter = Normal::new(0.0, noise_scale).expect("positive finite std");
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut candidate = None;
        for _ in 0..MAX_REDRAWS {
            let c: Vec<f32> = match modality {
                Modality::Continuous => x
                    .iter()
                    .map(|&v| (v as f64 + jitter.sample(&mut rng)) as f32)
                    .collect(),
                Modality::Binary => x
                    .iter()
                    .map(|&v| if rng.random_bool(noise_scale) { 1.0 - v } else { v })
                    .collect(),
            };
            if c.as_slice() != x {
                candidate = Some(c);
                break;
            }
        }
        let c = candidate.ok_or_else(|| {
            Error::InvalidInput("noise too small to produce a candidate distinct from x".into())
        })?;
        out.push(NeighborCandidate { x: c, label: y });
    }
    Ok(out)
}
