use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Classifier, Real};
use crate::error::{Error, Result};
use crate::persist::{self, Manifest};
use crate::seed::{self, Stream};

/// Layer widths of a fully connected classifier.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden,
            num_classes,
        }
    }

    /// `[input, hidden..., classes]`
    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden.len() + 2);
        d.push(self.input_dim);
        d.extend_from_slice(&self.hidden);
        d.push(self.num_classes);
        d
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims().contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("need at least two classes".into()));
        }
        Ok(())
    }
}

/// Output of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Argmax of `confidences`, lowest index on ties.
    pub label: usize,
    pub confidences: Vec<f64>,
}

/// Weights and biases of every layer, stored in one flat vector.
///
/// Layer `j` occupies `W_j` (row-major, `out x in`) followed by `b_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T: Real = f32> {
    dims: Vec<usize>,
    params: Vec<T>,
}

pub(super) fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Real> ModelParams<T> {
    /// Glorot-uniform weights, zero biases, seeded from the training seed.
    pub fn initialize(arch: &Architecture, train_seed: u64) -> Result<Self> {
        arch.validate()?;
        let dims = arch.dims();
        let mut rng = seed::stream_rng(train_seed, Stream::InitWeights, 0);
        let mut params = Vec::with_capacity(param_count(&dims));
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(T::from_f64(rng.random_range(-a..=a)));
            }
            params.extend(std::iter::repeat_n(T::zero(), fan_out));
        }
        Ok(Self { dims, params })
    }

    pub fn from_parts(dims: Vec<usize>, params: Vec<T>) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidInput("need at least input and output widths".into()));
        }
        if params.len() != param_count(&dims) {
            return Err(Error::DimensionMismatch {
                expected: param_count(&dims),
                actual: params.len(),
                context: "parameter vector length",
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        Ok(Self { dims, params })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.dims.last().expect("at least two dims")
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Offset of layer `j`'s weight block within the flat vector.
    pub(super) fn layer_offset(&self, j: usize) -> usize {
        param_count(&self.dims[..=j])
    }

    pub fn layer(&self, j: usize) -> (&[T], &[T]) {
        let (fan_in, fan_out) = (self.dims[j], self.dims[j + 1]);
        let off = self.layer_offset(j);
        let (w, rest) = self.params[off..].split_at(fan_in * fan_out);
        (w, &rest[..fan_out])
    }

    /// True where the flat parameter is a weight (subject to decay), false for biases.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.params.len());
        for w in self.dims.windows(2) {
            mask.extend(std::iter::repeat_n(true, w[0] * w[1]));
            mask.extend(std::iter::repeat_n(false, w[1]));
        }
        mask
    }

    /// Pre-softmax outputs.
    pub fn logits(&self, x: &[f32]) -> Result<Vec<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
                context: "model input",
            });
        }
        let mut act: Vec<T> = x.iter().map(|&v| T::from_f32(v)).collect();
        for j in 0..self.num_layers() {
            let (w, b) = self.layer(j);
            let last = j + 1 == self.num_layers();
            act = dense(w, b, &act, !last);
        }
        Ok(act)
    }

    pub fn predict(&self, x: &[f32]) -> Result<Prediction> {
        let z: Vec<f64> = self.logits(x)?.into_iter().map(Real::as_f64).collect();
        Ok(prediction_from_logits(&z))
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            dims: self.dims.clone(),
            params: self.params.iter().map(|p| U::from_f64(p.as_f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

pub(super) fn dense<T: Real>(w: &[T], b: &[T], input: &[T], relu: bool) -> Vec<T> {
    let fan_in = input.len();
    b.iter()
        .zip(w.chunks_exact(fan_in))
        .map(|(&bias, row)| {
            let z = row.iter().zip(input).fold(bias, |acc, (&wi, &xi)| acc + wi * xi);
            if relu && z < T::zero() {
                T::zero()
            } else {
                z
            }
        })
        .collect()
}

fn prediction_from_logits(z: &[f64]) -> Prediction {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let confidences: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let mut label = 0;
    for (i, &c) in confidences.iter().enumerate() {
        if c > confidences[label] {
            label = i;
        }
    }
    Prediction { label, confidences }
}

impl<T: Real> Classifier for ModelParams<T> {
    fn predict(&self, x: &[f32]) -> Result<Prediction> {
        ModelParams::predict(self, x)
    }
}

/// `ln(p / (1 - p))` with `p` clamped to `[eps, 1 - eps]`.
pub fn logit(p: f64, eps: f64) -> f64 {
    let p = p.clamp(eps, 1.0 - eps);
    (p / (1.0 - p)).ln()
}

impl ModelParams<f32> {
    /// Writes `<stem>.manifest` plus `<stem>.params.f32` (little-endian, layer
    /// order, weights before biases).
    pub fn save(&self, dir: &Path, stem: &str, train_seed: u64, config_hash: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let bin_name = format!("{stem}.params.f32");
        fs::write(dir.join(&bin_name), persist::f32_le_bytes(&self.params))?;
        let mut m = Manifest::new("mlp-v1");
        m.set("dims", join(&self.dims));
        m.set("activation", "relu-hidden,softmax-output");
        m.set("seed", train_seed);
        m.set("config_hash", config_hash);
        m.set("param_count", self.params.len());
        m.set("params", &bin_name);
        let path = dir.join(format!("{stem}.manifest"));
        m.write(&path)?;
        Ok(path)
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let m = Manifest::read(manifest_path)?;
        m.expect_format("mlp-v1")?;
        let dims = m
            .get("dims")?
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Format {
                path: manifest_path.to_path_buf(),
                reason: "bad dims".into(),
            })?;
        let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let bin = dir.join(m.get("params")?);
        let params = persist::f32_from_le_bytes(&fs::read(&bin)?, &bin)?;
        Self::from_parts(dims, params)
    }

    pub fn content_bytes(&self) -> Vec<u8> {
        persist::f32_le_bytes(&self.params)
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_model(dims: Vec<usize>) -> ModelParams<f64> {
        let n = param_count(&dims);
        ModelParams::from_parts(dims, vec![0.0; n]).unwrap()
    }

    #[test]
    fn zero_model_is_uniform_and_picks_label_zero() {
        let m = zero_model(vec![3, 4]);
        let p = m.predict(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(p.label, 0);
        for c in &p.confidences {
            assert!((c - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_built_model_favours_class_two() {
        // 1 layer, 3 inputs, 3 classes; input e1 hits column 0.
        // logits = W e1 + b = (0.1, -0.5, 2.0).
        let w = vec![0.1, 0.0, 0.0, -0.5, 0.0, 0.0, 2.0, 0.0, 0.0];
        let b = vec![0.0; 3];
        let m = ModelParams::<f64>::from_parts(vec![3, 3], [w, b].concat()).unwrap();
        let p = m.predict(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.label, 2);
        let denom = 0.1f64.exp() + (-0.5f64).exp() + 2.0f64.exp();
        assert!((p.confidences[2] - 2.0f64.exp() / denom).abs() < 1e-15);
    }

    #[test]
    fn confidences_sum_to_one() {
        let arch = Architecture::new(5, vec![7, 6], 4);
        let m = ModelParams::<f32>::initialize(&arch, 3).unwrap();
        for k in 0..20 {
            let x: Vec<f32> = (0..5).map(|i| ((i * 7 + k) as f32).sin() * 3.0).collect();
            let p = m.predict(&x).unwrap();
            assert!((p.confidences.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let best = p.confidences.iter().cloned().fold(f64::MIN, f64::max);
            assert_eq!(p.confidences[p.label], best);
        }
    }

    #[test]
    fn input_dimension_checked() {
        let m = zero_model(vec![3, 2]);
        assert!(matches!(m.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn logit_values() {
        assert_eq!(logit(0.5, 1e-7), 0.0);
        assert!((logit(0.9, 1e-7) - 9f64.ln()).abs() < 1e-14);
        let top = logit(1.0, 1e-7);
        assert!(top.is_finite());
        assert!((top - ((1.0 - 1e-7) / 1e-7f64).ln()).abs() < 1e-9);
        assert!((logit(0.0, 1e-7) + top).abs() < 1e-6);
    }

    #[test]
    fn initialization_bounds_and_determinism() {
        let arch = Architecture::new(10, vec![20], 3);
        let a = ModelParams::<f64>::initialize(&arch, 5).unwrap();
        let b = ModelParams::<f64>::initialize(&arch, 5).unwrap();
        assert_eq!(a, b);
        let (w0, b0) = a.layer(0);
        let bound = (6.0f64 / 30.0).sqrt();
        assert!(w0.iter().all(|v| v.abs() <= bound));
        assert!(b0.iter().all(|&v| v == 0.0));
        assert_eq!(a.params().len(), 10 * 20 + 20 + 20 * 3 + 3);
    }

    #[test]
    fn serialization_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let arch = Architecture::new(4, vec![3], 2);
        let m = ModelParams::<f32>::initialize(&arch, 17).unwrap();
        let path = m.save(dir.path(), "model-0", 17, "abc").unwrap();
        let back = ModelParams::<f32>::load(&path).unwrap();
        assert_eq!(back.content_bytes(), m.content_bytes());
        let bytes = fs::read(dir.path().join("model-0.params.f32")).unwrap();
        // first weight, little-endian
        assert_eq!(&bytes[..4], &m.params()[0].to_le_bytes());
        let manifest = Manifest::read(&path).unwrap();
        assert_eq!(manifest.get("dims").unwrap(), "4,3,2");
        assert_eq!(manifest.get("seed").unwrap(), "17");
    }
}
