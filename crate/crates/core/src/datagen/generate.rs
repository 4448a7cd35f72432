use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Class means for the Gaussian mixture.
///
/// With `dim >= num_classes` the means sit on scaled coordinate axes, so every
/// pair of means is exactly `class_sep` apart. Otherwise each mean is a random
/// unit direction scaled the same way.
fn class_means(num_classes: usize, dim: usize, class_sep: f64, rng: &mut seed::Rng) -> Vec<Vec<f64>> {
    let radius = class_sep / std::f64::consts::SQRT_2;
    (0..num_classes)
        .map(|c| {
            if dim >= num_classes {
                let mut mu = vec![0.0; dim];
                mu[c] = radius;
                mu
            } else {
                let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                dir.into_iter().map(|v| v * radius / norm).collect()
            }
        })
        .collect()
}

/// Isotropic unit-variance Gaussian blobs, one per class, rows grouped by class.
pub fn gen_gaussian_mixture(
    num_classes: usize,
    dim: usize,
    n_per_class: usize,
    class_sep: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes == 0 || dim == 0 || n_per_class == 0 {
        return Err(Error::InvalidConfig("gaussian mixture counts must be positive".into()));
    }
    if !(class_sep > 0.0 && class_sep.is_finite()) {
        return Err(Error::InvalidConfig("class_sep must be positive".into()));
    }
    let mut rng = seed::rng(seed);
    let means = class_means(num_classes, dim, class_sep, &mut rng);
    let mut features = Vec::with_capacity(num_classes * n_per_class * dim);
    let mut labels = Vec::with_capacity(num_classes * n_per_class);
    for (c, mu) in means.iter().enumerate() {
        for _ in 0..n_per_class {
            for &m in mu {
                let z: f64 = StandardNormal.sample(&mut rng);
                features.push((m + z) as f32);
            }
            labels.push(c);
        }
    }
    Dataset::new(features, labels, dim, num_classes)
}

/// Binary feature vectors: a random prototype per class with independent bit flips.
pub fn gen_binary_tabular(
    num_classes: usize,
    dim: usize,
    n_per_class: usize,
    flip_noise: f64,
    seed: u64,
) -> Result<Dataset> {
    binary_tabular_with_prototypes(num_classes, dim, n_per_class, flip_noise, seed).map(|(d, _)| d)
}

fn binary_tabular_with_prototypes(
    num_classes: usize,
    dim: usize,
    n_per_class: usize,
    flip_noise: f64,
    seed: u64,
) -> Result<(Dataset, Vec<Vec<bool>>)> {
    if num_classes == 0 || dim == 0 || n_per_class == 0 {
        return Err(Error::InvalidConfig("binary tabular counts must be positive".into()));
    }
    if !(0.0..0.5).contains(&flip_noise) {
        return Err(Error::InvalidConfig("flip_noise must be in [0, 0.5)".into()));
    }
    let mut rng = seed::rng(seed);
    let prototypes: Vec<Vec<bool>> = (0..num_classes)
        .map(|_| (0..dim).map(|_| rng.random_bool(0.5)).collect())
        .collect();
    let mut features = Vec::with_capacity(num_classes * n_per_class * dim);
    let mut labels = Vec::with_capacity(num_classes * n_per_class);
    for (c, proto) in prototypes.iter().enumerate() {
        for _ in 0..n_per_class {
            for &bit in proto {
                let flipped = bit ^ rng.random_bool(flip_noise);
                features.push(if flipped { 1.0 } else { 0.0 });
            }
            labels.push(c);
        }
    }
    Ok((Dataset::new(features, labels, dim, num_classes)?, prototypes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_point_per_class() {
        let d = gen_gaussian_mixture(3, 4, 1, 2.0, 9).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.labels(), &[0, 1, 2]);
    }

    #[test]
    fn generators_are_seed_deterministic() {
        assert_eq!(
            gen_gaussian_mixture(4, 6, 5, 3.0, 1).unwrap(),
            gen_gaussian_mixture(4, 6, 5, 3.0, 1).unwrap()
        );
        assert_ne!(
            gen_gaussian_mixture(4, 6, 5, 3.0, 1).unwrap(),
            gen_gaussian_mixture(4, 6, 5, 3.0, 2).unwrap()
        );
        assert_eq!(
            gen_binary_tabular(3, 32, 4, 0.1, 5).unwrap(),
            gen_binary_tabular(3, 32, 4, 0.1, 5).unwrap()
        );
    }

    #[test]
    fn low_dim_means_keep_radius() {
        let mut rng = seed::rng(3);
        let means = class_means(5, 2, 4.0, &mut rng);
        for mu in means {
            let r = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - 4.0 / std::f64::consts::SQRT_2).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_flip_noise_reproduces_prototype() {
        let d = gen_binary_tabular(2, 50, 6, 0.0, 11).unwrap();
        for c in 0..2 {
            let first = d.row(c * 6).to_vec();
            for i in 0..6 {
                assert_eq!(d.row(c * 6 + i), first.as_slice());
            }
        }
    }

    #[test]
    fn distinct_seeds_give_distinct_prototypes() {
        let a = gen_binary_tabular(1, 128, 1, 0.0, 1).unwrap();
        let b = gen_binary_tabular(1, 128, 1, 0.0, 2).unwrap();
        assert_ne!(a.row(0), b.row(0));
    }

    #[test]
    fn flip_rate_within_three_sigma() {
        let noise = 0.025;
        let (d, protos) = binary_tabular_with_prototypes(10, 500, 20, noise, 77).unwrap();
        let mut flips = 0usize;
        let mut bits = 0usize;
        for (row, y) in d.iter() {
            for (&v, &p) in row.iter().zip(&protos[y]) {
                flips += usize::from((v > 0.5) != p);
                bits += 1;
            }
        }
        assert_eq!(bits, 100_000);
        let rate = flips as f64 / bits as f64;
        let sigma = (noise * (1.0 - noise) / bits as f64).sqrt();
        assert!((rate - noise).abs() < 3.0 * sigma, "rate {rate}");
    }

    #[test]
    fn expected_hamming_distance() {
        // dim 600 at 2.5% noise: mean distance to the prototype is 15.
        let (d, protos) = binary_tabular_with_prototypes(1, 600, 400, 0.025, 5).unwrap();
        let mean = d
            .iter()
            .map(|(row, y)| row.iter().zip(&protos[y]).filter(|(&v, &p)| (v > 0.5) != p).count())
            .sum::<usize>() as f64
            / d.len() as f64;
        // sd of the mean = sqrt(600 * 0.025 * 0.975 / 400) ~ 0.19
        assert!((mean - 15.0).abs() < 0.6, "mean distance {mean}");
    }
}
