use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

/// Which of `num_models` models train on which of `n_points` points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    num_models: usize,
    n_points: usize,
    challenge_indices: Vec<usize>,
    // row-major [model][point]
    inclusion: Vec<bool>,
}

impl SplitPlan {
    pub fn num_models(&self) -> usize {
        self.num_models
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn challenge_indices(&self) -> &[usize] {
        &self.challenge_indices
    }

    pub fn includes(&self, model: usize, point: usize) -> bool {
        self.inclusion[model * self.n_points + point]
    }

    /// Indices of the points model `model` trains on, ascending.
    pub fn training_indices(&self, model: usize) -> Vec<usize> {
        (0..self.n_points).filter(|&p| self.includes(model, p)).collect()
    }

    pub fn in_models(&self, point: usize) -> Vec<usize> {
        (0..self.num_models).filter(|&j| self.includes(j, point)).collect()
    }

    pub fn out_models(&self, point: usize) -> Vec<usize> {
        (0..self.num_models).filter(|&j| !self.includes(j, point)).collect()
    }

    pub fn column_popcount(&self, point: usize) -> usize {
        (0..self.num_models).filter(|&j| self.includes(j, point)).count()
    }

    /// One line of `0`/`1` characters per model.
    pub fn to_rows(&self) -> Vec<String> {
        (0..self.num_models)
            .map(|j| {
                (0..self.n_points)
                    .map(|p| if self.includes(j, p) { '1' } else { '0' })
                    .collect()
            })
            .collect()
    }

    pub fn from_rows(rows: &[String], challenge_indices: Vec<usize>) -> Result<Self> {
        let n_points = rows.first().map_or(0, |r| r.len());
        let mut inclusion = Vec::with_capacity(rows.len() * n_points);
        for row in rows {
            if row.len() != n_points {
                return Err(Error::Misaligned("split plan rows differ in length".into()));
            }
            for ch in row.chars() {
                match ch {
                    '0' => inclusion.push(false),
                    '1' => inclusion.push(true),
                    other => {
                        return Err(Error::InvalidInput(format!("bad split plan character `{other}`")))
                    }
                }
            }
        }
        Ok(Self {
            num_models: rows.len(),
            n_points,
            challenge_indices,
            inclusion,
        })
    }
}

/// Balanced inclusion for challenge points (exactly half the models each),
/// fair coin flips for every other point.
pub fn make_split_plan(
    n_points: usize,
    challenge_indices: &[usize],
    num_models: usize,
    seed: u64,
) -> Result<SplitPlan> {
    if num_models % 2 != 0 || num_models == 0 {
        return Err(Error::OddModelCount(num_models));
    }
    let mut is_challenge = vec![false; n_points];
    for &c in challenge_indices {
        if c >= n_points {
            return Err(Error::InvalidInput(format!(
                "challenge index {c} out of range for {n_points} points"
            )));
        }
        if std::mem::replace(&mut is_challenge[c], true) {
            return Err(Error::InvalidInput(format!("duplicate challenge index {c}")));
        }
    }

    let half = num_models / 2;
    let mut rng = seed::rng(seed);
    let mut inclusion = vec![false; num_models * n_points];
    let mut order: Vec<usize> = (0..num_models).collect();
    for (p, &challenge) in is_challenge.iter().enumerate() {
        if challenge {
            order.sort_unstable();
            order.shuffle(&mut rng);
            for &j in &order[..half] {
                inclusion[j * n_points + p] = true;
            }
        } else {
            for j in 0..num_models {
                inclusion[j * n_points + p] = rng.random_bool(0.5);
            }
        }
    }
    Ok(SplitPlan {
        num_models,
        n_points,
        challenge_indices: challenge_indices.to_vec(),
        inclusion,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;

    #[test]
    fn odd_model_count_rejected() {
        assert!(matches!(make_split_plan(10, &[], 3, 0), Err(Error::OddModelCount(3))));
        assert!(make_split_plan(10, &[10], 4, 0).is_err());
        assert!(make_split_plan(10, &[2, 2], 4, 0).is_err());
    }

    #[test]
    fn single_challenge_column_has_m_ones() {
        let plan = make_split_plan(50, &[17], 16, 3).unwrap();
        assert_eq!(plan.column_popcount(17), 8);
        assert_eq!(plan.in_models(17).len(), 8);
        assert_eq!(plan.out_models(17).len(), 8);
    }

    #[test]
    fn unconstrained_columns_are_fair_coins() {
        let plan = make_split_plan(2000, &[], 16, 5).unwrap();
        let ones: usize = (0..2000).map(|p| plan.column_popcount(p)).sum();
        let rate = ones as f64 / (2000.0 * 16.0);
        // sd = 0.5 / sqrt(32000) ~ 0.0028
        assert!((rate - 0.5).abs() < 0.012, "rate {rate}");
        // Unbalanced columns must occur, otherwise the coin flips are not independent.
        assert!((0..2000).any(|p| plan.column_popcount(p) != 8));
    }

    #[test]
    fn all_balanced_patterns_appear_across_seeds() {
        let mut seen = BTreeSet::new();
        for seed in 0..200 {
            let plan = make_split_plan(5, &[1, 3], 4, seed).unwrap();
            for c in [1, 3] {
                assert_eq!(plan.column_popcount(c), 2);
                let pattern: Vec<bool> = (0..4).map(|j| plan.includes(j, c)).collect();
                seen.insert(pattern);
            }
        }
        // C(4, 2) = 6 distinct balanced columns.
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn rows_round_trip() {
        let plan = make_split_plan(12, &[0, 5], 6, 9).unwrap();
        let back = SplitPlan::from_rows(&plan.to_rows(), vec![0, 5]).unwrap();
        assert_eq!(back, plan);
    }

    proptest! {
        #[test]
        fn challenge_columns_always_balanced(
            n in 1usize..40,
            half in 1usize..6,
            seed in any::<u64>(),
            picks in proptest::collection::btree_set(0usize..40, 0..8),
        ) {
            let challenges: Vec<usize> = picks.into_iter().filter(|&c| c < n).collect();
            let plan = make_split_plan(n, &challenges, 2 * half, seed).unwrap();
            for &c in &challenges {
                prop_assert_eq!(plan.column_popcount(c), half);
            }
        }
    }
}
