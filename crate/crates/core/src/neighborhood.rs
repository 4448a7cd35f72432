//! Membership neighborhoods: perturbed copies of a challenge point whose logit
//! distributions over IN and OUT shadow models stay KL-close to the point's own.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::NeighborCandidate;
use crate::error::{Error, Result};
use crate::metrics::fmt;
use crate::nncore::{logit, Classifier};
use crate::persist;

/// Lower bound applied to fitted logit variances.
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// Clamp used when converting confidences to logits.
pub const LOGIT_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub var: f64,
}

impl Gaussian {
    /// Population mean and variance, variance floored at [`VARIANCE_FLOOR`].
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            var: var.max(VARIANCE_FLOOR),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitStats {
    pub inside: Gaussian,
    pub outside: Gaussian,
}

/// `KL(a || b)` for univariate Gaussians.
pub fn kl_gaussian(a: Gaussian, b: Gaussian) -> Result<f64> {
    if !(a.var > 0.0 && b.var > 0.0) {
        return Err(Error::InvalidInput("KL needs positive variances".into()));
    }
    if a == b {
        return Ok(0.0);
    }
    let d = a.mean - b.mean;
    let kl = 0.5 * (b.var / a.var).ln() + (a.var + d * d) / (2.0 * b.var) - 0.5;
    Ok(kl.max(0.0))
}

fn side_logits<M: Classifier>(x: &[f32], y: usize, models: &[&M], eps: f64) -> Result<Vec<f64>> {
    models
        .iter()
        .map(|m| m.confidence(x, y).map(|c| logit(c, eps)))
        .collect()
}

/// Gaussian fits of `logit(confidence on y)` at `x` over each model set.
pub fn fit_logit_stats<M: Classifier>(
    x: &[f32],
    y: usize,
    in_models: &[&M],
    out_models: &[&M],
    eps: f64,
) -> Result<LogitStats> {
    if in_models.len() < 2 || out_models.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two models per side, got {} IN and {} OUT",
            in_models.len(),
            out_models.len()
        )));
    }
    Ok(LogitStats {
        inside: Gaussian::fit(&side_logits(x, y, in_models, eps)?),
        outside: Gaussian::fit(&side_logits(x, y, out_models, eps)?),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborDiagnostic {
    /// Position in the candidate pool.
    pub candidate: usize,
    pub feature_hash: String,
    pub kl_in: f64,
    pub kl_out: f64,
    /// Passed both KL inequalities.
    pub admitted: bool,
    /// Ended up in the neighborhood (strict pass or fallback fill).
    pub selected: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborhoodSet {
    pub members: Vec<NeighborCandidate>,
    pub threshold: f64,
    pub diagnostics: Vec<NeighborDiagnostic>,
    /// Some members failed the KL test and were added to reach the target size.
    pub fallback_filled: bool,
    pub challenge_stats: Option<LogitStats>,
}

impl NeighborhoodSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// A neighborhood with no members; the score then rests on the challenge point alone.
    pub fn empty() -> Self {
        Self {
            members: Vec::new(),
            threshold: 0.0,
            diagnostics: Vec::new(),
            fallback_filled: false,
            challenge_stats: None,
        }
    }
}

fn feature_cmp(a: &[f32], b: &[f32]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Chooses up to `n` candidates given their `(kl_in, kl_out)` divergences.
///
/// Candidates passing both `<= t_nb` checks come first, ordered by
/// `max(kl_in, kl_out)`; if fewer than `n` pass, the rest are filled from the
/// failing candidates in the same order. Ties break on feature values, so the
/// result does not depend on pool order. Returns (selected indices, number that
/// passed the strict test).
pub fn rank_candidates(
    divergences: &[(f64, f64)],
    features: &[&[f32]],
    t_nb: f64,
    n: usize,
) -> (Vec<usize>, usize) {
    let key = |i: usize| divergences[i].0.max(divergences[i].1);
    let mut order: Vec<usize> = (0..divergences.len()).collect();
    order.sort_by(|&a, &b| {
        key(a)
            .total_cmp(&key(b))
            .then_with(|| feature_cmp(features[a], features[b]))
            .then(a.cmp(&b))
    });
    let passes = |i: usize| divergences[i].0 <= t_nb && divergences[i].1 <= t_nb;
    let passed: Vec<usize> = order.iter().copied().filter(|&i| passes(i)).collect();
    let n_passed = passed.len();
    let mut chosen: Vec<usize> = passed.into_iter().take(n).collect();
    if chosen.len() < n {
        chosen.extend(order.iter().copied().filter(|&i| !passes(i)).take(n - chosen.len()));
    }
    (chosen, n_passed)
}

/// Selects the membership neighborhood of `(x, y)` from `candidates`.
///
/// Divergences are `KL(candidate || challenge)` on the IN and OUT logit fits.
#[allow(clippy::too_many_arguments)]
pub fn select_neighborhood<M: Classifier>(
    x: &[f32],
    y: usize,
    candidates: &[NeighborCandidate],
    in_models: &[&M],
    out_models: &[&M],
    t_nb: f64,
    n: usize,
    eps: f64,
) -> Result<NeighborhoodSet> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("neighbor candidate pool"));
    }
    if let Some(c) = candidates.iter().find(|c| c.label != y) {
        return Err(Error::InvalidInput(format!(
            "candidate label {} differs from challenge label {y}",
            c.label
        )));
    }
    let target = fit_logit_stats(x, y, in_models, out_models, eps)?;
    let divergences: Vec<(f64, f64)> = candidates
        .par_iter()
        .map(|c| {
            let s = fit_logit_stats(&c.x, y, in_models, out_models, eps)?;
            Ok((kl_gaussian(s.inside, target.inside)?, kl_gaussian(s.outside, target.outside)?))
        })
        .collect::<Result<_>>()?;

    let features: Vec<&[f32]> = candidates.iter().map(|c| c.x.as_slice()).collect();
    let (chosen, n_passed) = rank_candidates(&divergences, &features, t_nb, n);
    let mut selected = vec![false; candidates.len()];
    for &i in &chosen {
        selected[i] = true;
    }
    let diagnostics = divergences
        .iter()
        .enumerate()
        .map(|(i, &(kl_in, kl_out))| NeighborDiagnostic {
            candidate: i,
            feature_hash: persist::sha256_hex(&persist::f32_le_bytes(&candidates[i].x))[..16].to_string(),
            kl_in,
            kl_out,
            admitted: kl_in <= t_nb && kl_out <= t_nb,
            selected: selected[i],
        })
        .collect();
    Ok(NeighborhoodSet {
        members: chosen.iter().map(|&i| candidates[i].clone()).collect(),
        threshold: t_nb,
        diagnostics,
        fallback_filled: n_passed < chosen.len(),
        challenge_stats: Some(target),
    })
}

/// One row per candidate: challenge index, feature hash, divergences and flags.
pub fn write_neighborhood_csv<'a, W: Write>(
    out: W,
    sets: impl IntoIterator<Item = (usize, &'a NeighborhoodSet)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["challenge_index", "candidate_hash", "kl_in", "kl_out", "admitted", "selected"])?;
    for (challenge, set) in sets {
        for d in &set.diagnostics {
            w.write_record([
                challenge.to_string(),
                d.feature_hash.clone(),
                fmt(d.kl_in),
                fmt(d.kl_out),
                u8::from(d.admitted).to_string(),
                u8::from(d.selected).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
