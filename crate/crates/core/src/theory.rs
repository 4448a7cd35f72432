//! Closed-form label-only membership inference under poisoning.
//!
//! Model parameters are assumed drawn from a temperature posterior with a 0-1
//! loss. With `k` label-flipped replicas of a challenge point in the training
//! set, the probability that the model labels the point correctly is
//!
//! ```text
//! Pr[correct | m] = 1 / (e^{(k-m)/tau} + 1 + (C-2) e^{-m/tau})
//! ```
//!
//! for membership bit `m`. A label-only attacker only sees whether the point
//! is classified correctly, so the best test at a fixed false positive rate is
//! a randomized decision on that single bit. [`optimal_tpr`] evaluates the
//! closed form of that optimum; [`np_oracle`] solves the underlying two-variable
//! linear program directly and serves as its independent check.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    /// Posterior temperature.
    pub tau: f64,
    pub num_classes: usize,
    /// Number of poisoned replicas.
    pub k: usize,
    /// Membership bit of the challenge point.
    pub member: bool,
    /// Target false positive rate as a fraction.
    pub x_prime: f64,
    /// Prior membership probability. Carried for completeness; the optimal
    /// attack does not depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl TheoryParams {
    pub fn new(tau: f64, num_classes: usize, k: usize, x_prime: f64) -> Self {
        Self {
            tau,
            num_classes,
            k,
            member: false,
            x_prime,
            lambda: None,
        }
    }

    pub fn with_member(mut self, member: bool) -> Self {
        self.member = member;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig("tau must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("need at least two classes".into()));
        }
        if !(0.0..=1.0).contains(&self.x_prime) {
            return Err(Error::InvalidConfig("x_prime must lie in [0, 1]".into()));
        }
        if let Some(l) = self.lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::InvalidConfig("lambda must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalAttackPoint {
    pub k: usize,
    pub tpr: f64,
    /// Probability of answering "member" when the point is misclassified.
    pub p: f64,
    pub fpr: f64,
}

/// Probability that a model trained with `k` poisoned replicas labels the
/// challenge point correctly.
pub fn prob_correct(params: &TheoryParams) -> f64 {
    let m = if params.member { 1.0 } else { 0.0 };
    let k = params.k as f64;
    let c = params.num_classes as f64;
    1.0 / (((k - m) / params.tau).exp() + 1.0 + (c - 2.0) * (-m / params.tau).exp())
}

/// Maximum TPR at FPR `x_prime`, evaluated from the closed form with every
/// term divided by `e^{k/tau}` so nothing overflows.
pub fn optimal_tpr(params: &TheoryParams) -> Result<OptimalAttackPoint> {
    params.validate()?;
    let x = params.x_prime;
    let c = params.num_classes as f64;
    let r = (-(params.k as f64) / params.tau).exp();
    let q = (-1.0 / params.tau).exp();

    // (C-1) + e^{k/tau}, the denominator D and the coefficient of p, all / e^{k/tau}
    let a = (c - 1.0) * r + 1.0;
    let d = q + ((c - 2.0) * q + 1.0) * r;
    let b = (1.0 - q) + (c - 2.0) * (1.0 - q) * r;
    let p = ((x * a - r) / ((c - 2.0) * r + 1.0)).max(0.0);
    let tpr = (x * a - p * b) / d;
    if !tpr.is_finite() {
        return Err(Error::InvalidInput(format!(
            "closed form not representable at tau = {}",
            params.tau
        )));
    }
    Ok(OptimalAttackPoint {
        k: params.k,
        tpr: tpr.clamp(0.0, 1.0),
        p: p.clamp(0.0, 1.0),
        fpr: x,
    })
}

const ORACLE_GRID: usize = 4096;

/// Solves `max p0*a_in + p1*(1-a_in)` subject to `p0*a_out + p1*(1-a_out) = x'`
/// over the unit square, where `a_in`/`a_out` are the IN/OUT probabilities of a
/// correct label and `p0`/`p1` are the probabilities of answering "member"
/// after a correct/incorrect label.
///
/// The optimum of a linear objective over a segment lies at a vertex, so all
/// edge intersections are evaluated exactly; a uniform grid along the feasible
/// segment is scanned as a cross-check.
pub fn np_oracle(params: &TheoryParams) -> Result<OptimalAttackPoint> {
    params.validate()?;
    let a_in = prob_correct(&params.clone().with_member(true));
    let a_out = prob_correct(&params.clone().with_member(false));
    let x = params.x_prime;
    let objective = |p0: f64, p1: f64| p0 * a_in + p1 * (1.0 - a_in);
    let p0_of = |p1: f64| (x - p1 * (1.0 - a_out)) / a_out;
    let slack = 1e-12;
    let inside = |v: f64| (-slack..=1.0 + slack).contains(&v);

    // feasible p1 range
    let mut vertices: Vec<(f64, f64)> = Vec::new();
    for p0 in [0.0, 1.0] {
        let p1 = (x - p0 * a_out) / (1.0 - a_out);
        if inside(p1) {
            vertices.push((p0, p1.clamp(0.0, 1.0)));
        }
    }
    for p1 in [0.0, 1.0] {
        let p0 = p0_of(p1);
        if inside(p0) {
            vertices.push((p0.clamp(0.0, 1.0), p1));
        }
    }
    if vertices.is_empty() {
        return Err(Error::InvalidInput("infeasible FPR constraint".into()));
    }

    let mut best = vertices[0];
    for &v in &vertices[1..] {
        let (ov, ob) = (objective(v.0, v.1), objective(best.0, best.1));
        if ov > ob || (ov == ob && v.1 < best.1) {
            best = v;
        }
    }

    let lo = vertices.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let hi = vertices.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    for i in 0..=ORACLE_GRID {
        let p1 = lo + (hi - lo) * i as f64 / ORACLE_GRID as f64;
        let p0 = p0_of(p1).clamp(0.0, 1.0);
        if objective(p0, p1) > objective(best.0, best.1) + 1e-12 {
            best = (p0, p1);
        }
    }

    Ok(OptimalAttackPoint {
        k: params.k,
        tpr: objective(best.0, best.1).clamp(0.0, 1.0),
        p: best.1,
        fpr: x,
    })
}

pub fn tpr_vs_k_curve(
    tau: f64,
    num_classes: usize,
    x_prime: f64,
    ks: impl IntoIterator<Item = usize>,
) -> Result<Vec<OptimalAttackPoint>> {
    let curve = ks
        .into_iter()
        .map(|k| optimal_tpr(&TheoryParams::new(tau, num_classes, k, x_prime)))
        .collect::<Result<Vec<_>>>()?;
    if curve.is_empty() {
        return Err(Error::EmptyInput("k range"));
    }
    Ok(curve)
}

pub fn write_curve_csv<W: Write>(out: W, curve: &[OptimalAttackPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "tpr", "p"])?;
    for pt in curve {
        w.write_record([pt.k.to_string(), format!("{:.12}", pt.tpr), format!("{:.12}", pt.p)])?;
    }
    w.flush()?;
    Ok(())
}
