//! ROC analysis for membership scores (higher score means "member").

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FPR levels reported by default: 0.1%, 1%, 5% and 10%.
pub const REPORT_FPRS: [f64; 4] = [0.001, 0.01, 0.05, 0.1];

/// How MI accuracy is computed; echoed into every report.
pub const MI_ACCURACY_RULE: &str = "max over thresholds of (TPR + TNR) / 2";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Predict member iff score >= threshold. The first point uses +inf.
    pub threshold: f64,
    pub false_positives: usize,
    pub true_positives: usize,
}

/// Achievable (FPR, TPR) pairs, one per distinct score, from (0, 0) to (1, 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub n_in: usize,
    pub n_out: usize,
}

fn check_scores(scores_in: &[f64], scores_out: &[f64]) -> Result<()> {
    if scores_in.is_empty() {
        return Err(Error::EmptyInput("member scores"));
    }
    if scores_out.is_empty() {
        return Err(Error::EmptyInput("non-member scores"));
    }
    if scores_in.iter().chain(scores_out).any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    Ok(())
}

pub fn roc_curve(scores_in: &[f64], scores_out: &[f64]) -> Result<RocCurve> {
    check_scores(scores_in, scores_out)?;
    let (n_in, n_out) = (scores_in.len(), scores_out.len());
    let mut all: Vec<(f64, bool)> = scores_in
        .iter()
        .map(|&s| (s, true))
        .chain(scores_out.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
        false_positives: 0,
        true_positives: 0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_out as f64,
            tpr: tp as f64 / n_in as f64,
            threshold: t,
            false_positives: fp,
            true_positives: tp,
        });
    }
    Ok(RocCurve { points, n_in, n_out })
}

impl RocCurve {
    /// Area under the step function, summed as rectangles of the lower TPR.
    pub fn step_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * w[0].tpr)
            .sum()
    }

    /// Smallest non-zero FPR the observations can express.
    pub fn min_resolvable_fpr(&self) -> f64 {
        1.0 / self.n_out as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["threshold", "fpr", "tpr"])?;
        for p in &self.points {
            w.write_record([fmt(p.threshold), fmt(p.fpr), fmt(p.tpr)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Best TPR among curve points whose FPR does not exceed `fpr_target`.
pub fn tpr_at_fpr(curve: &RocCurve, fpr_target: f64) -> f64 {
    curve
        .points
        .iter()
        .filter(|p| p.fpr <= fpr_target + 1e-12)
        .map(|p| p.tpr)
        .fold(0.0, f64::max)
}

/// Probability that a random member score beats a random non-member score,
/// ties counting one half.
pub fn auc(scores_in: &[f64], scores_out: &[f64]) -> Result<f64> {
    check_scores(scores_in, scores_out)?;
    let mut out_sorted = scores_out.to_vec();
    out_sorted.sort_by(f64::total_cmp);
    // twice the Mann-Whitney U statistic, kept integral
    let mut twice_u: u128 = 0;
    for &s in scores_in {
        let below = out_sorted.partition_point(|&o| o < s);
        let not_above = out_sorted.partition_point(|&o| o <= s);
        twice_u += 2 * below as u128 + (not_above - below) as u128;
    }
    Ok(twice_u as f64 / (2.0 * scores_in.len() as f64 * scores_out.len() as f64))
}

/// Best balanced accuracy over all thresholds; at least 0.5.
pub fn mi_accuracy(scores_in: &[f64], scores_out: &[f64]) -> Result<f64> {
    let curve = roc_curve(scores_in, scores_out)?;
    Ok(curve
        .points
        .iter()
        .map(|p| (p.tpr + 1.0 - p.fpr) / 2.0)
        .fold(0.5, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TprAtFpr {
    pub fpr: f64,
    pub tpr: f64,
    /// False when `fpr` is below `1 / n_out`.
    pub resolvable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub attack: String,
    pub tpr_at: Vec<TprAtFpr>,
    /// TPR at the smallest resolvable FPR (`1 / n_out`).
    pub tpr_at_min_fpr: TprAtFpr,
    pub auc: f64,
    pub mi_accuracy: f64,
    pub mi_accuracy_rule: String,
    pub n_in: usize,
    pub n_out: usize,
}

impl MetricReport {
    pub fn tpr_at(&self, fpr: f64) -> Option<f64> {
        self.tpr_at.iter().find(|t| t.fpr == fpr).map(|t| t.tpr)
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "attack",
        "n_in",
        "n_out",
        "auc",
        "mi_accuracy",
        "tpr@0.1%fpr",
        "tpr@1%fpr",
        "tpr@5%fpr",
        "tpr@10%fpr",
        "tpr@min_fpr",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        let mut row = vec![
            self.attack.clone(),
            self.n_in.to_string(),
            self.n_out.to_string(),
            fmt(self.auc),
            fmt(self.mi_accuracy),
        ];
        for fpr in REPORT_FPRS {
            row.push(self.tpr_at(fpr).map(fmt).unwrap_or_default());
        }
        row.push(fmt(self.tpr_at_min_fpr.tpr));
        row
    }
}

pub fn write_reports_csv<W: Write>(out: W, reports: &[MetricReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MetricReport::CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn report(attack: &str, scores_in: &[f64], scores_out: &[f64]) -> Result<MetricReport> {
    let curve = roc_curve(scores_in, scores_out)?;
    let min_fpr = curve.min_resolvable_fpr();
    let tpr_at = REPORT_FPRS
        .iter()
        .map(|&fpr| {
            let resolvable = fpr + 1e-12 >= min_fpr;
            if !resolvable {
                log::warn!(
                    "{attack}: FPR {fpr} is below the resolution 1/{} of the observations",
                    curve.n_out
                );
            }
            TprAtFpr {
                fpr,
                tpr: tpr_at_fpr(&curve, fpr),
                resolvable,
            }
        })
        .collect();
    Ok(MetricReport {
        attack: attack.to_string(),
        tpr_at,
        tpr_at_min_fpr: TprAtFpr {
            fpr: min_fpr,
            tpr: tpr_at_fpr(&curve, min_fpr),
            resolvable: true,
        },
        auc: auc(scores_in, scores_out)?,
        mi_accuracy: mi_accuracy(scores_in, scores_out)?,
        mi_accuracy_rule: MI_ACCURACY_RULE.to_string(),
        n_in: curve.n_in,
        n_out: curve.n_out,
    })
}

/// Fixed-precision float rendering so CSV output is byte-stable.
pub(crate) fn fmt(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.10}")
    }
}
