use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use super::config::ExperimentConfig;
use super::game::{run_game, run_static_baseline, GameOutcome, Poisoning};
use crate::error::{Error, Result};
use crate::metrics::{fmt as fmt_f64, MetricReport};

/// Hyperparameters that can be swept.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Knob {
    TP,
    M,
    KMax,
    TNb,
    NeighborhoodSize,
}

impl Knob {
    pub const ALL: [Knob; 5] = [Knob::TP, Knob::M, Knob::KMax, Knob::TNb, Knob::NeighborhoodSize];

    pub fn name(self) -> &'static str {
        match self {
            Knob::TP => "t_p",
            Knob::M => "m",
            Knob::KMax => "k_max",
            Knob::TNb => "t_nb",
            Knob::NeighborhoodSize => "neighborhood_size",
        }
    }

    /// A copy of `cfg` with this knob set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut out = cfg.clone();
        let count = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 && value <= usize::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidConfig(format!("{} takes whole numbers, got {value}", self.name())))
            }
        };
        match self {
            Knob::TP => out.poison.t_p = value,
            Knob::M => out.poison.m = count()?,
            Knob::KMax => out.poison.k_max = count()?,
            Knob::TNb => out.neighborhood.t_nb = value,
            Knob::NeighborhoodSize => out.neighborhood.size = count()?,
        }
        out.validate()?;
        Ok(out)
    }
}

impl fmt::Display for Knob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Knob {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Knob::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKnob(s.to_string()))
    }
}

/// One swept setting and what it produced.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub value: f64,
    pub reports: Vec<MetricReport>,
    pub shadow_models: usize,
    pub target_accuracy: f64,
}

impl SweepRow {
    fn from_outcome(value: f64, o: &GameOutcome) -> Self {
        Self {
            value,
            reports: o.reports.clone(),
            shadow_models: o.cost.shadow_models,
            target_accuracy: o.target_accuracy,
        }
    }
}

pub fn write_sweep_csv<W: Write>(out: W, label: &str, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![label.to_string()];
    header.extend(MetricReport::CSV_HEADER.iter().map(|s| s.to_string()));
    header.push("shadow_models".into());
    header.push("target_accuracy".into());
    w.write_record(&header)?;
    for row in rows {
        for r in &row.reports {
            let mut rec = vec![fmt_value(row.value)];
            rec.extend(r.csv_row());
            rec.push(row.shadow_models.to_string());
            rec.push(fmt_f64(row.target_accuracy));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fmt_value(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

fn write_table(path: &Path, label: &str, rows: &[SweepRow]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    write_sweep_csv(BufWriter::new(File::create(path)?), label, rows)
}

/// Re-runs the game once per value of `knob`. Sub-runs share the model cache,
/// so only the models whose inputs changed are fitted again. Writes
/// `<out_dir>/ablation_<knob>.csv`.
pub fn run_ablation(cfg: &ExperimentConfig, knob: Knob, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("ablation needs at least one value".into()));
    }
    let mut rows = Vec::new();
    for &v in values {
        let mut sub = knob.apply(cfg, v)?;
        sub.cache_dir = Some(cfg.cache_dir());
        let dir = cfg.out_dir.join("ablate").join(knob.name()).join(fmt_value(v));
        let mode = if cfg.game_strict { Poisoning::Strict } else { Poisoning::Adaptive };
        let outcome = run_game(&sub, mode, &dir)?;
        rows.push(SweepRow::from_outcome(v, &outcome));
    }
    write_table(&cfg.out_dir.join(format!("ablation_{knob}.csv")), knob.name(), &rows)?;
    Ok(rows)
}

/// Static baselines for each `k`, written to `<out_dir>/static_sweep.csv`.
pub fn run_static_sweep(cfg: &ExperimentConfig, ks: &[usize]) -> Result<Vec<(usize, GameOutcome)>> {
    let mut outcomes = Vec::new();
    for &k in ks {
        outcomes.push((k, run_static_baseline(cfg, k)?));
    }
    let rows: Vec<SweepRow> = outcomes.iter().map(|(k, o)| SweepRow::from_outcome(*k as f64, o)).collect();
    write_table(&cfg.out_dir.join("static_sweep.csv"), "k", &rows)?;
    Ok(outcomes)
}
