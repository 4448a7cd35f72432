//! End-to-end privacy game, static baselines, ablations and run bookkeeping.

mod ablation;
mod config;
mod cost;
mod game;
mod manifest;

pub use ablation::{run_ablation, run_static_sweep, write_sweep_csv, Knob, SweepRow};
pub use config::{DatasetSpec, ExperimentConfig, ModelSpec, NeighborhoodConfig};
pub use cost::{account_cost, CostReport};
pub use game::{accuracy, prepare_data, run_game, run_privacy_game, run_static_baseline, GameData, GameOutcome, Poisoning};
pub use manifest::RunManifest;
