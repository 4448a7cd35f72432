//! A desk-scale laboratory for label-only membership inference under
//! adaptive data poisoning.
//!
//! The pipeline: [`poisoner`] picks how many label-flipped replicas of each
//! challenge point to inject, [`neighborhood`] selects perturbed copies whose
//! logit distributions track the challenge point, [`attack`] scores target
//! models through label-only queries, and [`metrics`] turns scores into ROC
//! summaries. [`theory`] holds the closed-form optimal attack, and
//! [`harness`] runs the whole membership game end to end.

pub mod attack;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod neighborhood;
pub mod nncore;
pub mod persist;
pub mod poisoner;
pub mod seed;
pub mod theory;

pub use error::{Error, Result};
