//! Datasets, challenger/attacker splits and neighbor candidates.

mod dataset;
mod generate;
mod neighbors;
mod split;

pub use dataset::Dataset;
pub use generate::{gen_binary_tabular, gen_gaussian_mixture};
pub use neighbors::{gen_neighbors, Modality, NeighborCandidate};
pub use split::{make_split_plan, SplitPlan};

/// A point whose membership is under test, with its row index in the pool it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct ChallengePoint {
    pub index: usize,
    pub x: Vec<f32>,
    pub y: usize,
}

impl ChallengePoint {
    pub fn from_dataset(data: &Dataset, index: usize) -> Self {
        Self {
            index,
            x: data.row(index).to_vec(),
            y: data.label(index),
        }
    }
}
