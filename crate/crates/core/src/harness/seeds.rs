//! Seed derivation for experiments.
//!
//! `run_seed = derive_seed(master, run)`. Every component of a run then draws from its own
//! named child stream of `run_seed`, and per-source streams are further split by the source
//! index, so adding an evidence source never shifts the streams of the others. Data
//! subsampling uses the `data` child of the master seed and is shared by all runs.

use crate::nn::{derive_seed, label_of, Rng};

pub fn data_rng(master: u64) -> Rng {
    Rng::new(master).derive_named("data")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub run: usize,
    pub seed: u64,
}

impl RunSeeds {
    pub fn new(master: u64, run: usize) -> Self {
        Self {
            run,
            seed: derive_seed(master, run as u64),
        }
    }

    fn child(&self, name: &str) -> Rng {
        Rng::new(self.seed).derive_named(name)
    }

    pub fn pretrain(&self) -> Rng {
        self.child("pretrain")
    }

    /// k-means seed, shared by the baseline and the post-transfer clustering.
    pub fn kmeans(&self) -> u64 {
        derive_seed(self.seed, label_of("kmeans"))
    }

    /// Noise draws and permutations of evidence source `j`.
    pub fn evidence(&self, j: usize) -> Rng {
        self.child("evidence").derive(j as u64)
    }

    pub fn evidence_encoder(&self, j: usize) -> Rng {
        self.child("evidence_encoder").derive(j as u64)
    }

    /// Head initialization; head `j` uses the `j`-th child of this stream.
    pub fn heads(&self) -> Rng {
        self.child("heads")
    }

    pub fn transfer(&self) -> Rng {
        self.child("transfer")
    }
}
