use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, GroundTruth, Provenance};
use crate::error::{Error, Result};
use crate::evidence::GroupMapping;
use crate::nn::{Matrix, Rng};

/// Maximum draws per cluster centre before the spec is declared infeasible.
const MAX_CENTRE_DRAWS: usize = 10_000;

/// Gaussian blobs whose clusters are partitioned into coarser supergroups.
///
/// Centres are drawn uniformly from the cube `[-s·σ, s·σ]^dims` (`s = separation`,
/// `σ = cluster_std`) and redrawn until every pair is at least `s·σ` apart. Samples are spread
/// over clusters as evenly as possible (`i mod n_clusters`) and then shuffled. Cluster `c`
/// belongs to supergroup `c mod n_supergroups`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub dims: usize,
    pub n_clusters: usize,
    pub n_supergroups: usize,
    pub cluster_std: f64,
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.dims == 0 || self.n_clusters == 0 {
            return Err(Error::Config(
                "synthetic spec needs positive n_samples, dims and n_clusters".into(),
            ));
        }
        if self.n_supergroups == 0 || self.n_supergroups > self.n_clusters {
            return Err(Error::Config(format!(
                "n_supergroups must lie in [1, n_clusters = {}], got {}",
                self.n_clusters, self.n_supergroups
            )));
        }
        if !(self.cluster_std > 0.0) || !(self.separation >= 0.0) {
            return Err(Error::Config(
                "cluster_std must be positive and separation non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Cluster → supergroup table.
    pub fn supergroup_mapping(&self) -> GroupMapping {
        GroupMapping::Table((0..self.n_clusters).map(|c| c % self.n_supergroups).collect())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub centres: Matrix,
    /// Supergroup of every sample.
    pub supergroups: Vec<usize>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let rng = Rng::new(spec.seed);
    let min_dist = spec.separation * spec.cluster_std;
    let half = min_dist.max(spec.cluster_std);
    let mut centres = Matrix::zeros(spec.n_clusters, spec.dims);
    let mut centre_rng = rng.derive_named("centres");
    for c in 0..spec.n_clusters {
        let mut draws = 0;
        loop {
            if draws == MAX_CENTRE_DRAWS {
                return Err(Error::Config(format!(
                    "could not place {} centres {min_dist} apart in {} dimensions",
                    spec.n_clusters, spec.dims
                )));
            }
            draws += 1;
            let candidate: Vec<f64> = (0..spec.dims)
                .map(|_| centre_rng.uniform_range(-half, half))
                .collect();
            let ok = (0..c).all(|o| {
                let d2: f64 = centres
                    .row(o)
                    .iter()
                    .zip(&candidate)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                d2 >= min_dist * min_dist
            });
            if ok {
                centres.row_mut(c).copy_from_slice(&candidate);
                break;
            }
        }
    }

    let mut labels: Vec<usize> = (0..spec.n_samples).map(|i| i % spec.n_clusters).collect();
    let mut sample_rng = rng.derive_named("samples");
    sample_rng.shuffle(&mut labels);
    let mut features = Matrix::zeros(spec.n_samples, spec.dims);
    for (i, &c) in labels.iter().enumerate() {
        for (v, m) in features.row_mut(i).iter_mut().zip(centres.row(c)) {
            *v = m + spec.cluster_std * sample_rng.normal();
        }
    }
    let supergroups = labels.iter().map(|&c| c % spec.n_supergroups).collect();
    let dataset = Dataset::new(
        format!("blobs-{}x{}-k{}", spec.n_samples, spec.dims, spec.n_clusters),
        features,
        Some(GroundTruth::new(labels)),
        Provenance::Synthetic,
    )?;
    Ok(SyntheticData {
        dataset,
        centres,
        supergroups,
    })
}
