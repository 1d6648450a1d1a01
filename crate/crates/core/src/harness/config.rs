use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{load_csv, load_idx, Dataset};
use super::synth::{generate_synthetic, SyntheticSpec};
use crate::autoenc::DenoisingAEConfig;
use crate::cluster::KMeansConfig;
use crate::error::{Error, Result};
use crate::evidence::{EvidenceEncoderConfig, EvidenceQuality, GroupMapping};
use crate::nn::{OptimizerConfig, Rng};
use crate::transfer::{TransferConfig, TransferMode};

/// The most evidence sources one configuration may combine.
pub const MAX_EVIDENCE_SOURCES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic(SyntheticSpec),
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// Stratified subsample size; the whole file when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subsample: Option<usize>,
    },
    Csv {
        path: PathBuf,
    },
}

impl DatasetSpec {
    /// Loads or generates the data. Subsampling draws from `rng`.
    pub fn load(&self, rng: &mut Rng) -> Result<Dataset> {
        match self {
            DatasetSpec::Synthetic(spec) => Ok(generate_synthetic(spec)?.dataset),
            DatasetSpec::Idx {
                images,
                labels,
                subsample,
            } => {
                let ds = load_idx(images, labels)?;
                match subsample {
                    Some(n) if *n < ds.len() => ds.stratified_subsample(*n, rng),
                    _ => Ok(ds),
                }
            }
            DatasetSpec::Csv { path } => load_csv(path),
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DatasetSpec::Synthetic(_) => {}
            DatasetSpec::Idx { images, labels, .. } => {
                fix(images);
                fix(labels);
            }
            DatasetSpec::Csv { path } => fix(path),
        }
    }
}

/// One evidence source: where its labels come from and their width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceSpec {
    pub quality: EvidenceQuality,
    pub width: usize,
    /// Class → group mapping for real and random-index evidence (`mod`, `identity`,
    /// `hash_mod`, `constant`, `table:…`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<String>,
    /// Evidence label file used instead of a mapping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl EvidenceSpec {
    pub fn real(width: usize, mapping: &str) -> Self {
        Self {
            quality: EvidenceQuality::Real,
            width,
            mapping: Some(mapping.to_string()),
            file: None,
        }
    }

    pub fn white_noise(width: usize) -> Self {
        Self {
            quality: EvidenceQuality::WhiteNoise,
            width,
            mapping: None,
            file: None,
        }
    }

    pub fn random_index(width: usize, mapping: &str) -> Self {
        Self {
            quality: EvidenceQuality::RandomIndex,
            ..Self::real(width, mapping)
        }
    }

    /// Short label such as `real_w3` or `noise_w3`.
    pub fn label(&self) -> String {
        let q = match self.quality {
            EvidenceQuality::Real => "real",
            EvidenceQuality::WhiteNoise => "noise",
            EvidenceQuality::RandomIndex => "rindex",
        };
        format!("{q}_w{}", self.width)
    }

    pub fn parsed_mapping(&self) -> Result<Option<GroupMapping>> {
        self.mapping.as_deref().map(GroupMapping::parse).transpose()
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::Config("evidence width must be positive".into()));
        }
        match self.quality {
            EvidenceQuality::WhiteNoise => {
                if self.width < 2 {
                    return Err(Error::Config("white-noise evidence needs width >= 2".into()));
                }
            }
            EvidenceQuality::Real | EvidenceQuality::RandomIndex => {
                if self.mapping.is_some() == self.file.is_some() {
                    return Err(Error::Config(format!(
                        "{} evidence needs exactly one of `mapping` or `file`",
                        self.quality
                    )));
                }
                self.parsed_mapping()?;
            }
        }
        Ok(())
    }
}

/// k-means settings; the seed comes from the run's seed stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KMeansSettings {
    pub k: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_restarts() -> usize {
    10
}

fn default_max_iters() -> usize {
    300
}

fn default_tol() -> f64 {
    1e-4
}

impl KMeansSettings {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            restarts: default_restarts(),
            max_iters: default_max_iters(),
            tol: default_tol(),
        }
    }

    pub fn with_seed(&self, seed: u64) -> KMeansConfig {
        KMeansConfig {
            k: self.k,
            restarts: self.restarts,
            max_iters: self.max_iters,
            tol: self.tol,
            seed,
        }
    }
}

/// Autoencoder settings without the input width, which comes from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderSettings {
    pub hidden_widths: Vec<usize>,
    pub latent_width: usize,
    pub corruption_rate: f64,
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for AutoencoderSettings {
    fn default() -> Self {
        let c = DenoisingAEConfig::new(1);
        Self {
            hidden_widths: c.hidden_widths,
            latent_width: c.latent_width,
            corruption_rate: c.corruption_rate,
            epochs: c.epochs,
            optimizer: c.optimizer,
        }
    }
}

impl AutoencoderSettings {
    pub fn for_input(&self, input_width: usize) -> DenoisingAEConfig {
        DenoisingAEConfig {
            input_width,
            hidden_widths: self.hidden_widths.clone(),
            latent_width: self.latent_width,
            corruption_rate: self.corruption_rate,
            epochs: self.epochs,
            optimizer: self.optimizer,
        }
    }
}

/// A full experiment: data, initialization, evidence, transfer, clustering and run count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub autoencoder: AutoencoderSettings,
    #[serde(default)]
    pub evidence_encoder: EvidenceEncoderConfig,
    #[serde(default)]
    pub evidence: Vec<EvidenceSpec>,
    #[serde(default)]
    pub transfer: TransferConfig,
    pub kmeans: KMeansSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

fn default_runs() -> usize {
    4
}

/// Evidence combinations evaluated by a grid, one row each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub cells: Vec<GridCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    pub label: String,
    pub evidence: Vec<EvidenceSpec>,
}

impl GridCell {
    /// A cell labelled by joining its sources' labels with `+`.
    pub fn new(evidence: Vec<EvidenceSpec>) -> Self {
        let label = evidence
            .iter()
            .map(EvidenceSpec::label)
            .collect::<Vec<_>>()
            .join("+");
        Self { label, evidence }
    }
}

pub(crate) fn validate_evidence_list(list: &[EvidenceSpec]) -> Result<()> {
    if list.len() > MAX_EVIDENCE_SOURCES {
        return Err(Error::Config(format!(
            "at most {MAX_EVIDENCE_SOURCES} evidence sources are supported, got {}",
            list.len()
        )));
    }
    list.iter().try_for_each(EvidenceSpec::validate)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative data paths are taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(dir) = path.parent() {
            cfg.dataset.resolve_paths(dir);
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            for spec in cfg.evidence.iter_mut() {
                if let Some(f) = spec.file.as_mut() {
                    fix(f);
                }
            }
            if let Some(grid) = cfg.grid.as_mut() {
                for spec in grid.cells.iter_mut().flat_map(|c| c.evidence.iter_mut()) {
                    if let Some(f) = spec.file.as_mut() {
                        fix(f);
                    }
                }
            }
        }
        Ok(cfg)
    }

    /// The resolved config as TOML, echoed next to the results.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if let DatasetSpec::Synthetic(s) = &self.dataset {
            s.validate()?;
        }
        self.autoencoder.for_input(1).validate()?;
        self.evidence_encoder.optimizer.validate()?;
        validate_evidence_list(&self.evidence)?;
        self.transfer.validate()?;
        self.kmeans.with_seed(0).validate()?;
        if let Some(grid) = &self.grid {
            if grid.cells.is_empty() {
                return Err(Error::Config("grid has no cells".into()));
            }
            for cell in &grid.cells {
                validate_evidence_list(&cell.evidence)
                    .map_err(|e| Error::Config(format!("grid cell {}: {e}", cell.label)))?;
            }
        }
        Ok(())
    }

    /// The synthetic acceptance benchmark: 2000 ten-dimensional samples from 6 heavily
    /// overlapping Gaussian blobs in 3 supergroups, one real supergroup evidence source
    /// (`class mod 3`, width 3), 4 runs.
    pub fn blob_benchmark(seed: u64) -> Self {
        Self {
            name: "blobs".into(),
            runs: 4,
            seed,
            out_dir: None,
            dataset: DatasetSpec::Synthetic(SyntheticSpec {
                n_samples: 2000,
                dims: 10,
                n_clusters: 6,
                n_supergroups: 3,
                cluster_std: 1.0,
                separation: 1.1,
                seed: 7,
            }),
            autoencoder: AutoencoderSettings {
                hidden_widths: vec![128, 128, 64],
                latent_width: 10,
                corruption_rate: 0.2,
                epochs: 150,
                optimizer: OptimizerConfig::adam(1e-3, 64),
            },
            evidence_encoder: EvidenceEncoderConfig::default(),
            evidence: vec![EvidenceSpec::real(3, "mod")],
            transfer: TransferConfig {
                lambda: 10.0,
                epochs: 100,
                optimizer: OptimizerConfig::adam(1e-3, 64),
                mode: TransferMode::Joint,
                disjoint_lr_ratio: 10.0,
                corrupt_inputs: true,
            },
            kmeans: KMeansSettings::new(6),
            grid: None,
        }
    }

    /// Scaled-down MNIST: a 10 000-image stratified subset, the full `784-500-500-200-10`
    /// stack and `digit mod 3` evidence.
    pub fn mnist(images: PathBuf, labels: PathBuf, seed: u64) -> Self {
        Self {
            name: "mnist10k".into(),
            runs: 4,
            seed,
            out_dir: None,
            dataset: DatasetSpec::Idx {
                images,
                labels,
                subsample: Some(10_000),
            },
            autoencoder: AutoencoderSettings {
                epochs: 50,
                ..AutoencoderSettings::default()
            },
            evidence_encoder: EvidenceEncoderConfig::default(),
            evidence: vec![EvidenceSpec::real(3, "mod")],
            transfer: TransferConfig {
                lambda: 10.0,
                epochs: 30,
                optimizer: OptimizerConfig::adam(1e-3, 256),
                ..TransferConfig::default()
            },
            kmeans: KMeansSettings::new(10),
            grid: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "demo"
runs = 2
seed = 11

[dataset]
kind = "synthetic"
n_samples = 200
dims = 4
n_clusters = 4
n_supergroups = 2
cluster_std = 1.0
separation = 4.0
seed = 3

[autoencoder]
hidden_widths = [16, 8]
latent_width = 3
corruption_rate = 0.2
epochs = 5
optimizer.kind = "adam"
optimizer.learning_rate = 0.001
optimizer.batch_size = 32

[transfer]
lambda = 2.0
epochs = 3
mode = "joint"
disjoint_lr_ratio = 10.0
corrupt_inputs = true
optimizer = { kind = "adam", learning_rate = 0.001, batch_size = 32 }

[[evidence]]
quality = "real"
width = 2
mapping = "mod"

[[evidence]]
quality = "white_noise"
width = 3

[kmeans]
k = 4
"#;

    #[test]
    fn parses_dotted_sections() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.runs, 2);
        assert_eq!(cfg.autoencoder.optimizer.batch_size, 32);
        assert_eq!(cfg.evidence.len(), 2);
        assert_eq!(cfg.evidence[1].quality, EvidenceQuality::WhiteNoise);
        assert_eq!(cfg.kmeans.restarts, 10);
        assert_eq!(cfg.evidence_encoder, EvidenceEncoderConfig::default());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        let bench = ExperimentConfig::blob_benchmark(1);
        assert_eq!(ExperimentConfig::from_toml(&bench.to_toml().unwrap()).unwrap(), bench);
    }

    #[test]
    fn rejects_bad_configs() {
        let zero_runs = SAMPLE.replace("runs = 2", "runs = 0");
        assert!(matches!(ExperimentConfig::from_toml(&zero_runs), Err(Error::Config(_))));
        let unknown = SAMPLE.replace("seed = 11", "seed = 11\ncolour = 1");
        assert!(ExperimentConfig::from_toml(&unknown).is_err());
        let mut cfg = ExperimentConfig::blob_benchmark(1);
        cfg.evidence = vec![EvidenceSpec::white_noise(3); 4];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.evidence = vec![EvidenceSpec {
            mapping: None,
            ..EvidenceSpec::real(3, "mod")
        }];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(EvidenceSpec::real(3, "mod").label(), "real_w3");
        let cell = GridCell::new(vec![EvidenceSpec::real(3, "mod"), EvidenceSpec::white_noise(3)]);
        assert_eq!(cell.label, "real_w3+noise_w3");
    }
}
