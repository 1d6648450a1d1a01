//! Data ingestion, synthetic benchmarks, configuration and experiment orchestration.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod seeds;
pub mod synth;

pub use config::{
    AutoencoderSettings, DatasetSpec, EvidenceSpec, ExperimentConfig, GridCell, GridSpec,
    KMeansSettings, MAX_EVIDENCE_SOURCES,
};
pub use dataset::{load_csv, load_idx, parse_csv, Dataset, GroundTruth, Provenance};
pub use experiment::{
    build_evidence, evidence_transfer, load_dataset, prepare_run, run_experiment, run_experiment_on, run_grid,
    summary_table, transfer_run, ExperimentOutcome, GridOutcome, GridRow, Prepared, RunFailure,
    RunRecord,
};
pub use seeds::{data_rng, RunSeeds};
pub use synth::{generate_synthetic, SyntheticData, SyntheticSpec};
