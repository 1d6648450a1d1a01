//! Browser bindings for a small interactive evidence-transfer session.
//!
//! [`Lab`] holds the state and does the work in plain Rust so it can be tested natively;
//! [`Demo`] is the thin JavaScript-facing wrapper.

use evitram::error::Result;
use evitram::harness::{
    evidence_transfer, generate_synthetic, prepare_run, AutoencoderSettings, Dataset, DatasetSpec,
    EvidenceSpec, ExperimentConfig, KMeansSettings, Prepared, RunSeeds, SyntheticSpec,
};
use evitram::nn::{Matrix, OptimizerConfig};
use wasm_bindgen::prelude::*;

pub struct Lab {
    cfg: ExperimentConfig,
    data: Dataset,
    prepared: Option<Prepared>,
    coords: Matrix,
    assignments: Vec<usize>,
}

fn spec(separation: f64) -> SyntheticSpec {
    SyntheticSpec {
        n_samples: 1000,
        dims: 10,
        n_clusters: 6,
        n_supergroups: 3,
        cluster_std: 1.0,
        separation,
        seed: 1,
    }
}

/// Projects the centred rows of `x` onto its two leading principal axes, found by power
/// iteration with deflation on the covariance.
fn project2(x: &Matrix) -> Matrix {
    let (n, d) = x.shape();
    let mean: Vec<f64> = x.column_sums().iter().map(|s| s / n.max(1) as f64).collect();
    let centred = Matrix::from_fn(n, d, |r, c| x.row(r)[c] - mean[c]);
    let mut cov = centred.t_matmul(&centred).expect("shapes agree");
    let mut axes = Vec::with_capacity(2);
    for k in 0..2 {
        // Deterministic start that is not orthogonal to a generic leading axis.
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 + (i + k) as f64 * 0.1).collect();
        let mut eig = 0.0;
        for _ in 0..200 {
            let w: Vec<f64> = (0..d).map(|i| cov.row(i).iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
            let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            eig = norm;
            v = w.iter().map(|a| a / norm).collect();
        }
        for i in 0..d {
            for j in 0..d {
                cov.row_mut(i)[j] -= eig * v[i] * v[j];
            }
        }
        axes.push(v);
    }
    Matrix::from_fn(n, 2, |r, c| centred.row(r).iter().zip(&axes[c]).map(|(a, b)| a * b).sum())
}

impl Lab {
    /// Six blobs in three supergroups.
    pub fn new(seed: u64, separation: f64) -> Result<Self> {
        let spec = spec(separation);
        let data = generate_synthetic(&spec)?.dataset;
        let mut cfg = ExperimentConfig::blob_benchmark(seed);
        cfg.runs = 1;
        cfg.dataset = DatasetSpec::Synthetic(spec);
        cfg.autoencoder = AutoencoderSettings {
            hidden_widths: vec![64, 32],
            latent_width: 10,
            corruption_rate: 0.2,
            epochs: 150,
            optimizer: OptimizerConfig::adam(1e-3, 32),
        };
        cfg.transfer.optimizer = OptimizerConfig::adam(1e-3, 32);
        cfg.kmeans = KMeansSettings::new(6);
        cfg.validate()?;
        let coords = project2(&data.features);
        let assignments = vec![0; data.len()];
        Ok(Self {
            cfg,
            data,
            prepared: None,
            coords,
            assignments,
        })
    }

    /// Pretrains and clusters the latent codes; returns `[acc, nmi]`.
    pub fn pretrain(&mut self, epochs: usize) -> Result<[f64; 2]> {
        self.cfg.autoencoder.epochs = epochs;
        let prepared = prepare_run(&self.cfg, &self.data, 0).map_err(|f| f.error)?;
        self.coords = project2(&prepared.ae.encode(&self.data.features)?);
        self.assignments = prepared.baseline_assignments.clone();
        let s = prepared.baseline.expect("synthetic data is labelled");
        self.prepared = Some(prepared);
        Ok([s.acc, s.nmi])
    }

    /// Fine-tunes the pretrained model against one evidence source and re-clusters.
    ///
    /// `quality` is `real`, `white_noise` or `random_index`.
    pub fn transfer(&mut self, quality: &str, lambda: f64, epochs: usize) -> Result<[f64; 2]> {
        let Some(prepared) = &self.prepared else {
            return Err(evitram::error::Error::Config("pretrain first".into()));
        };
        let evidence = match quality {
            "real" => EvidenceSpec::real(3, "mod"),
            "white_noise" => EvidenceSpec::white_noise(3),
            "random_index" => EvidenceSpec::random_index(3, "mod"),
            other => {
                return Err(evitram::error::Error::Config(format!(
                    "unknown evidence quality {other:?}"
                )))
            }
        };
        self.cfg.transfer.lambda = lambda;
        self.cfg.transfer.epochs = epochs;
        self.cfg.validate()?;
        let seeds = RunSeeds::new(self.cfg.seed, 0);
        let (model, _) = evidence_transfer(&self.cfg, &[evidence], &self.data, &prepared.ae, seeds)
            .map_err(|f| f.error)?;
        let z = model.base.encode(&self.data.features)?;
        let result = evitram::cluster::kmeans(&z, &self.cfg.kmeans.with_seed(seeds.kmeans()))?;
        self.coords = project2(&z);
        self.assignments = result.assignments;
        let s = self
            .data
            .truth
            .as_ref()
            .expect("synthetic data is labelled")
            .score(&self.assignments)?;
        Ok([s.acc, s.nmi])
    }

    /// Row-major `(x, y)` pairs: the current codes projected on their two leading principal
    /// axes.
    pub fn coords(&self) -> Vec<f64> {
        self.coords.as_slice().to_vec()
    }

    pub fn assignments(&self) -> Vec<u32> {
        self.assignments.iter().map(|&a| a as u32).collect()
    }
}

#[wasm_bindgen]
pub struct Demo {
    lab: Lab,
}

fn js(e: evitram::error::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, separation: f64) -> Result<Demo, JsError> {
        Lab::new(seed.into(), separation).map(|lab| Demo { lab }).map_err(js)
    }

    pub fn pretrain(&mut self, epochs: usize) -> Result<Vec<f64>, JsError> {
        self.lab.pretrain(epochs).map(Vec::from).map_err(js)
    }

    pub fn transfer(&mut self, quality: &str, lambda: f64, epochs: usize) -> Result<Vec<f64>, JsError> {
        self.lab.transfer(quality, lambda, epochs).map(Vec::from).map_err(js)
    }

    pub fn coords(&self) -> Vec<f64> {
        self.lab.coords()
    }

    pub fn assignments(&self) -> Vec<u32> {
        self.lab.assignments()
    }
}
