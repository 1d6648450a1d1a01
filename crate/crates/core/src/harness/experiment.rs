//! Experiment orchestration: initialization, baseline clustering, evidence transfer, post
//! clustering and reporting, over several seeded runs and over grids of evidence settings.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::config::{validate_evidence_list, EvidenceSpec, ExperimentConfig, GridCell};
use super::dataset::Dataset;
use super::seeds::{data_rng, RunSeeds};
use crate::autoenc::{pretrain, DenoisingAutoencoder};
use crate::checkpoint;
use crate::cluster::{format_with_delta, kmeans, MetricsReport, RunMetrics, Scores};
use crate::error::{Error, Result};
use crate::evidence::{
    latent_evidence, random_index_evidence, train_evidence_encoder_with, white_noise_evidence,
    EvidenceQuality, EvidenceSource,
};
use crate::transfer::{run_transfer, EviTramModel, TransferTrace};

/// Everything one run produced.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run: usize,
    pub baseline: Option<Scores>,
    pub post: Option<Scores>,
    /// Reconstruction MSE of the pretrained autoencoder (standardized units).
    pub baseline_mse: f64,
    pub post_mse: Option<f64>,
    pub pretrain_trace: Vec<f64>,
    pub transfer_trace: Option<TransferTrace>,
    pub baseline_assignments: Vec<usize>,
    pub post_assignments: Option<Vec<usize>>,
    pub model: Option<EviTramModel>,
}

/// A run that stopped with an error; the other runs are unaffected.
#[derive(Debug)]
pub struct RunFailure {
    pub run: usize,
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run {} failed during {}: {}", self.run, self.stage, self.error)
    }
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub report: MetricsReport,
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

impl ExperimentOutcome {
    /// True when no run completed.
    pub fn all_failed(&self) -> bool {
        self.records.is_empty() && !self.failures.is_empty()
    }
}

trait Stage<T> {
    fn stage(self, run: usize, stage: &'static str) -> std::result::Result<T, RunFailure>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, run: usize, stage: &'static str) -> std::result::Result<T, RunFailure> {
        self.map_err(|error| RunFailure { run, stage, error })
    }
}

/// Runs `f(0..n)` on up to `workers` threads; results keep their index order.
pub(crate) fn parallel_map<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = f(i);
                slots.lock().expect("worker panicked")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|o| o.expect("every index is processed"))
        .collect()
}

/// Builds the evidence labels of one source for the dataset's rows.
pub fn build_evidence(spec: &EvidenceSpec, data: &Dataset, rng: &mut crate::nn::Rng) -> Result<EvidenceSource> {
    spec.validate()?;
    let real = || -> Result<EvidenceSource> {
        if let Some(path) = &spec.file {
            let ev = EvidenceSource::load(path, EvidenceQuality::Real)?;
            if ev.width() != spec.width {
                return Err(Error::Data(format!(
                    "{} has width {}, config says {}",
                    path.display(),
                    ev.width(),
                    spec.width
                )));
            }
            return Ok(ev);
        }
        let mapping = spec.parsed_mapping()?.expect("validated");
        let truth = data.truth.as_ref().ok_or_else(|| {
            Error::Config("mapped evidence needs labelled data; use an evidence file".into())
        })?;
        truth.derive_evidence(&mapping, spec.width)
    };
    let ev = match spec.quality {
        EvidenceQuality::Real => real()?,
        EvidenceQuality::RandomIndex => random_index_evidence(&real()?, rng)?,
        EvidenceQuality::WhiteNoise => white_noise_evidence(data.len(), spec.width, rng)?,
    };
    if ev.len() != data.len() {
        return Err(Error::Data(format!(
            "evidence has {} rows for {} samples",
            ev.len(),
            data.len()
        )));
    }
    Ok(ev)
}

/// A pretrained autoencoder and its baseline clustering.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub seeds: RunSeeds,
    pub ae: DenoisingAutoencoder,
    pub pretrain_trace: Vec<f64>,
    pub baseline_assignments: Vec<usize>,
    pub baseline: Option<Scores>,
    pub baseline_mse: f64,
}

pub fn prepare_run(
    cfg: &ExperimentConfig,
    data: &Dataset,
    run: usize,
) -> std::result::Result<Prepared, RunFailure> {
    let seeds = RunSeeds::new(cfg.seed, run);
    let ae_cfg = cfg.autoencoder.for_input(data.features.cols());
    let (ae, pretrain_trace) = pretrain(&data.features, &ae_cfg, &mut seeds.pretrain()).stage(run, "pretrain")?;
    let z = ae.encode(&data.features).stage(run, "baseline clustering")?;
    let clustering = kmeans(&z, &cfg.kmeans.with_seed(seeds.kmeans())).stage(run, "baseline clustering")?;
    let baseline = data
        .truth
        .as_ref()
        .map(|t| t.score(&clustering.assignments))
        .transpose()
        .stage(run, "baseline clustering")?;
    let baseline_mse = ae.reconstruction_mse(&data.features).stage(run, "pretrain")?;
    Ok(Prepared {
        seeds,
        ae,
        pretrain_trace,
        baseline_assignments: clustering.assignments,
        baseline,
        baseline_mse,
    })
}

/// Builds every evidence source, trains its encoder, attaches the heads to a copy of `ae` and
/// runs the transfer, drawing from the streams of `seeds`.
pub fn evidence_transfer(
    cfg: &ExperimentConfig,
    evidence: &[EvidenceSpec],
    data: &Dataset,
    ae: &DenoisingAutoencoder,
    seeds: RunSeeds,
) -> std::result::Result<(EviTramModel, TransferTrace), RunFailure> {
    let run = seeds.run;
    let latent = ae.latent_width();
    let mut targets = Vec::with_capacity(evidence.len());
    for (j, spec) in evidence.iter().enumerate() {
        let ev = build_evidence(spec, data, &mut seeds.evidence(j)).stage(run, "evidence")?;
        let enc = train_evidence_encoder_with(&ev, latent, &cfg.evidence_encoder, &mut seeds.evidence_encoder(j))
            .stage(run, "evidence encoder")?;
        targets.push(latent_evidence(&enc, &ev).stage(run, "evidence encoder")?);
    }
    let mut model =
        EviTramModel::new(ae.clone(), targets, cfg.transfer.lambda, &mut seeds.heads()).stage(run, "transfer")?;
    let trace = run_transfer(&mut model, &data.features, &cfg.transfer, &mut seeds.transfer()).stage(run, "transfer")?;
    Ok((model, trace))
}

/// Evidence, transfer and post clustering on top of a prepared run.
pub fn transfer_run(
    cfg: &ExperimentConfig,
    evidence: &[EvidenceSpec],
    data: &Dataset,
    prepared: &Prepared,
) -> std::result::Result<RunRecord, RunFailure> {
    let run = prepared.seeds.run;
    let mut record = RunRecord {
        run,
        baseline: prepared.baseline,
        post: None,
        baseline_mse: prepared.baseline_mse,
        post_mse: None,
        pretrain_trace: prepared.pretrain_trace.clone(),
        transfer_trace: None,
        baseline_assignments: prepared.baseline_assignments.clone(),
        post_assignments: None,
        model: None,
    };
    if evidence.is_empty() {
        return Ok(record);
    }
    let seeds = prepared.seeds;
    let (model, trace) = evidence_transfer(cfg, evidence, data, &prepared.ae, seeds)?;
    let z = model.base.encode(&data.features).stage(run, "post clustering")?;
    let clustering = kmeans(&z, &cfg.kmeans.with_seed(seeds.kmeans())).stage(run, "post clustering")?;
    record.post = data
        .truth
        .as_ref()
        .map(|t| t.score(&clustering.assignments))
        .transpose()
        .stage(run, "post clustering")?;
    record.post_mse = Some(model.base.reconstruction_mse(&data.features).stage(run, "transfer")?);
    record.transfer_trace = Some(trace);
    record.post_assignments = Some(clustering.assignments);
    record.model = Some(model);
    Ok(record)
}

fn report_of(config_id: &str, records: &[RunRecord]) -> MetricsReport {
    let mut report = MetricsReport::new(config_id);
    for r in records {
        if let Some(baseline) = r.baseline {
            report.runs.push(RunMetrics {
                run: r.run,
                baseline,
                post: r.post,
            });
        }
    }
    report
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn lines<T: std::fmt::Display>(values: &[T]) -> String {
    values.iter().map(|v| format!("{v}\n")).collect()
}

fn pretrain_trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in trace.iter().enumerate() {
        let _ = writeln!(out, "{e},{l}");
    }
    out
}

fn persist_prepared(dir: &Path, p: &Prepared) -> Result<()> {
    write(&dir.join("pretrain.ckpt"), checkpoint::autoencoder_to_string(&p.ae))?;
    write(&dir.join("pretrain_trace.csv"), pretrain_trace_csv(&p.pretrain_trace))?;
    write(&dir.join("baseline_assignments.txt"), lines(&p.baseline_assignments))
}

fn persist_transfer(dir: &Path, r: &RunRecord) -> Result<()> {
    if let (Some(model), Some(trace)) = (&r.model, &r.transfer_trace) {
        write(&dir.join("evitram.ckpt"), checkpoint::evitram_to_string(model))?;
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).map_err(|e| Error::io(dir, e))?;
        write(&dir.join("transfer_trace.csv"), buf)?;
    }
    if let Some(a) = &r.post_assignments {
        write(&dir.join("post_assignments.txt"), lines(a))?;
    }
    Ok(())
}

fn failures_text(failures: &[RunFailure]) -> String {
    failures.iter().map(|f| format!("{f}\n")).collect()
}

/// Summary table: baseline row, then the configuration with signed deltas.
pub fn summary_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<28} {:>18} {:>18}", "config", "ACC", "NMI");
    if report.runs.is_empty() {
        let _ = writeln!(out, "{:<28} {:>18} {:>18}", report.config_id, "n/a", "n/a");
        return out;
    }
    let b = report.mean_baseline();
    let _ = writeln!(
        out,
        "{:<28} {:>18} {:>18}",
        "baseline",
        format_with_delta(b.acc, None),
        format_with_delta(b.nmi, None)
    );
    if let (Some(p), Some(d)) = (report.mean_post(), report.mean_delta()) {
        let _ = writeln!(
            out,
            "{:<28} {:>18} {:>18}",
            report.config_id,
            format_with_delta(p.acc, Some(d.acc)),
            format_with_delta(p.nmi, Some(d.nmi))
        );
    }
    out
}

/// Loads the data named by `cfg`, applying the shared subsampling stream.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.dataset.load(&mut data_rng(cfg.seed))
}

/// Runs `cfg.runs` independent seeded runs of the full pipeline on up to `workers` threads.
///
/// When `cfg.out_dir` is set, the resolved config, per-run checkpoints, loss traces and
/// cluster assignments, `metrics.csv` and `summary.txt` are written there.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    run_experiment_on(cfg, &data, workers)
}

pub fn run_experiment_on(cfg: &ExperimentConfig, data: &Dataset, workers: usize) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let results = parallel_map(cfg.runs, workers, |run| {
        let prepared = prepare_run(cfg, data, run)?;
        let record = transfer_run(cfg, &cfg.evidence, data, &prepared)?;
        if let Some(out) = &cfg.out_dir {
            let dir = out.join(format!("run{run}"));
            persist_prepared(&dir, &prepared).stage(run, "persist")?;
            persist_transfer(&dir, &record).stage(run, "persist")?;
        }
        Ok(record)
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    let config_id = config_id(&cfg.name, &cfg.evidence);
    let report = report_of(&config_id, &records);
    if let Some(out) = &cfg.out_dir {
        write(&out.join("config.toml"), cfg.to_toml()?)?;
        write(&out.join("metrics.csv"), report.csv())?;
        write(&out.join("summary.txt"), summary_table(&report))?;
        if !failures.is_empty() {
            write(&out.join("failures.txt"), failures_text(&failures))?;
        }
    }
    Ok(ExperimentOutcome {
        report,
        records,
        failures,
    })
}

fn config_id(name: &str, evidence: &[EvidenceSpec]) -> String {
    if evidence.is_empty() {
        format!("{name}/baseline")
    } else {
        format!("{name}/{}", GridCell::new(evidence.to_vec()).label)
    }
}

/// One grid row: a report, or the reason the whole cell failed.
#[derive(Debug)]
pub struct GridRow {
    pub label: String,
    pub outcome: std::result::Result<ExperimentOutcome, Error>,
}

#[derive(Debug)]
pub struct GridOutcome {
    pub baseline: MetricsReport,
    pub rows: Vec<GridRow>,
    /// Runs whose shared pretraining failed; they are missing from every cell.
    pub failures: Vec<RunFailure>,
}

impl GridOutcome {
    /// Consolidated table: `config,runs,acc,nmi`, cells formatted as `value (±delta)` in
    /// percent, the baseline first. Failed cells read `FAILED`.
    pub fn csv(&self) -> String {
        let mut out = String::from("config,runs,acc,nmi\n");
        let b = self.baseline.mean_baseline();
        let _ = writeln!(
            out,
            "baseline,{},{},{}",
            self.baseline.runs.len(),
            format_with_delta(b.acc, None),
            format_with_delta(b.nmi, None)
        );
        for row in &self.rows {
            match &row.outcome {
                Ok(o) => match (o.report.mean_post(), o.report.mean_delta()) {
                    (Some(p), Some(d)) => {
                        let _ = writeln!(
                            out,
                            "{},{},{},{}",
                            row.label,
                            o.report.runs.len(),
                            format_with_delta(p.acc, Some(d.acc)),
                            format_with_delta(p.nmi, Some(d.nmi))
                        );
                    }
                    _ => {
                        let _ = writeln!(out, "{},0,FAILED,FAILED", row.label);
                    }
                },
                Err(_) => {
                    let _ = writeln!(out, "{},0,FAILED,FAILED", row.label);
                }
            }
        }
        out
    }

    /// Per-run metrics of every cell under the standard metrics header.
    pub fn metrics_csv(&self) -> String {
        let mut out = format!("{}\n", crate::cluster::METRICS_CSV_HEADER);
        out.push_str(&self.baseline.csv_rows());
        for row in &self.rows {
            if let Ok(o) = &row.outcome {
                out.push_str(&o.report.csv_rows());
            }
        }
        out
    }
}

/// Evaluates every cell of `cfg.grid` (or `cells` when given) on the same pretrained runs.
///
/// Each run is pretrained once and clustered once; every cell then transfers its own evidence
/// from that shared starting point, so cells differ only in their evidence. Cells with more
/// than three sources are rejected before any work starts.
pub fn run_grid(cfg: &ExperimentConfig, cells: &[GridCell], workers: usize) -> Result<GridOutcome> {
    cfg.validate()?;
    if cells.is_empty() {
        return Err(Error::Config("grid has no cells".into()));
    }
    for cell in cells {
        validate_evidence_list(&cell.evidence)
            .map_err(|e| Error::Config(format!("grid cell {}: {e}", cell.label)))?;
    }
    let data = load_dataset(cfg)?;
    let prepared = parallel_map(cfg.runs, workers, |run| {
        let p = prepare_run(cfg, &data, run)?;
        if let Some(out) = &cfg.out_dir {
            persist_prepared(&out.join("baseline").join(format!("run{run}")), &p).stage(run, "persist")?;
        }
        Ok::<_, RunFailure>(p)
    });
    let mut ready = Vec::new();
    let mut failures = Vec::new();
    for p in prepared {
        match p {
            Ok(p) => ready.push(p),
            Err(f) => failures.push(f),
        }
    }
    let baseline_records: Vec<RunRecord> = ready
        .iter()
        .map(|p| transfer_run(cfg, &[], &data, p).expect("baseline-only runs cannot fail"))
        .collect();
    let baseline = report_of(&format!("{}/baseline", cfg.name), &baseline_records);

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..ready.len()).map(move |r| (c, r)))
        .collect();
    let results = parallel_map(jobs.len(), workers, |i| {
        let (c, r) = jobs[i];
        let rec = transfer_run(cfg, &cells[c].evidence, &data, &ready[r])?;
        if let Some(out) = &cfg.out_dir {
            let dir = out.join("cells").join(&cells[c].label).join(format!("run{}", rec.run));
            persist_transfer(&dir, &rec).stage(rec.run, "persist")?;
        }
        Ok::<_, RunFailure>(rec)
    });
    let mut per_cell: Vec<(Vec<RunRecord>, Vec<RunFailure>)> =
        cells.iter().map(|_| (Vec::new(), Vec::new())).collect();
    for ((c, _), res) in jobs.iter().zip(results) {
        match res {
            Ok(rec) => per_cell[*c].0.push(rec),
            Err(f) => per_cell[*c].1.push(f),
        }
    }
    let rows: Vec<GridRow> = cells
        .iter()
        .zip(per_cell)
        .map(|(cell, (records, fails))| {
            let outcome = if records.is_empty() {
                Err(fails
                    .into_iter()
                    .next()
                    .map(|f| f.error)
                    .unwrap_or_else(|| Error::Data("no run survived pretraining".into())))
            } else {
                Ok(ExperimentOutcome {
                    report: report_of(&format!("{}/{}", cfg.name, cell.label), &records),
                    records,
                    failures: fails,
                })
            };
            GridRow {
                label: cell.label.clone(),
                outcome,
            }
        })
        .collect();
    let grid = GridOutcome {
        baseline,
        rows,
        failures,
    };
    if let Some(out) = &cfg.out_dir {
        write(&out.join("config.toml"), cfg.to_toml()?)?;
        write(&out.join("grid.csv"), grid.csv())?;
        write(&out.join("grid_metrics.csv"), grid.metrics_csv())?;
        let mut fails = failures_text(&grid.failures);
        for row in &grid.rows {
            match &row.outcome {
                Ok(o) => fails.push_str(&failures_text(&o.failures)),
                Err(e) => {
                    let _ = writeln!(fails, "cell {} failed: {e}", row.label);
                }
            }
        }
        if !fails.is_empty() {
            write(&out.join("failures.txt"), fails)?;
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{DatasetSpec, KMeansSettings};
    use crate::harness::synth::SyntheticSpec;
    use crate::nn::OptimizerConfig;
    use std::path::PathBuf;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::blob_benchmark(3);
        cfg.runs = 2;
        cfg.dataset = DatasetSpec::Synthetic(SyntheticSpec {
            n_samples: 120,
            dims: 4,
            n_clusters: 4,
            n_supergroups: 2,
            cluster_std: 1.0,
            separation: 3.0,
            seed: 2,
        });
        cfg.autoencoder.hidden_widths = vec![8];
        cfg.autoencoder.latent_width = 3;
        cfg.autoencoder.epochs = 3;
        cfg.autoencoder.optimizer = OptimizerConfig::adam(1e-3, 32);
        cfg.transfer.epochs = 2;
        cfg.transfer.optimizer = OptimizerConfig::adam(1e-3, 32);
        cfg.evidence = vec![EvidenceSpec::real(2, "mod")];
        cfg.kmeans = KMeansSettings::new(4);
        cfg
    }

    #[test]
    fn baseline_only_has_no_deltas() {
        let mut cfg = tiny();
        cfg.runs = 1;
        cfg.evidence.clear();
        let out = run_experiment(&cfg, 1).unwrap();
        assert_eq!(out.report.runs.len(), 1);
        assert!(out.report.mean_delta().is_none());
        assert!(out.records[0].model.is_none());
    }

    #[test]
    fn workers_do_not_change_results() {
        let cfg = tiny();
        let a = run_experiment(&cfg, 1).unwrap();
        let b = run_experiment(&cfg, 3).unwrap();
        assert_eq!(a.report.csv(), b.report.csv());
    }

    #[test]
    fn failing_run_is_isolated() {
        let mut cfg = tiny();
        // a batch larger than the data makes pretraining fail in every run
        cfg.autoencoder.optimizer.batch_size = 500;
        let out = run_experiment(&cfg, 2).unwrap();
        assert!(out.all_failed());
        assert_eq!(out.failures.len(), 2);
        assert_eq!(out.failures[0].stage, "pretrain");
    }

    #[test]
    fn artifacts_are_written_and_reloadable() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.runs = 1;
        cfg.out_dir = Some(dir.path().to_path_buf());
        let out = run_experiment(&cfg, 1).unwrap();
        let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(metrics, out.report.csv());
        let ckpt = checkpoint::load_evitram(&dir.path().join("run0/evitram.ckpt")).unwrap();
        let model = out.records[0].model.as_ref().unwrap();
        assert_eq!(ckpt.base, model.base);
        assert_eq!(ckpt.heads, model.heads);
        let echoed = ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
        assert_eq!(echoed, cfg);
        let trace = std::fs::read_to_string(dir.path().join("run0/transfer_trace.csv")).unwrap();
        assert!(trace.starts_with("epoch,l_ae,l_h,l_total\n"));
    }

    #[test]
    fn grid_rows_and_bounds() {
        let cfg = tiny();
        let cells = vec![
            GridCell::new(vec![EvidenceSpec::real(2, "mod")]),
            GridCell::new(vec![EvidenceSpec::white_noise(2)]),
        ];
        let grid = run_grid(&cfg, &cells, 2).unwrap();
        let csv = grid.csv();
        assert_eq!(csv.lines().count(), 1 + 1 + 2);
        assert!(csv.lines().nth(2).unwrap().starts_with("real_w2,2,"));

        let triple = GridCell::new(vec![EvidenceSpec::white_noise(2); 3]);
        let quad = GridCell::new(vec![EvidenceSpec::white_noise(2); 4]);
        assert!(validate_evidence_list(&triple.evidence).is_ok());
        assert!(matches!(run_grid(&cfg, &[quad], 1), Err(Error::Config(_))));
    }

    #[test]
    fn grid_cell_matches_standalone_experiment() {
        let cfg = tiny();
        let cells = vec![GridCell::new(cfg.evidence.clone())];
        let grid = run_grid(&cfg, &cells, 1).unwrap();
        let solo = run_experiment(&cfg, 1).unwrap();
        let row = grid.rows[0].outcome.as_ref().unwrap();
        assert_eq!(row.report.runs, solo.report.runs);
        assert_eq!(grid.baseline.mean_baseline(), solo.report.mean_baseline());
    }

    #[test]
    fn failed_cell_is_marked() {
        let cfg = tiny();
        let bad = GridCell {
            label: "missing_file".into(),
            evidence: vec![EvidenceSpec {
                mapping: None,
                file: Some(PathBuf::from("/nonexistent/evidence.txt")),
                ..EvidenceSpec::real(2, "mod")
            }],
        };
        let good = GridCell::new(vec![EvidenceSpec::real(2, "mod")]);
        let grid = run_grid(&cfg, &[bad, good], 1).unwrap();
        assert!(grid.rows[0].outcome.is_err());
        assert!(grid.rows[1].outcome.is_ok());
        assert!(grid.csv().contains("missing_file,0,FAILED,FAILED"));
    }
}
