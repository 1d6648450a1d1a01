use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evitram::checkpoint;
use evitram::cluster::kmeans;
use evitram::error::{Error, Result};
use evitram::evidence::EvidenceQuality;
use evitram::autoenc::pretrain;
use evitram::harness::{
    build_evidence, evidence_transfer, generate_synthetic, load_dataset, run_experiment, run_grid,
    summary_table, DatasetSpec, EvidenceSpec, ExperimentConfig, GridCell, RunSeeds,
};

#[derive(Parser)]
#[command(name = "evitram", version, about = "Evidence transfer for clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML). Defaults to the synthetic blob benchmark.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for runs and grid cells.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset and its evidence files.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Pretrain the denoising autoencoder of one run.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Fine-tune a pretrained autoencoder against the configured evidence.
    Transfer {
        #[command(flatten)]
        common: Common,
        /// Autoencoder checkpoint written by `pretrain`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// k-means on the latent codes of a checkpoint.
    Cluster {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Score cluster assignments against the dataset labels.
    Eval {
        #[command(flatten)]
        common: Common,
        /// One cluster index per line.
        #[arg(long)]
        assignments: PathBuf,
        /// Baseline assignments; adds deltas to the output.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Full pipeline over all seeded runs.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// One experiment per evidence combination, sharing the pretrained models.
    Grid {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth { common }
            | Command::Pretrain { common, .. }
            | Command::Transfer { common, .. }
            | Command::Cluster { common, .. }
            | Command::Eval { common, .. }
            | Command::Experiment { common }
            | Command::Grid { common } => common,
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        // A missing or unreadable config is a configuration problem, not a data one.
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            Error::Io { .. } => Error::Config(e.to_string()),
            other => other,
        })?,
        None => ExperimentConfig::blob_benchmark(0),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.out_dir.get_or_insert_with(|| PathBuf::from("out"));
    if common.workers == Some(0) {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn workers(common: &Common) -> usize {
    common
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().expect("set by load_config")
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn lines<T: std::fmt::Display>(values: &[T]) -> String {
    values.iter().map(|v| format!("{v}\n")).collect()
}

fn read_assignments(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|e| Error::Parse {
                source_name: path.display().to_string(),
                location: format!("line {}", i + 1),
                message: format!("bad cluster index: {e}"),
            })
        })
        .collect()
}

fn synth(cfg: &ExperimentConfig) -> Result<()> {
    let DatasetSpec::Synthetic(spec) = &cfg.dataset else {
        return Err(Error::Config("synth needs a synthetic dataset in the config".into()));
    };
    let data = generate_synthetic(spec)?;
    let dir = out_dir(cfg);
    write(&dir.join("dataset.csv"), data.dataset.to_csv())?;
    let mut sup = format!("# width={}\n", spec.n_supergroups);
    sup.push_str(&lines(&data.supergroups));
    write(&dir.join("supergroups.txt"), sup)?;
    let seeds = RunSeeds::new(cfg.seed, 0);
    for (j, ev_spec) in cfg.evidence.iter().enumerate() {
        let ev = build_evidence(ev_spec, &data.dataset, &mut seeds.evidence(j))?;
        let mut buf = Vec::new();
        ev.write_to(&mut buf).expect("writing to memory");
        write(&dir.join(format!("evidence{j}_{}.txt", ev_spec.label())), buf)?;
    }
    println!(
        "{} samples, {} features -> {}",
        data.dataset.len(),
        data.dataset.features.cols(),
        dir.display()
    );
    Ok(())
}

fn pretrain_cmd(cfg: &ExperimentConfig, run: usize) -> Result<()> {
    let data = load_dataset(cfg)?;
    let seeds = RunSeeds::new(cfg.seed, run);
    let ae_cfg = cfg.autoencoder.for_input(data.features.cols());
    let (ae, trace) = pretrain(&data.features, &ae_cfg, &mut seeds.pretrain())?;
    let dir = out_dir(cfg);
    write(&dir.join("pretrain.ckpt"), checkpoint::autoencoder_to_string(&ae))?;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in trace.iter().enumerate() {
        csv.push_str(&format!("{e},{l}\n"));
    }
    write(&dir.join("pretrain_trace.csv"), csv)?;
    println!(
        "pretrained {} epochs, final loss {:.6}, mse {:.6}",
        trace.len(),
        trace.last().copied().unwrap_or(f64::NAN),
        ae.reconstruction_mse(&data.features)?
    );
    Ok(())
}

fn transfer_cmd(cfg: &ExperimentConfig, ckpt: &Path, run: usize) -> Result<()> {
    if cfg.evidence.is_empty() {
        return Err(Error::Config("transfer needs at least one [[evidence]] entry".into()));
    }
    let data = load_dataset(cfg)?;
    let ae = checkpoint::load_autoencoder(ckpt)?;
    let seeds = RunSeeds::new(cfg.seed, run);
    let (model, trace) = evidence_transfer(cfg, &cfg.evidence, &data, &ae, seeds).map_err(|f| {
        eprintln!("{f}");
        f.error
    })?;
    let dir = out_dir(cfg);
    write(&dir.join("evitram.ckpt"), checkpoint::evitram_to_string(&model))?;
    trace.save_csv(&dir.join("transfer_trace.csv"))?;
    if let Some(last) = trace.rows.last() {
        println!(
            "transfer done: l_ae {:.6}, l_h {:.6}, total {:.6}",
            last.l_ae, last.l_h, last.l_total
        );
    }
    Ok(())
}

fn cluster_cmd(cfg: &ExperimentConfig, ckpt: &Path, run: usize) -> Result<()> {
    let data = load_dataset(cfg)?;
    let ae = checkpoint::load_base(ckpt)?;
    let z = ae.encode(&data.features)?;
    let seeds = RunSeeds::new(cfg.seed, run);
    let result = kmeans(&z, &cfg.kmeans.with_seed(seeds.kmeans()))?;
    write(&out_dir(cfg).join("assignments.txt"), lines(&result.assignments))?;
    println!(
        "k = {}, inertia {:.6}, {} iterations (restart {})",
        cfg.kmeans.k, result.inertia, result.iterations_run, result.restart
    );
    Ok(())
}

fn eval_cmd(cfg: &ExperimentConfig, assignments: &Path, baseline: Option<&Path>) -> Result<()> {
    let data = load_dataset(cfg)?;
    let truth = data
        .truth
        .as_ref()
        .ok_or_else(|| Error::Data("the dataset has no labels to score against".into()))?;
    let post = truth.score(&read_assignments(assignments)?)?;
    println!("acc,nmi,acc_delta,nmi_delta");
    match baseline {
        Some(b) => {
            let base = truth.score(&read_assignments(b)?)?;
            let d = post.delta(&base);
            println!("{},{},{},{}", post.acc, post.nmi, d.acc, d.nmi);
        }
        None => println!("{},{},,", post.acc, post.nmi),
    }
    Ok(())
}

fn experiment_cmd(cfg: &ExperimentConfig, workers: usize) -> Result<()> {
    let outcome = run_experiment(cfg, workers)?;
    for f in &outcome.failures {
        eprintln!("{f}");
    }
    if outcome.all_failed() {
        return Err(outcome.failures.into_iter().next().expect("non-empty").error);
    }
    print!("{}", summary_table(&outcome.report));
    Ok(())
}

/// Cells used when the config has no `[grid]`: the first real source at every quality, plus
/// real with an added white-noise source.
fn default_cells(cfg: &ExperimentConfig) -> Result<Vec<GridCell>> {
    let real = cfg
        .evidence
        .iter()
        .find(|e| e.quality == EvidenceQuality::Real)
        .ok_or_else(|| Error::Config("grid needs a [grid] section or a real evidence source".into()))?;
    let mapping = real.mapping.clone().unwrap_or_else(|| "mod".into());
    let noise = EvidenceSpec::white_noise(real.width);
    let random = EvidenceSpec {
        file: real.file.clone(),
        ..EvidenceSpec::random_index(real.width, &mapping)
    };
    Ok(vec![
        GridCell::new(vec![real.clone()]),
        GridCell::new(vec![noise.clone()]),
        GridCell::new(vec![random]),
        GridCell::new(vec![real.clone(), noise]),
    ])
}

fn grid_cmd(cfg: &ExperimentConfig, workers: usize) -> Result<()> {
    let cells = match &cfg.grid {
        Some(g) => g.cells.clone(),
        None => default_cells(cfg)?,
    };
    let outcome = run_grid(cfg, &cells, workers)?;
    for f in &outcome.failures {
        eprintln!("{f}");
    }
    print!("{}", outcome.csv());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let common = cli.command.common().clone();
    let cfg = load_config(&common)?;
    let workers = workers(&common);
    match &cli.command {
        Command::Synth { .. } => synth(&cfg),
        Command::Pretrain { run, .. } => pretrain_cmd(&cfg, *run),
        Command::Transfer { checkpoint, run, .. } => transfer_cmd(&cfg, checkpoint, *run),
        Command::Cluster { checkpoint, run, .. } => cluster_cmd(&cfg, checkpoint, *run),
        Command::Eval {
            assignments,
            baseline,
            ..
        } => eval_cmd(&cfg, assignments, baseline.as_deref()),
        Command::Experiment { .. } => experiment_cmd(&cfg, workers),
        Command::Grid { .. } => grid_cmd(&cfg, workers),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage mistakes count as configuration errors.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
