use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
name = "small"
runs = 2
seed = 5

[dataset]
kind = "synthetic"
n_samples = 120
dims = 4
n_clusters = 4
n_supergroups = 2
cluster_std = 1.0
separation = 5.0
seed = 3

[autoencoder]
hidden_widths = [12, 8]
latent_width = 3
epochs = 4
optimizer = { kind = "adam", learning_rate = 0.005, batch_size = 16 }

[[evidence]]
quality = "real"
width = 2
mapping = "mod"

[transfer]
lambda = 1.0
epochs = 2
optimizer = { kind = "adam", learning_rate = 0.005, batch_size = 16 }

[kmeans]
k = 4
restarts = 2
"#;

fn evitram(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evitram"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn staged_pipeline_matches_the_artifacts_it_promises() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let out_s = out.display().to_string();
    let common = ["--config", &cfg, "--out", &out_s];

    let synth = evitram(&[&["synth"], &common[..]].concat());
    assert!(synth.status.success(), "{}", String::from_utf8_lossy(&synth.stderr));
    assert!(out.join("dataset.csv").exists());
    assert!(out.join("evidence0_real_w2.txt").exists());

    assert_eq!(evitram(&[&["pretrain"], &common[..]].concat()).status.code(), Some(0));
    let ae = out.join("pretrain.ckpt").display().to_string();
    assert_eq!(evitram(&[&["cluster", "--checkpoint", &ae], &common[..]].concat()).status.code(), Some(0));
    std::fs::rename(out.join("assignments.txt"), out.join("base.txt")).unwrap();

    assert_eq!(evitram(&[&["transfer", "--checkpoint", &ae], &common[..]].concat()).status.code(), Some(0));
    let trace = std::fs::read_to_string(out.join("transfer_trace.csv")).unwrap();
    assert!(trace.starts_with("epoch,l_ae,l_h,l_total\n"));
    assert_eq!(trace.lines().count(), 3);

    let model = out.join("evitram.ckpt").display().to_string();
    assert_eq!(evitram(&[&["cluster", "--checkpoint", &model], &common[..]].concat()).status.code(), Some(0));
    let post = out.join("assignments.txt").display().to_string();
    let base = out.join("base.txt").display().to_string();
    let eval = evitram(&[&["eval", "--assignments", &post, "--baseline", &base], &common[..]].concat());
    assert_eq!(eval.status.code(), Some(0));
    let text = stdout(&eval);
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row.len(), 4);
    assert!((0.0..=1.0).contains(&row[0]) && (0.0..=1.0).contains(&row[1]));
}

#[test]
fn experiment_and_grid_write_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), SMALL);
    let out = tmp.path().join("exp").display().to_string();
    let exp = evitram(&["experiment", "--config", &cfg, "--out", &out, "--workers", "2", "--seed", "9"]);
    assert_eq!(exp.status.code(), Some(0), "{}", String::from_utf8_lossy(&exp.stderr));
    assert!(stdout(&exp).contains("baseline"));
    let metrics = std::fs::read_to_string(Path::new(&out).join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("config_id,run,acc,nmi,acc_delta,nmi_delta"));
    let resolved = std::fs::read_to_string(Path::new(&out).join("config.toml")).unwrap();
    assert!(resolved.contains("seed = 9"));

    let grid_out = tmp.path().join("grid").display().to_string();
    let grid = evitram(&["grid", "--config", &cfg, "--out", &grid_out, "--workers", "2"]);
    assert_eq!(grid.status.code(), Some(0), "{}", String::from_utf8_lossy(&grid.stderr));
    let csv = stdout(&grid);
    assert!(csv.starts_with("config,runs,acc,nmi\n"));
    assert_eq!(csv.lines().count(), 6, "header, baseline and four default cells:\n{csv}");
}

#[test]
fn exit_codes_follow_the_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o").display().to_string();

    assert_eq!(evitram(&["experiment", "--bogus"]).status.code(), Some(1));
    let missing = tmp.path().join("nope.toml").display().to_string();
    assert_eq!(evitram(&["experiment", "--config", &missing]).status.code(), Some(1));
    let bad = config(tmp.path(), &SMALL.replace("runs = 2", "runs = 0"));
    assert_eq!(evitram(&["experiment", "--config", &bad, "--out", &out]).status.code(), Some(1));

    let no_data = SMALL
        .replace("kind = \"synthetic\"", "kind = \"csv\"\npath = \"absent.csv\"")
        .replace("n_samples = 120\ndims = 4\nn_clusters = 4\nn_supergroups = 2\ncluster_std = 1.0\nseparation = 5.0\nseed = 3\n", "");
    let cfg = config(tmp.path(), &no_data);
    assert_eq!(evitram(&["experiment", "--config", &cfg, "--out", &out]).status.code(), Some(2));

    let exploding = SMALL.replacen(
        "optimizer = { kind = \"adam\", learning_rate = 0.005, batch_size = 16 }",
        "optimizer = { kind = \"sgd\", learning_rate = 1e12, batch_size = 16 }",
        1,
    );
    let cfg = config(tmp.path(), &exploding);
    let o = evitram(&["pretrain", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
