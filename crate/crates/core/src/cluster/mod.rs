//! k-means on latent codes, and the ACC / NMI clustering scores.

mod kmeans;
mod metrics;

use std::fmt::Write as _;

pub use kmeans::{kmeans, kmeans_restart, ClusteringResult, KMeansConfig};
pub use metrics::{acc, hungarian_match, matched_count, nmi};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub acc: f64,
    pub nmi: f64,
}

impl Scores {
    pub fn compute(pred: &[usize], truth: &[usize]) -> Result<Self> {
        Ok(Self {
            acc: acc(pred, truth)?,
            nmi: nmi(pred, truth)?,
        })
    }

    pub fn delta(&self, baseline: &Scores) -> Scores {
        Scores {
            acc: self.acc - baseline.acc,
            nmi: self.nmi - baseline.nmi,
        }
    }
}

/// Scores of one run: the baseline clustering and, when evidence was transferred, the
/// clustering after transfer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub run: usize,
    pub baseline: Scores,
    pub post: Option<Scores>,
}

impl RunMetrics {
    pub fn delta(&self) -> Option<Scores> {
        self.post.map(|p| p.delta(&self.baseline))
    }
}

/// Per-run scores of one configuration plus their means.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub config_id: String,
    pub runs: Vec<RunMetrics>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// `78.30 (+12.01)`: a score in percent with its signed delta, two decimals each.
pub fn format_with_delta(value: f64, delta: Option<f64>) -> String {
    match delta {
        Some(d) => format!("{:.2} ({:+.2})", 100.0 * value, 100.0 * d),
        None => format!("{:.2}", 100.0 * value),
    }
}

impl MetricsReport {
    pub fn new(config_id: impl Into<String>) -> Self {
        Self {
            config_id: config_id.into(),
            runs: Vec::new(),
        }
    }

    pub fn has_evidence(&self) -> bool {
        self.runs.iter().any(|r| r.post.is_some())
    }

    pub fn mean_baseline(&self) -> Scores {
        Scores {
            acc: mean(self.runs.iter().map(|r| r.baseline.acc)),
            nmi: mean(self.runs.iter().map(|r| r.baseline.nmi)),
        }
    }

    pub fn mean_post(&self) -> Option<Scores> {
        let posts: Vec<Scores> = self.runs.iter().filter_map(|r| r.post).collect();
        if posts.is_empty() {
            return None;
        }
        Some(Scores {
            acc: mean(posts.iter().map(|s| s.acc)),
            nmi: mean(posts.iter().map(|s| s.nmi)),
        })
    }

    /// Mean of the per-run deltas.
    pub fn mean_delta(&self) -> Option<Scores> {
        let deltas: Vec<Scores> = self.runs.iter().filter_map(RunMetrics::delta).collect();
        if deltas.is_empty() {
            return None;
        }
        Some(Scores {
            acc: mean(deltas.iter().map(|s| s.acc)),
            nmi: mean(deltas.iter().map(|s| s.nmi)),
        })
    }

    /// Rows `config_id,run,acc,nmi,acc_delta,nmi_delta`, one per run. Without evidence the
    /// baseline scores are reported and the delta cells are empty.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for r in &self.runs {
            let scores = r.post.unwrap_or(r.baseline);
            let (da, dn) = match r.delta() {
                Some(d) => (d.acc.to_string(), d.nmi.to_string()),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                self.config_id, r.run, scores.acc, scores.nmi, da, dn
            );
        }
        out
    }

    pub fn csv(&self) -> String {
        format!("{}\n{}", METRICS_CSV_HEADER, self.csv_rows())
    }
}

pub const METRICS_CSV_HEADER: &str = "config_id,run,acc,nmi,acc_delta,nmi_delta";
