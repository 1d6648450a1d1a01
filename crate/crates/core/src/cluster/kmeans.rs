use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    /// Convergence threshold on the summed squared centroid shift, relative to the mean
    /// per-feature variance of the data.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansConfig {
    /// k-means++ seeding, 10 restarts, at most 300 Lloyd iterations, tol 1e-4.
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            restarts: 10,
            max_iters: 300,
            tol: 1e-4,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k-means needs k >= 2, got {}", self.k)));
        }
        if self.restarts == 0 {
            return Err(Error::Config("k-means needs at least one restart".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("k-means tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    /// Lloyd update steps performed.
    pub iterations_run: usize,
    /// Inertia after the initial assignment and after every update step.
    pub inertia_trace: Vec<f64>,
    /// Restart that produced this result.
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per row (lowest index on ties) and the total squared distance.
fn assign(z: &Matrix, centroids: &Matrix) -> (Vec<usize>, Vec<f64>, f64) {
    let mut labels = Vec::with_capacity(z.rows());
    let mut dists = Vec::with_capacity(z.rows());
    let mut inertia = 0.0;
    for row in z.iter_rows() {
        let mut best = (0, f64::INFINITY);
        for (c, centroid) in centroids.iter_rows().enumerate() {
            let d = sq_dist(row, centroid);
            if d < best.1 {
                best = (c, d);
            }
        }
        labels.push(best.0);
        dists.push(best.1);
        inertia += best.1;
    }
    (labels, dists, inertia)
}

fn plus_plus_init(z: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = z.rows();
    let mut centroids = Matrix::zeros(k, z.cols());
    centroids.row_mut(0).copy_from_slice(z.row(rng.below(n)));
    let mut closest: Vec<f64> = z.iter_rows().map(|r| sq_dist(r, centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in closest.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // every point already coincides with a centroid
            rng.below(n)
        };
        centroids.row_mut(c).copy_from_slice(z.row(pick));
        for (d, row) in closest.iter_mut().zip(z.iter_rows()) {
            *d = d.min(sq_dist(row, centroids.row(c)));
        }
    }
    centroids
}

/// Centroid means; empty clusters move to the points farthest from their current centroid.
fn update(z: &Matrix, labels: &[usize], dists: &[f64], k: usize) -> Matrix {
    let mut sums = Matrix::zeros(k, z.cols());
    let mut counts = vec![0usize; k];
    for (row, &l) in z.iter_rows().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(row) {
            *s += v;
        }
    }
    let mut far: Vec<usize> = (0..z.rows()).collect();
    // farthest first, lowest index among equals
    far.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
    let mut far = far.into_iter();
    for c in 0..k {
        if counts[c] == 0 {
            let p = far.next().expect("k <= n guarantees a donor point");
            sums.row_mut(c).copy_from_slice(z.row(p));
        } else {
            let inv = 1.0 / counts[c] as f64;
            sums.row_mut(c).iter_mut().for_each(|v| *v *= inv);
        }
    }
    sums
}

fn mean_feature_variance(z: &Matrix) -> f64 {
    let n = z.rows() as f64;
    let means: Vec<f64> = z.column_sums().into_iter().map(|s| s / n).collect();
    let mut var = 0.0;
    for row in z.iter_rows() {
        var += sq_dist(row, &means);
    }
    var / (n * z.cols().max(1) as f64)
}

fn check_input(z: &Matrix, cfg: &KMeansConfig) -> Result<()> {
    cfg.validate()?;
    if z.rows() < cfg.k {
        return Err(Error::Data(format!(
            "k-means with k = {} needs at least k samples, got {}",
            cfg.k,
            z.rows()
        )));
    }
    if !z.is_finite() {
        return Err(Error::Domain("k-means input contains non-finite values".into()));
    }
    Ok(())
}

/// One k-means++-seeded Lloyd run, using the stream derived for `restart`.
pub fn kmeans_restart(z: &Matrix, cfg: &KMeansConfig, restart: usize) -> Result<ClusteringResult> {
    check_input(z, cfg)?;
    let mut rng = Rng::new(cfg.seed).derive(restart as u64);
    let tol = cfg.tol * mean_feature_variance(z);
    let mut centroids = plus_plus_init(z, cfg.k, &mut rng);
    let (mut labels, mut dists, inertia) = assign(z, &centroids);
    let mut trace = vec![inertia];
    let mut iterations_run = 0;
    for it in 1..=cfg.max_iters {
        let next = update(z, &labels, &dists, cfg.k);
        let shift: f64 = next
            .iter_rows()
            .zip(centroids.iter_rows())
            .map(|(a, b)| sq_dist(a, b))
            .sum();
        centroids = next;
        let (new_labels, new_dists, inertia) = assign(z, &centroids);
        trace.push(inertia);
        iterations_run = it;
        let changed = new_labels != labels;
        labels = new_labels;
        dists = new_dists;
        if !changed || shift <= tol {
            break;
        }
    }
    Ok(ClusteringResult {
        assignments: labels,
        centroids,
        inertia: *trace.last().expect("trace is never empty"),
        iterations_run,
        inertia_trace: trace,
        restart,
    })
}

/// Best-inertia result over `cfg.restarts` independent restarts (lowest restart index on ties).
pub fn kmeans(z: &Matrix, cfg: &KMeansConfig) -> Result<ClusteringResult> {
    check_input(z, cfg)?;
    let mut best: Option<ClusteringResult> = None;
    for r in 0..cfg.restarts {
        let res = kmeans_restart(z, cfg, r)?;
        if best.as_ref().is_none_or(|b| res.inertia < b.inertia) {
            best = Some(res);
        }
    }
    Ok(best.expect("restarts >= 1"))
}
