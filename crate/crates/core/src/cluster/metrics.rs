//! Clustering accuracy (ACC) and normalized mutual information (NMI).
//!
//! NMI uses the arithmetic mean of the two label entropies as its normalizer:
//! `NMI = I(a; b) / ((H(a) + H(b)) / 2)`, with `0·ln 0 = 0`. When both labelings are constant
//! the two agree trivially and NMI is defined as 1.

use crate::error::{Error, Result};

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::dim("label vectors", truth.len(), pred.len()));
    }
    Ok(())
}

/// Square contingency table of side `max(k, max label + 1)`: `table[p][t]` counts samples in
/// cluster `p` with class `t`.
fn contingency(pred: &[usize], truth: &[usize], k: usize) -> Vec<Vec<u64>> {
    let size = pred
        .iter()
        .chain(truth)
        .map(|&l| l + 1)
        .max()
        .unwrap_or(0)
        .max(k);
    let mut table = vec![vec![0u64; size]; size];
    for (&p, &t) in pred.iter().zip(truth) {
        table[p][t] += 1;
    }
    table
}

/// Minimum-cost perfect assignment on a square matrix (Kuhn–Munkres with potentials,
/// O(n³)). Returns `row → column`.
fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    const INF: i64 = i64::MAX / 4;
    // 1-based potentials; column 0 is a virtual column used to seed each augmentation
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        matched_row[0] = row;
        let mut col0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = matched_row[col0];
            let mut delta = INF;
            let mut col1 = 0;
            for c in 1..=n {
                if !used[c] {
                    let cur = cost[r - 1][c - 1] - u[r] - v[c];
                    if cur < minv[c] {
                        minv[c] = cur;
                        way[c] = col0;
                    }
                    if minv[c] < delta {
                        delta = minv[c];
                        col1 = c;
                    }
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[matched_row[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
            if matched_row[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            matched_row[col0] = matched_row[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for c in 1..=n {
        if matched_row[c] != 0 {
            assignment[matched_row[c] - 1] = c - 1;
        }
    }
    assignment
}

/// Cluster → class map maximizing the number of agreeing samples.
///
/// The map is a permutation of `0..size` where `size = max(k, largest label + 1)`.
pub fn hungarian_match(pred: &[usize], truth: &[usize], k: usize) -> Result<Vec<usize>> {
    check_lengths(pred, truth)?;
    let table = contingency(pred, truth, k);
    let max = table.iter().flatten().copied().max().unwrap_or(0) as i64;
    let cost: Vec<Vec<i64>> = table
        .iter()
        .map(|row| row.iter().map(|&c| max - c as i64).collect())
        .collect();
    Ok(min_cost_assignment(&cost))
}

/// Samples whose cluster maps to their class under `map`.
pub fn matched_count(pred: &[usize], truth: &[usize], map: &[usize]) -> usize {
    pred.iter().zip(truth).filter(|(&p, &t)| map[p] == t).count()
}

/// Unsupervised clustering accuracy: best one-to-one cluster/class agreement over N.
pub fn acc(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    if pred.is_empty() {
        return Err(Error::Data("accuracy of an empty labeling".into()));
    }
    let map = hungarian_match(pred, truth, 0)?;
    Ok(matched_count(pred, truth, &map) as f64 / pred.len() as f64)
}

/// Sums in ascending order so the result depends only on the multiset of terms, which keeps
/// NMI bit-identical under any relabeling.
fn canonical_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    canonical_sum(
        counts
            .filter(|&c| c > 0)
            .map(|c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .collect(),
    )
}

/// Normalized mutual information with the arithmetic-mean normalizer, in `[0, 1]`.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    if pred.is_empty() {
        return Err(Error::Data("NMI of an empty labeling".into()));
    }
    let table = contingency(pred, truth, 0);
    let n = pred.len() as f64;
    let size = table.len();
    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..size).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let h_pred = entropy(row_sums.iter().copied(), n);
    let h_truth = entropy(col_sums.iter().copied(), n);
    if h_pred == 0.0 && h_truth == 0.0 {
        return Ok(1.0);
    }
    // a one-to-one correspondence has I = H(a) = H(b); return it exactly
    let bijective = table.iter().all(|r| r.iter().filter(|&&c| c > 0).count() <= 1)
        && (0..size).all(|c| table.iter().filter(|r| r[c] > 0).count() <= 1);
    if bijective {
        return Ok(1.0);
    }
    let mut terms = Vec::new();
    for (p, row) in table.iter().enumerate() {
        for (t, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                terms.push(c / n * (c * n / (row_sums[p] as f64 * col_sums[t] as f64)).ln());
            }
        }
    }
    let mi = canonical_sum(terms);
    let denom = 0.5 * (h_pred + h_truth);
    Ok((mi / denom).clamp(0.0, 1.0))
}
