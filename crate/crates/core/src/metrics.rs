//! Clustering quality: the scaled k-means objective, majority-vote accuracy,
//! v-measure, and best-of-N run summaries.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::assign_with_distances;
use crate::matrix::{CentroidSet, DataMatrix};

/// Mean squared distance of every point to its nearest centroid.
pub fn score(points: &DataMatrix, centroids: &CentroidSet) -> Result<f64> {
    Ok(sum_of_squares(points, centroids)? / points.n_rows() as f64)
}

/// Unscaled objective; the sum of squared distances to the nearest centroid.
pub fn sum_of_squares(points: &DataMatrix, centroids: &CentroidSet) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Empty("score needs at least one point"));
    }
    Ok(assign_with_distances(points, centroids)?.iter().map(|&(_, d)| d).sum())
}

fn check_lengths(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(Error::Empty("label vectors"));
    }
    Ok(())
}

/// Fraction of points whose cluster's majority class equals their own class.
///
/// Each predicted cluster maps to the class occurring most often in it (ties
/// to the lowest class id); several clusters may map to the same class.
pub fn accuracy(true_labels: &[usize], predicted: &[usize]) -> Result<f64> {
    check_lengths(true_labels, predicted)?;
    let mut per_cluster: HashMap<usize, BTreeMap<usize, usize>> = HashMap::new();
    for (&t, &p) in true_labels.iter().zip(predicted) {
        *per_cluster.entry(p).or_default().entry(t).or_default() += 1;
    }
    let correct: usize = per_cluster.values().map(|classes| classes.values().fold(0, |best, &n| best.max(n))).sum();
    Ok(correct as f64 / true_labels.len() as f64)
}

/// Majority class per predicted cluster, ties to the lowest class id.
pub fn majority_mapping(true_labels: &[usize], predicted: &[usize]) -> Result<BTreeMap<usize, usize>> {
    check_lengths(true_labels, predicted)?;
    let mut per_cluster: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&t, &p) in true_labels.iter().zip(predicted) {
        *per_cluster.entry(p).or_default().entry(t).or_default() += 1;
    }
    Ok(per_cluster
        .into_iter()
        .map(|(cluster, classes)| {
            let mut best = (usize::MAX, 0);
            for (class, n) in classes {
                if n > best.1 {
                    best = (class, n);
                }
            }
            (cluster, best.0)
        })
        .collect())
}

/// Homogeneity and completeness with the usual degenerate conventions: a
/// single class gives homogeneity 1, a single cluster gives completeness 1.
pub fn homogeneity_completeness(true_labels: &[usize], predicted: &[usize]) -> Result<(f64, f64)> {
    check_lengths(true_labels, predicted)?;
    let n = true_labels.len() as f64;
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut classes: HashMap<usize, usize> = HashMap::new();
    let mut clusters: HashMap<usize, usize> = HashMap::new();
    for (&t, &p) in true_labels.iter().zip(predicted) {
        *joint.entry((t, p)).or_default() += 1;
        *classes.entry(t).or_default() += 1;
        *clusters.entry(p).or_default() += 1;
    }
    // Sorted summation keeps results independent of hash order.
    let entropy = |counts: &HashMap<usize, usize>| -> f64 {
        let mut v: Vec<usize> = counts.values().copied().collect();
        v.sort_unstable();
        -v.iter().map(|&c| (c as f64 / n) * (c as f64 / n).ln()).sum::<f64>()
    };
    let h_class = entropy(&classes);
    let h_cluster = entropy(&clusters);

    let mut cells: Vec<((usize, usize), usize)> = joint.into_iter().collect();
    cells.sort_unstable();
    let mut h_class_given_cluster = 0.0;
    let mut h_cluster_given_class = 0.0;
    for ((t, p), c) in cells {
        let c = c as f64;
        h_class_given_cluster -= (c / n) * (c / clusters[&p] as f64).ln();
        h_cluster_given_class -= (c / n) * (c / classes[&t] as f64).ln();
    }

    let homogeneity = if h_class == 0.0 { 1.0 } else { 1.0 - h_class_given_cluster / h_class };
    let completeness = if h_cluster == 0.0 { 1.0 } else { 1.0 - h_cluster_given_class / h_cluster };
    Ok((homogeneity.clamp(0.0, 1.0), completeness.clamp(0.0, 1.0)))
}

/// Harmonic mean of homogeneity and completeness.
pub fn v_measure(true_labels: &[usize], predicted: &[usize]) -> Result<f64> {
    let (h, c) = homogeneity_completeness(true_labels, predicted)?;
    if h + c == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * h * c / (h + c))
}

/// Evaluation numbers for one finished run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub score: f64,
    pub accuracy: Option<f64>,
    pub v_measure: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Stats { mean, std: var.sqrt(), min, max })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub runs: usize,
    pub kept: usize,
    pub score: Stats,
    pub accuracy: Option<Stats>,
    pub v_measure: Option<Stats>,
}

/// Keeps the `keep_best` lowest-scoring runs and summarizes each metric over
/// them. A metric is summarized only when every kept run reports it.
pub fn summarize_runs(runs: &[RunMetrics], keep_best: usize) -> Result<RunSummary> {
    if runs.is_empty() {
        return Err(Error::Empty("no runs to summarize"));
    }
    if keep_best == 0 || keep_best > runs.len() {
        return Err(Error::InvalidParameter(format!("keep_best = {keep_best} must be in 1..={}", runs.len())));
    }
    let mut sorted: Vec<&RunMetrics> = runs.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    sorted.truncate(keep_best);

    let scores: Vec<f64> = sorted.iter().map(|r| r.score).collect();
    let collect = |f: fn(&RunMetrics) -> Option<f64>| -> Option<Stats> {
        let vals: Option<Vec<f64>> = sorted.iter().map(|r| f(r)).collect();
        vals.and_then(|v| Stats::of(&v))
    };
    Ok(RunSummary {
        runs: runs.len(),
        kept: keep_best,
        score: Stats::of(&scores).expect("keep_best >= 1"),
        accuracy: collect(|r| r.accuracy),
        v_measure: collect(|r| r.v_measure),
    })
}
