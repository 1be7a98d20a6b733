//! Lloyd's k-means: nearest-centroid assignment, single update steps, and the
//! restarted full loop used both centrally and on clients.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, CentroidSet, DataMatrix};
use crate::seed::{self, derive_seed, stream};
use crate::{kfed, metrics};

// Below this many distance evaluations assignment stays on the calling thread.
const PARALLEL_ASSIGN_THRESHOLD: usize = 1 << 18;

/// Cluster index per point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    labels: Vec<usize>,
    k: usize,
}

impl Assignment {
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<usize> {
        self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn counts(&self) -> ClusterCounts {
        let mut counts = vec![0; self.k];
        for &l in &self.labels {
            counts[l] += 1;
        }
        ClusterCounts(counts)
    }
}

/// Number of points per cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterCounts(pub Vec<usize>);

impl ClusterCounts {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Sample `k` distinct rows uniformly.
    #[default]
    RandomPoints,
    /// One-shot k-FED; a plain matrix is treated as a single client.
    KFed,
    /// Greedy k-means++: each new centroid is the best of `2 + ln k` candidates
    /// drawn proportionally to the squared distance to the chosen ones.
    KMeansPlusPlus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub n_init: usize,
    pub init: InitStrategy,
}

impl KMeansParams {
    pub fn new(k: usize) -> Self {
        Self { k, max_iter: 10_000, tol: 1e-8, n_init: 1, init: InitStrategy::RandomPoints }
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_n_init(mut self, n_init: usize) -> Self {
        self.n_init = n_init;
        self
    }

    pub fn with_init(mut self, init: InitStrategy) -> Self {
        self.init = init;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if self.k > n {
            return Err(Error::TooFewPoints { k: self.k, n });
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
        }
        if self.n_init == 0 {
            return Err(Error::InvalidParameter("n_init must be >= 1".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidParameter("tol must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub centroids: CentroidSet,
    pub score: f64,
    /// Lloyd steps taken by the winning restart.
    pub iterations: usize,
    /// Whether the winning restart stopped on the tolerance rather than `max_iter`.
    pub converged: bool,
}

fn nearest(point: &[f64], centroids: &CentroidSet) -> (usize, f64) {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (j, c) in centroids.centroids().enumerate() {
        let d = squared_distance(point, c);
        if d < best_dist {
            best = j;
            best_dist = d;
        }
    }
    (best, best_dist)
}

/// Nearest centroid and squared distance for every point. Ties go to the
/// lowest centroid index.
pub(crate) fn assign_with_distances(points: &DataMatrix, centroids: &CentroidSet) -> Result<Vec<(usize, f64)>> {
    centroids.check_dim(points.n_cols())?;
    let work = points.n_rows() * centroids.k() * points.n_cols();
    let out = if work >= PARALLEL_ASSIGN_THRESHOLD {
        points.values().par_chunks_exact(points.n_cols()).map(|p| nearest(p, centroids)).collect()
    } else {
        points.rows().map(|p| nearest(p, centroids)).collect()
    };
    Ok(out)
}

pub fn assign(points: &DataMatrix, centroids: &CentroidSet) -> Result<Assignment> {
    let labels = assign_with_distances(points, centroids)?.into_iter().map(|(l, _)| l).collect();
    Ok(Assignment { labels, k: centroids.k() })
}

/// One assignment + mean update.
///
/// Empty clusters keep their centroid unless `relocate_empty` is set, in which
/// case each empty cluster (in index order) takes the not yet used point that
/// lies farthest from its assigned centroid, ties by lowest point index. The
/// returned counts are always the histogram of the assignment against the
/// input centroids.
pub fn lloyd_step(
    points: &DataMatrix,
    centroids: &CentroidSet,
    relocate_empty: bool,
) -> Result<(CentroidSet, ClusterCounts)> {
    if points.is_empty() {
        return Err(Error::Empty("lloyd_step needs at least one point"));
    }
    let assigned = assign_with_distances(points, centroids)?;
    let (k, dim) = (centroids.k(), centroids.dim());

    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &(j, _)) in points.rows().zip(&assigned) {
        counts[j] += 1;
        for (s, x) in sums[j * dim..(j + 1) * dim].iter_mut().zip(p) {
            *s += x;
        }
    }

    let mut next = centroids.clone();
    for j in 0..k {
        if counts[j] > 0 {
            let n = counts[j] as f64;
            for (c, s) in next.centroid_mut(j).iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                *c = s / n;
            }
        }
    }

    if relocate_empty && counts.contains(&0) {
        let mut used = vec![false; points.n_rows()];
        for j in (0..k).filter(|&j| counts[j] == 0) {
            let mut far: Option<(usize, f64)> = None;
            for (i, &(_, d)) in assigned.iter().enumerate() {
                if !used[i] && far.is_none_or(|(_, best)| d > best) {
                    far = Some((i, d));
                }
            }
            // More empty clusters than points cannot happen when k <= n.
            if let Some((i, _)) = far {
                used[i] = true;
                next.centroid_mut(j).copy_from_slice(points.row(i));
            }
        }
    }

    Ok((next, ClusterCounts(counts)))
}

/// Samples `k` distinct rows as starting centroids.
fn random_points(points: &DataMatrix, k: usize, seed: u64) -> Result<CentroidSet> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if k > points.n_rows() {
        return Err(Error::TooFewPoints { k, n: points.n_rows() });
    }
    let mut rng = seed::rng(derive_seed(seed, &[stream::INIT]));
    let picked = index::sample(&mut rng, points.n_rows(), k).into_vec();
    CentroidSet::try_from(points.select_rows(&picked))
}

fn kmeans_plus_plus(points: &DataMatrix, k: usize, seed: u64) -> Result<CentroidSet> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let n = points.n_rows();
    if k > n {
        return Err(Error::TooFewPoints { k, n });
    }
    let mut rng = seed::rng(derive_seed(seed, &[stream::INIT]));
    let trials = 2 + (k as f64).ln() as usize;
    let mut picked = vec![rng.random_range(0..n)];
    let first = points.row(picked[0]);
    let mut closest: Vec<f64> = points.rows().map(|p| squared_distance(p, first)).collect();

    while picked.len() < k {
        let total: f64 = closest.iter().sum();
        let candidates: Vec<usize> = if total > 0.0 {
            let weighted = WeightedIndex::new(&closest).expect("positive total weight");
            (0..trials).map(|_| weighted.sample(&mut rng)).collect()
        } else {
            // Every point coincides with a chosen centroid.
            (0..trials).map(|_| rng.random_range(0..n)).collect()
        };
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for c in candidates {
            let cand = points.row(c);
            let updated: Vec<f64> =
                points.rows().zip(&closest).map(|(p, &d)| d.min(squared_distance(p, cand))).collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|(_, b, _)| potential < *b) {
                best = Some((c, potential, updated));
            }
        }
        let (c, _, updated) = best.expect("at least two trials");
        picked.push(c);
        closest = updated;
    }
    CentroidSet::try_from(points.select_rows(&picked))
}

pub fn init_centroids(points: &DataMatrix, k: usize, strategy: InitStrategy, seed: u64) -> Result<CentroidSet> {
    match strategy {
        InitStrategy::RandomPoints => random_points(points, k, seed),
        InitStrategy::KMeansPlusPlus => kmeans_plus_plus(points, k, seed),
        InitStrategy::KFed => {
            if k > points.n_rows() {
                return Err(Error::TooFewPoints { k, n: points.n_rows() });
            }
            let client = [crate::ClientDataset::unlabeled(points.clone())];
            kfed::kfed_init(&client, &[0], &kfed::KFedParams::new(k), seed)
        }
    }
}

/// Runs Lloyd iterations (with empty-cluster relocation) from `init` until
/// the centroid movement drops below `tol` or `max_iter` steps were taken.
pub fn lloyd_from(
    points: &DataMatrix,
    init: CentroidSet,
    max_iter: usize,
    tol: f64,
    relocate_empty: bool,
) -> Result<(CentroidSet, usize, bool)> {
    let mut current = init;
    for it in 1..=max_iter {
        let (next, _) = lloyd_step(points, &current, relocate_empty)?;
        let movement = next.distance(&current);
        current = next;
        if movement < tol {
            return Ok((current, it, true));
        }
    }
    Ok((current, max_iter, false))
}

/// Best-of-`n_init` Lloyd k-means by score.
pub fn kmeans(points: &DataMatrix, params: &KMeansParams, seed: u64) -> Result<KMeansFit> {
    params.validate(points.n_rows())?;
    let mut best: Option<KMeansFit> = None;
    for restart in 0..params.n_init {
        let restart_seed = derive_seed(seed, &[stream::RESTART, restart as u64]);
        let init = init_centroids(points, params.k, params.init, restart_seed)?;
        let (centroids, iterations, converged) = lloyd_from(points, init, params.max_iter, params.tol, true)?;
        let score = metrics::score(points, &centroids)?;
        if best.as_ref().is_none_or(|b| score < b.score) {
            best = Some(KMeansFit { centroids, score, iterations, converged });
        }
    }
    Ok(best.expect("n_init >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[[f64; 2]]) -> DataMatrix {
        DataMatrix::from_rows(rows).unwrap()
    }

    fn c(rows: &[[f64; 2]]) -> CentroidSet {
        CentroidSet::from_rows(rows).unwrap()
    }

    #[test]
    fn assigns_to_nearest() {
        let a = assign(&m(&[[1.5, 1.5]]), &c(&[[0.0, 0.0], [2.0, 2.0]])).unwrap();
        assert_eq!(a.labels(), &[1]);
    }

    #[test]
    fn exact_tie_goes_to_lowest_index() {
        let a = assign(&m(&[[1.0, 1.0]]), &c(&[[0.0, 0.0], [2.0, 2.0]])).unwrap();
        assert_eq!(a.labels(), &[0]);
    }

    #[test]
    fn points_on_centroids_get_identity_labels() {
        let pts = [[3.0, 1.0], [-1.0, 0.5], [7.0, 7.0]];
        let a = assign(&m(&pts), &c(&pts)).unwrap();
        assert_eq!(a.labels(), &[0, 1, 2]);
    }

    #[test]
    fn assign_rejects_dimension_mismatch() {
        let pts = DataMatrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let err = assign(&pts, &c(&[[0.0, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, found: 3 }));
    }

    #[test]
    fn lloyd_fixed_point() {
        let x = m(&[[0.0, 0.0], [0.0, 2.0], [10.0, 0.0], [10.0, 2.0]]);
        let start = c(&[[0.0, 1.0], [10.0, 1.0]]);
        let (next, counts) = lloyd_step(&x, &start, true).unwrap();
        assert_eq!(next, start);
        assert_eq!(counts.as_slice(), &[2, 2]);
    }

    #[test]
    fn lloyd_moves_to_means() {
        let x = m(&[[0.0, 0.0], [0.0, 2.0], [10.0, 0.0], [10.0, 2.0]]);
        let (next, counts) = lloyd_step(&x, &c(&[[0.0, 0.0], [10.0, 0.0]]), true).unwrap();
        assert_eq!(next, c(&[[0.0, 1.0], [10.0, 1.0]]));
        assert_eq!(counts.as_slice(), &[2, 2]);
    }

    #[test]
    fn empty_cluster_untouched_without_relocation() {
        let start = c(&[[0.0, 0.0], [5.0, 5.0]]);
        let (next, counts) = lloyd_step(&m(&[[0.0, 0.0]]), &start, false).unwrap();
        assert_eq!(next, start);
        assert_eq!(counts.as_slice(), &[1, 0]);
    }

    #[test]
    fn empty_cluster_relocates_to_farthest_point() {
        let x = m(&[[0.0, 0.0], [1.0, 0.0], [4.0, 0.0]]);
        let start = c(&[[0.0, 0.0], [100.0, 100.0], [200.0, 200.0]]);
        let (next, counts) = lloyd_step(&x, &start, true).unwrap();
        assert_eq!(counts.as_slice(), &[3, 0, 0]);
        // Farthest from centroid 0 is (4,0), then (1,0).
        assert_eq!(next.centroid(1), &[4.0, 0.0]);
        assert_eq!(next.centroid(2), &[1.0, 0.0]);
        assert_eq!(next.centroid(0), &[5.0 / 3.0, 0.0]);
    }

    #[test]
    fn relocation_ties_pick_lowest_point_index() {
        let x = m(&[[-1.0, 0.0], [1.0, 0.0]]);
        let (next, _) = lloyd_step(&x, &c(&[[0.0, 0.0], [50.0, 0.0]]), true).unwrap();
        assert_eq!(next.centroid(1), &[-1.0, 0.0]);
    }

    #[test]
    fn kmeans_with_k_equal_n_scores_zero() {
        let x = m(&[[0.0, 0.0], [1.0, 5.0], [3.0, -2.0], [8.0, 8.0]]);
        let fit = kmeans(&x, &KMeansParams::new(4), 7).unwrap();
        assert_eq!(fit.score, 0.0);
    }

    #[test]
    fn kmeans_rejects_k_above_n() {
        let err = kmeans(&m(&[[0.0, 0.0]]), &KMeansParams::new(2), 0).unwrap_err();
        assert!(matches!(err, Error::TooFewPoints { k: 2, n: 1 }));
    }

    #[test]
    fn kmeans_is_deterministic() {
        let rows: Vec<[f64; 2]> = (0..60).map(|i| [(i * 7 % 13) as f64, (i * 5 % 11) as f64]).collect();
        let x = m(&rows);
        let p = KMeansParams::new(4).with_n_init(3);
        assert_eq!(kmeans(&x, &p, 99).unwrap(), kmeans(&x, &p, 99).unwrap());
    }

    #[test]
    fn random_points_init_samples_distinct_rows() {
        let rows: Vec<[f64; 2]> = (0..20).map(|i| [i as f64, 0.0]).collect();
        let x = m(&rows);
        let init = init_centroids(&x, 5, InitStrategy::RandomPoints, 3).unwrap();
        let mut firsts: Vec<f64> = init.centroids().map(|r| r[0]).collect();
        firsts.sort_by(f64::total_cmp);
        firsts.dedup();
        assert_eq!(firsts.len(), 5);
        assert_eq!(init, init_centroids(&x, 5, InitStrategy::RandomPoints, 3).unwrap());
    }

    #[test]
    fn kmeans_plus_plus_spreads_over_separated_groups() {
        let mut rows: Vec<[f64; 2]> = Vec::new();
        for g in 0..4 {
            for i in 0..10 {
                rows.push([g as f64 * 100.0 + i as f64 * 0.01, 0.0]);
            }
        }
        let x = m(&rows);
        for seed in 0..20 {
            let init = init_centroids(&x, 4, InitStrategy::KMeansPlusPlus, seed).unwrap();
            let mut groups: Vec<i64> = init.centroids().map(|c| (c[0] / 100.0).round() as i64).collect();
            groups.sort_unstable();
            assert_eq!(groups, vec![0, 1, 2, 3], "seed {seed}");
            assert_eq!(init, init_centroids(&x, 4, InitStrategy::KMeansPlusPlus, seed).unwrap());
        }
    }

    #[test]
    fn kmeans_plus_plus_handles_duplicate_points() {
        let x = m(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]);
        let init = init_centroids(&x, 3, InitStrategy::KMeansPlusPlus, 2).unwrap();
        assert_eq!(init.to_rows(), vec![vec![1.0, 1.0]; 3]);
        assert!(init_centroids(&x, 4, InitStrategy::KMeansPlusPlus, 2).is_err());
    }

    #[test]
    fn random_points_with_k_equal_n_is_a_permutation() {
        let rows: Vec<[f64; 2]> = (0..6).map(|i| [i as f64, -(i as f64)]).collect();
        let x = m(&rows);
        let init = init_centroids(&x, 6, InitStrategy::RandomPoints, 11).unwrap();
        let mut got = init.to_rows();
        got.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(got, x.to_rows());
    }

    #[test]
    fn init_rejects_k_above_n() {
        assert!(init_centroids(&m(&[[0.0, 0.0]]), 2, InitStrategy::RandomPoints, 0).is_err());
        assert!(init_centroids(&m(&[[0.0, 0.0]]), 2, InitStrategy::KFed, 0).is_err());
    }
}
