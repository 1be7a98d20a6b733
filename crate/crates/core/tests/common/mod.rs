#![allow(dead_code)]

use std::collections::BTreeMap;

use fedkmeans::{CentroidSet, ClientDataset, DataMatrix};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    fedkmeans::seed::rng(seed)
}

/// Random instance for the distributed-equals-centralized check: `n <= 200`
/// points in `m <= 5` dimensions split over `N <= 8` disjoint, nonempty
/// clients, with `k <= 6` starting centroids drawn from the points.
pub struct Instance {
    pub clients: Vec<ClientDataset>,
    pub init: CentroidSet,
}

impl Instance {
    pub fn union(&self) -> DataMatrix {
        DataMatrix::concat(self.clients.iter().map(|c| &c.points)).unwrap()
    }
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n_clients = rng.random_range(1..=8);
    let n = rng.random_range(n_clients.max(6)..=200);
    let m = rng.random_range(1..=5);
    let k = rng.random_range(1..=6);
    let values: Vec<f64> = (0..n * m).map(|_| rng.random_range(-10.0..10.0)).collect();
    let all = DataMatrix::new(n, m, values).unwrap();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut cuts: Vec<usize> = rand::seq::index::sample(rng, n - 1, n_clients - 1).into_iter().map(|c| c + 1).collect();
    cuts.sort_unstable();
    cuts.insert(0, 0);
    cuts.push(n);
    let clients = cuts.windows(2).map(|w| ClientDataset::unlabeled(all.select_rows(&order[w[0]..w[1]]))).collect();

    let picked = rand::seq::index::sample(rng, n, k).into_vec();
    let init = CentroidSet::try_from(all.select_rows(&picked)).unwrap();
    Instance { clients, init }
}

/// Textbook Lloyd step: nearest centroid with ties to the lowest index, then
/// the mean of each cluster. Empty clusters keep their centroid. Returns the
/// new centroids and the cluster sizes.
pub fn naive_lloyd(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let k = centroids.len();
    let dim = centroids[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for p in points {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, c) in centroids.iter().enumerate() {
            let d: f64 = p.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        counts[best] += 1;
        for (s, x) in sums[best].iter_mut().zip(p) {
            *s += x;
        }
    }
    let next =
        (0..k)
            .map(|j| {
                if counts[j] == 0 {
                    centroids[j].clone()
                } else {
                    sums[j].iter().map(|s| s / counts[j] as f64).collect()
                }
            })
            .collect();
    (next, counts)
}

/// Per-coordinate error, relative where the reference is away from zero and
/// absolute near it.
pub fn coordinate_error(got: &[Vec<f64>], want: &[Vec<f64>]) -> f64 {
    got.iter().flatten().zip(want.iter().flatten()).map(|(g, w)| (g - w).abs() / w.abs().max(1.0)).fold(0.0, f64::max)
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

/// Accuracy by exhaustive search: for every cluster try every class and keep
/// the one with the most hits.
pub fn brute_accuracy(truth: &[usize], predicted: &[usize]) -> f64 {
    let clusters: Vec<usize> = {
        let mut c = predicted.to_vec();
        c.sort_unstable();
        c.dedup();
        c
    };
    let classes: Vec<usize> = {
        let mut c = truth.to_vec();
        c.sort_unstable();
        c.dedup();
        c
    };
    let mut correct = 0;
    for &cl in &clusters {
        let best = classes
            .iter()
            .map(|&t| truth.iter().zip(predicted).filter(|&(&a, &b)| a == t && b == cl).count())
            .max()
            .unwrap();
        correct += best;
    }
    correct as f64 / truth.len() as f64
}

fn entropy_of(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts.filter(|&c| c > 0).map(|c| c as f64 / n).map(|p| -p * p.ln()).sum()
}

/// V-measure through mutual information:
/// `h = I(C;K) / H(C)`, `c = I(C;K) / H(K)`, `I = H(C) + H(K) - H(C,K)`.
pub fn mi_v_measure(truth: &[usize], predicted: &[usize]) -> f64 {
    let n = truth.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut cls: BTreeMap<usize, usize> = BTreeMap::new();
    let mut clu: BTreeMap<usize, usize> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(predicted) {
        *joint.entry((t, p)).or_default() += 1;
        *cls.entry(t).or_default() += 1;
        *clu.entry(p).or_default() += 1;
    }
    let h_c = entropy_of(cls.values().copied(), n);
    let h_k = entropy_of(clu.values().copied(), n);
    let h_ck = entropy_of(joint.values().copied(), n);
    let mi = h_c + h_k - h_ck;
    let h = if h_c == 0.0 { 1.0 } else { (mi / h_c).clamp(0.0, 1.0) };
    let c = if h_k == 0.0 { 1.0 } else { (mi / h_k).clamp(0.0, 1.0) };
    if h + c == 0.0 {
        0.0
    } else {
        2.0 * h * c / (h + c)
    }
}
