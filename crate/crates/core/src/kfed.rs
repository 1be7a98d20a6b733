//! One-shot k-FED: every participant clusters its own data, the server then
//! clusters the pooled local means.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::federation::{request_score, select_clients, ConfigEcho, ConvergedBy, RunResult, ScoreMode};
use crate::kmeans::{kmeans, InitStrategy, KMeansFit, KMeansParams};
use crate::matrix::{CentroidSet, DataMatrix};
use crate::seed::{self, derive_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KFedParams {
    pub k: usize,
    /// Clusters per client; `None` uses `k`.
    pub k_local: Option<usize>,
    pub max_iter: usize,
    pub tol: f64,
    pub n_init: usize,
    /// Seeding of the local and server k-means.
    pub init: InitStrategy,
}

impl KFedParams {
    pub fn new(k: usize) -> Self {
        Self { k, k_local: None, max_iter: 10_000, tol: 1e-8, n_init: 1, init: InitStrategy::RandomPoints }
    }

    fn local_k(&self) -> usize {
        self.k_local.unwrap_or(self.k)
    }
}

impl Default for KFedParams {
    fn default() -> Self {
        Self::new(5)
    }
}

const SERVER: u64 = u64::MAX;

fn kfed_fit(clients: &[ClientDataset], participating: &[usize], params: &KFedParams, seed: u64) -> Result<KMeansFit> {
    if participating.is_empty() {
        return Err(Error::Empty("no participating clients"));
    }
    if params.k == 0 || params.local_k() == 0 {
        return Err(Error::InvalidParameter("k and k_local must be >= 1".into()));
    }
    let dim = clients
        .get(participating[0])
        .ok_or_else(|| Error::InvalidParameter(format!("unknown client {}", participating[0])))?
        .points
        .n_cols();

    let mut pooled: Vec<f64> = Vec::new();
    for &i in participating {
        let client = clients.get(i).ok_or_else(|| Error::InvalidParameter(format!("unknown client {i}")))?;
        if client.points.n_cols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: client.points.n_cols() });
        }
        if client.is_empty() {
            continue;
        }
        let k_eff = params.local_k().min(client.len());
        let local = KMeansParams::new(k_eff)
            .with_max_iter(params.max_iter)
            .with_tol(params.tol)
            .with_n_init(params.n_init)
            .with_init(params.init);
        let fit = kmeans(&client.points, &local, derive_seed(seed, &[i as u64]))?;
        pooled.extend_from_slice(fit.centroids.values());
    }

    if pooled.len() / dim < params.k {
        pad_pool(&mut pooled, dim, clients, participating, params.k, seed);
    }
    let n_pooled = pooled.len() / dim;
    if n_pooled < params.k {
        return Err(Error::TooFewPoints { k: params.k, n: n_pooled });
    }

    let pool = DataMatrix::new(n_pooled, dim, pooled)?;
    let server = KMeansParams::new(params.k)
        .with_max_iter(params.max_iter)
        .with_tol(params.tol)
        .with_n_init(params.n_init)
        .with_init(params.init);
    kmeans(&pool, &server, derive_seed(seed, &[SERVER]))
}

/// Tops up an under-full pool with raw participant points, in a seeded order,
/// whose coordinates are not pooled yet.
fn pad_pool(
    pooled: &mut Vec<f64>,
    dim: usize,
    clients: &[ClientDataset],
    participating: &[usize],
    k: usize,
    seed: u64,
) {
    let key = |row: &[f64]| row.iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    let mut present: HashSet<Vec<u64>> = pooled.chunks_exact(dim).map(key).collect();
    let mut candidates: Vec<(usize, usize)> =
        participating.iter().flat_map(|&c| (0..clients[c].len()).map(move |r| (c, r))).collect();
    candidates.shuffle(&mut seed::rng(derive_seed(seed, &[stream::PAD])));

    for (c, r) in candidates {
        if pooled.len() / dim >= k {
            return;
        }
        let row = clients[c].points.row(r);
        if present.insert(key(row)) {
            pooled.extend_from_slice(row);
        }
    }
}

/// Initial centroids from the participating clients via k-FED.
pub fn kfed_init(
    clients: &[ClientDataset],
    participating: &[usize],
    params: &KFedParams,
    seed: u64,
) -> Result<CentroidSet> {
    Ok(kfed_fit(clients, participating, params, seed)?.centroids)
}

/// k-FED as a standalone baseline: `n_clients` clients are sampled once and
/// the result is scored on the whole federation.
pub fn kfed_baseline(clients: &[ClientDataset], n_clients: usize, params: &KFedParams, seed: u64) -> Result<RunResult> {
    let participating = select_clients(clients.len(), n_clients, derive_seed(seed, &[stream::CLIENTS]), 0)?;
    let fit = kfed_fit(clients, &participating, params, seed)?;
    let score = request_score(clients, &fit.centroids, ScoreMode::SizeWeighted)?;
    Ok(RunResult {
        centroids: fit.centroids,
        score,
        rounds: 1,
        converged_by: if fit.converged { ConvergedBy::Tol } else { ConvergedBy::MaxGlobal },
        seed,
        config: ConfigEcho::KFed(params.clone()),
    })
}
