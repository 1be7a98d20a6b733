//! Weighted federated k-means.
//!
//! Each global round samples clients, lets every participant run a few Lloyd
//! steps from the current global centroids, and merges the local centroids
//! per cluster with column-normalized weights. Dynamic weights (the number of
//! a client's points that fall to each received global centroid) make one
//! round with a single local step identical to a centralized Lloyd step on
//! the union of the client data. Equal weights give the FedAvg-style variant,
//! and arbitrary weights can be plugged in through [`WeightFn`].

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::kfed::{self, KFedParams};
use crate::kmeans::{self, lloyd_step, InitStrategy, KMeansParams};
use crate::matrix::{CentroidSet, DataMatrix};
use crate::metrics;
use crate::seed::{self, derive_seed, stream};

// Below this many point-centroid-feature products per round, local updates
// run on the calling thread.
const PARALLEL_ROUND_THRESHOLD: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    Dynamic,
    Equal,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Objective on the union of all client data.
    #[default]
    SizeWeighted,
    /// Unweighted mean of the per-client objectives.
    ClientMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergedBy {
    Tol,
    Stall,
    MaxGlobal,
}

impl ConvergedBy {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConvergedBy::Tol => "tol",
            ConvergedBy::Stall => "stall",
            ConvergedBy::MaxGlobal => "max_global",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederationConfig {
    pub k: usize,
    pub n_init: usize,
    pub max_global: usize,
    pub max_local: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub tol: f64,
    /// Participants per round; `None` means every client.
    pub n_clients: Option<usize>,
    pub weight_mode: WeightMode,
    /// Stop once this many rounds pass without a new minimum movement; 0 disables.
    pub stall_window: usize,
    pub relocate_empty_local: bool,
    pub init: InitStrategy,
    /// Local `k` used by k-FED initialization; defaults to `k`.
    pub k_local: Option<usize>,
    /// Seeding of the k-means runs inside k-FED initialization.
    pub kfed_seeding: InitStrategy,
    pub score_mode: ScoreMode,
    pub seed: u64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            k: 5,
            n_init: 1,
            max_global: 10_000,
            max_local: 5,
            learning_rate: 0.01,
            momentum: 0.8,
            tol: 1e-8,
            n_clients: None,
            weight_mode: WeightMode::Dynamic,
            stall_window: 300,
            relocate_empty_local: false,
            init: InitStrategy::KFed,
            k_local: None,
            kfed_seeding: InitStrategy::RandomPoints,
            score_mode: ScoreMode::SizeWeighted,
            seed: 0,
        }
    }
}

impl FederationConfig {
    /// Plain distributed k-means: full participation, one local step, no
    /// damping, dynamic weights.
    pub fn distributed(k: usize) -> Self {
        Self { k, max_local: 1, learning_rate: 1.0, momentum: 0.0, ..Default::default() }
    }

    pub fn validate(&self, n_total: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.into()));
        if self.k == 0 {
            return bad("k must be >= 1");
        }
        if self.n_init == 0 || self.max_global == 0 || self.max_local == 0 {
            return bad("n_init, max_global and max_local must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return bad("tol must be > 0");
        }
        let n = self.participants(n_total);
        if n == 0 {
            return bad("n_clients must be >= 1");
        }
        if n > n_total {
            return Err(Error::TooManyClients { requested: n, available: n_total });
        }
        Ok(())
    }

    pub fn participants(&self, n_total: usize) -> usize {
        self.n_clients.unwrap_or(n_total)
    }
}

/// Per-cluster aggregation weights reported by one client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn counts(counts: &[usize]) -> Self {
        Self(counts.iter().map(|&c| c as f64).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    fn validate(&self, k: usize) -> Result<()> {
        if self.0.len() != k {
            return Err(Error::LengthMismatch { left: k, right: self.0.len() });
        }
        if self.0.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter("weights must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Normalized weights, one row per participant; every column sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaMatrix {
    rows: Vec<Vec<f64>>,
}

impl LambdaMatrix {
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, participant: usize, cluster: usize) -> f64 {
        self.rows[participant][cluster]
    }

    pub fn column_sum(&self, cluster: usize) -> f64 {
        self.rows.iter().map(|r| r[cluster]).sum()
    }
}

/// Produces the weights a client attaches to its local centroids.
pub trait WeightFn: Sync {
    fn weights(&self, data: &DataMatrix, global: &CentroidSet, local: &CentroidSet) -> WeightVector;
}

impl<F> WeightFn for F
where
    F: Fn(&DataMatrix, &CentroidSet, &CentroidSet) -> WeightVector + Sync,
{
    fn weights(&self, data: &DataMatrix, global: &CentroidSet, local: &CentroidSet) -> WeightVector {
        self(data, global, local)
    }
}

/// Client side of a round: up to `max_local` Lloyd steps starting from the
/// received global centroids.
///
/// The returned weights count the client's points per received global
/// centroid, i.e. they are fixed before any local step moves the centroids.
pub fn local_update(
    data: &DataMatrix,
    global: &CentroidSet,
    max_local: usize,
    tol: f64,
    relocate_empty: bool,
) -> Result<(CentroidSet, WeightVector)> {
    if max_local == 0 {
        return Err(Error::InvalidParameter("max_local must be >= 1".into()));
    }
    let (mut local, counts) = lloyd_step(data, global, relocate_empty)?;
    let mut movement = local.distance(global);
    let mut steps = 1;
    while steps < max_local && movement >= tol {
        let (next, _) = lloyd_step(data, &local, relocate_empty)?;
        movement = next.distance(&local);
        local = next;
        steps += 1;
    }
    Ok((local, WeightVector::counts(counts.as_slice())))
}

/// Uniform sample of `n_clients` out of `n_total` clients without
/// replacement, sorted ascending. Depends only on `(seed, round)`.
pub fn select_clients(n_total: usize, n_clients: usize, seed: u64, round: u64) -> Result<Vec<usize>> {
    if n_clients == 0 {
        return Err(Error::InvalidParameter("n_clients must be >= 1".into()));
    }
    if n_clients > n_total {
        return Err(Error::TooManyClients { requested: n_clients, available: n_total });
    }
    if n_clients == n_total {
        return Ok((0..n_total).collect());
    }
    let mut rng = seed::rng(derive_seed(seed, &[stream::CLIENTS, round]));
    let mut picked = index::sample(&mut rng, n_total, n_clients).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// `lambda[i][j] = w[i][j] / sum_i w[i][j]`, or `1 / participants` for a
/// column whose weights are all zero.
pub fn compute_lambda(weights: &[WeightVector]) -> Result<LambdaMatrix> {
    let first = weights.first().ok_or(Error::Empty("no participating clients"))?;
    let k = first.0.len();
    for w in weights {
        w.validate(k)?;
    }
    let fallback = 1.0 / weights.len() as f64;
    let mut rows = vec![vec![0.0; k]; weights.len()];
    for j in 0..k {
        let total: f64 = weights.iter().map(|w| w.0[j]).sum();
        for (row, w) in rows.iter_mut().zip(weights) {
            row[j] = if total > 0.0 { w.0[j] / total } else { fallback };
        }
    }
    Ok(LambdaMatrix { rows })
}

/// Server side of a round.
///
/// With `d_j = sum_i lambda[i][j] * c_ij` the new centroids are
/// `c + lr * (d - c) + momentum * (c - c_old)`, evaluated as
/// `(1 - lr) * c + lr * d + momentum * (c - c_old)` so that `lr = 1,
/// momentum = 0` returns `d` bit for bit.
pub fn aggregate(
    local: &[CentroidSet],
    weights: &[WeightVector],
    current: &CentroidSet,
    previous: &CentroidSet,
    learning_rate: f64,
    momentum: f64,
) -> Result<CentroidSet> {
    if local.is_empty() {
        return Err(Error::Empty("no participating clients"));
    }
    if local.len() != weights.len() {
        return Err(Error::LengthMismatch { left: local.len(), right: weights.len() });
    }
    current.check_shape(previous)?;
    for c in local {
        current.check_shape(c)?;
    }
    if weights[0].0.len() != current.k() {
        return Err(Error::LengthMismatch { left: current.k(), right: weights[0].0.len() });
    }
    let lambda = compute_lambda(weights)?;

    let (k, dim) = (current.k(), current.dim());
    let mut next = current.clone();
    let mut merged = vec![0.0; dim];
    for j in 0..k {
        merged.iter_mut().for_each(|v| *v = 0.0);
        for (i, c) in local.iter().enumerate() {
            let l = lambda.get(i, j);
            for (m, x) in merged.iter_mut().zip(c.centroid(j)) {
                *m += l * x;
            }
        }
        let (cur, prev) = (current.centroid(j), previous.centroid(j));
        for (d, out) in next.centroid_mut(j).iter_mut().enumerate() {
            *out = (1.0 - learning_rate) * cur[d] + learning_rate * merged[d] + momentum * (cur[d] - prev[d]);
        }
    }
    Ok(next)
}

/// Objective over every client; no client drops out in simulation.
pub fn request_score(clients: &[ClientDataset], centroids: &CentroidSet, mode: ScoreMode) -> Result<f64> {
    if clients.is_empty() {
        return Err(Error::Empty("no clients to score"));
    }
    match mode {
        ScoreMode::SizeWeighted => {
            let mut total = 0.0;
            let mut n = 0usize;
            for c in clients {
                total += metrics::sum_of_squares(&c.points, centroids)?;
                n += c.len();
            }
            Ok(total / n as f64)
        }
        ScoreMode::ClientMean => {
            let mut total = 0.0;
            for c in clients {
                total += metrics::score(&c.points, centroids)?;
            }
            Ok(total / clients.len() as f64)
        }
    }
}

/// Global model state between rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationState {
    pub current: CentroidSet,
    pub previous: CentroidSet,
    pub round: usize,
    pub movement_history: Vec<f64>,
}

impl FederationState {
    pub fn new(init: CentroidSet) -> Self {
        Self { previous: init.clone(), current: init, round: 0, movement_history: Vec::new() }
    }
}

fn client_weights(
    mode: WeightMode,
    weight_fn: Option<&dyn WeightFn>,
    data: &DataMatrix,
    global: &CentroidSet,
    local: &CentroidSet,
    counts: WeightVector,
    n_participants: usize,
) -> Result<WeightVector> {
    match mode {
        WeightMode::Dynamic => Ok(counts),
        WeightMode::Equal => Ok(WeightVector(vec![1.0 / n_participants as f64; global.k()])),
        WeightMode::Custom => {
            let f = weight_fn
                .ok_or_else(|| Error::InvalidParameter("custom weight mode needs a weight function".into()))?;
            let w = f.weights(data, global, local);
            w.validate(global.k())?;
            Ok(w)
        }
    }
}

/// One global round over the given participants. Returns the movement
/// `||C_new - C||_F`.
pub fn federated_round(
    clients: &[ClientDataset],
    participants: &[usize],
    state: &mut FederationState,
    config: &FederationConfig,
    weight_fn: Option<&dyn WeightFn>,
) -> Result<f64> {
    let global = &state.current;
    let update = |&i: &usize| -> Result<(CentroidSet, WeightVector)> {
        let data = &clients[i].points;
        let (local, counts) = local_update(data, global, config.max_local, config.tol, config.relocate_empty_local)?;
        let w = client_weights(config.weight_mode, weight_fn, data, global, &local, counts, participants.len())?;
        Ok((local, w))
    };
    let work: usize = participants.iter().map(|&i| clients[i].len()).sum::<usize>() * global.k() * global.dim();
    let updates: Vec<(CentroidSet, WeightVector)> = if work >= PARALLEL_ROUND_THRESHOLD {
        participants.par_iter().map(update).collect::<Result<_>>()?
    } else {
        participants.iter().map(update).collect::<Result<_>>()?
    };
    let (locals, weights): (Vec<_>, Vec<_>) = updates.into_iter().unzip();

    let next = aggregate(&locals, &weights, &state.current, &state.previous, config.learning_rate, config.momentum)?;
    let movement = next.distance(&state.current);
    state.previous = std::mem::replace(&mut state.current, next);
    state.round += 1;
    state.movement_history.push(movement);
    Ok(movement)
}

/// Which parameters produced a [`RunResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum ConfigEcho {
    Federated(FederationConfig),
    KFed(KFedParams),
    KMeans(KMeansParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub centroids: CentroidSet,
    pub score: f64,
    pub rounds: usize,
    pub converged_by: ConvergedBy,
    pub seed: u64,
    pub config: ConfigEcho,
}

fn check_clients(clients: &[ClientDataset]) -> Result<usize> {
    let first = clients.first().ok_or(Error::Empty("no clients"))?;
    let dim = first.points.n_cols();
    for c in clients {
        if c.is_empty() {
            return Err(Error::Empty("every client needs at least one point"));
        }
        if c.points.n_cols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: c.points.n_cols() });
        }
    }
    Ok(dim)
}

/// Starting centroids for one restart.
pub fn initial_centroids(clients: &[ClientDataset], config: &FederationConfig, seed: u64) -> Result<CentroidSet> {
    match config.init {
        InitStrategy::KFed => {
            let participants = select_clients(
                clients.len(),
                config.participants(clients.len()),
                derive_seed(seed, &[stream::INIT]),
                0,
            )?;
            let params = KFedParams { k_local: config.k_local, init: config.kfed_seeding, ..KFedParams::new(config.k) };
            kfed::kfed_init(clients, &participants, &params, seed)
        }
        strategy => {
            let all = DataMatrix::concat(clients.iter().map(|c| &c.points))?;
            kmeans::init_centroids(&all, config.k, strategy, seed)
        }
    }
}

/// Runs the federation from `init` until the movement drops below `tol`,
/// the movement stalls for `stall_window` rounds, or `max_global` rounds pass.
pub fn run_from(
    clients: &[ClientDataset],
    config: &FederationConfig,
    weight_fn: Option<&dyn WeightFn>,
    init: CentroidSet,
    seed: u64,
) -> Result<(FederationState, ConvergedBy)> {
    let n_total = clients.len();
    let n_part = config.participants(n_total);
    let mut state = FederationState::new(init);
    let mut best_movement = f64::INFINITY;
    let mut last_improvement = 0;
    loop {
        let t = state.round + 1;
        let participants = select_clients(n_total, n_part, seed, t as u64)?;
        let movement = federated_round(clients, &participants, &mut state, config, weight_fn)?;
        if movement < best_movement {
            best_movement = movement;
            last_improvement = t;
        }
        if movement < config.tol {
            return Ok((state, ConvergedBy::Tol));
        }
        if config.stall_window > 0 && t - last_improvement >= config.stall_window {
            return Ok((state, ConvergedBy::Stall));
        }
        if t >= config.max_global {
            return Ok((state, ConvergedBy::MaxGlobal));
        }
    }
}

/// Weighted federated k-means with `n_init` restarts; the restart with the
/// lowest score wins.
pub fn run_wf_kmeans(
    clients: &[ClientDataset],
    config: &FederationConfig,
    weight_fn: Option<&dyn WeightFn>,
) -> Result<RunResult> {
    let dim = check_clients(clients)?;
    config.validate(clients.len())?;
    if config.weight_mode == WeightMode::Custom && weight_fn.is_none() {
        return Err(Error::InvalidParameter("custom weight mode needs a weight function".into()));
    }
    let mut best: Option<RunResult> = None;
    for restart in 0..config.n_init {
        let restart_seed = derive_seed(config.seed, &[stream::RESTART, restart as u64]);
        let init = initial_centroids(clients, config, restart_seed)?;
        init.check_dim(dim)?;
        let (state, converged_by) = run_from(clients, config, weight_fn, init, restart_seed)?;
        let score = request_score(clients, &state.current, config.score_mode)?;
        if best.as_ref().is_none_or(|b| score < b.score) {
            best = Some(RunResult {
                centroids: state.current,
                score,
                rounds: state.round,
                converged_by,
                seed: config.seed,
                config: ConfigEcho::Federated(config.clone()),
            });
        }
    }
    Ok(best.expect("n_init >= 1"))
}

/// Centralized Lloyd baseline on the union of the client data, reported in
/// the same shape as the federated runs.
pub fn run_centralized(clients: &[ClientDataset], params: &KMeansParams, seed: u64) -> Result<RunResult> {
    check_clients(clients)?;
    let all = DataMatrix::concat(clients.iter().map(|c| &c.points))?;
    let fit = kmeans::kmeans(&all, params, seed)?;
    Ok(RunResult {
        centroids: fit.centroids,
        score: fit.score,
        rounds: fit.iterations,
        converged_by: if fit.converged { ConvergedBy::Tol } else { ConvergedBy::MaxGlobal },
        seed,
        config: ConfigEcho::KMeans(params.clone()),
    })
}
