//! Python bindings for `fedkmeans`.
//!
//! Matrices cross the boundary as lists of rows and client collections as
//! lists of matrices.

use fedkmeans::data::{self, BlobParams};
use fedkmeans::experiment::{self, ExperimentConfig};
use fedkmeans::{metrics, CentroidSet, ClientDataset, DataMatrix, Error, FederationConfig, InitStrategy, KFedParams};
use fedkmeans::{KMeansParams, WeightMode};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

type Rows = Vec<Vec<f64>>;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DataMatrix> {
    DataMatrix::from_rows(rows).map_err(py_err)
}

fn centroids(rows: &[Vec<f64>]) -> PyResult<CentroidSet> {
    CentroidSet::from_rows(rows).map_err(py_err)
}

fn clients(parts: &[Rows]) -> PyResult<Vec<ClientDataset>> {
    parts.iter().map(|p| matrix(p).map(ClientDataset::unlabeled)).collect()
}

fn init_strategy(name: &str) -> PyResult<InitStrategy> {
    match name {
        "random_points" => Ok(InitStrategy::RandomPoints),
        "kfed" => Ok(InitStrategy::KFed),
        "kmeans_plus_plus" => Ok(InitStrategy::KMeansPlusPlus),
        _ => Err(PyValueError::new_err(format!(
            "unknown init {name:?}; expected random_points, kfed or kmeans_plus_plus"
        ))),
    }
}

fn weight_mode(name: &str) -> PyResult<WeightMode> {
    match name {
        "dynamic" => Ok(WeightMode::Dynamic),
        "equal" => Ok(WeightMode::Equal),
        _ => Err(PyValueError::new_err(format!("unknown weight mode {name:?}; expected dynamic or equal"))),
    }
}

/// Result of a centralized k-means fit.
#[pyclass(frozen, get_all, module = "pyfedkmeans")]
pub struct KMeansFit {
    pub centroids: Rows,
    pub score: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[pymethods]
impl KMeansFit {
    fn __repr__(&self) -> String {
        format!(
            "KMeansFit(k={}, score={}, iterations={}, converged={})",
            self.centroids.len(),
            self.score,
            self.iterations,
            self.converged
        )
    }
}

/// Result of a federated or k-FED run.
#[pyclass(frozen, get_all, module = "pyfedkmeans")]
pub struct RunResult {
    pub centroids: Rows,
    pub score: f64,
    pub rounds: usize,
    /// One of `tol`, `stall` or `max_global`.
    pub converged_by: String,
    pub seed: u64,
}

#[pymethods]
impl RunResult {
    fn __repr__(&self) -> String {
        format!(
            "RunResult(k={}, score={}, rounds={}, converged_by={:?})",
            self.centroids.len(),
            self.score,
            self.rounds,
            self.converged_by
        )
    }
}

impl From<fedkmeans::RunResult> for RunResult {
    fn from(r: fedkmeans::RunResult) -> Self {
        Self {
            centroids: r.centroids.to_rows(),
            score: r.score,
            rounds: r.rounds,
            converged_by: r.converged_by.as_str().to_string(),
            seed: r.seed,
        }
    }
}

#[pyfunction]
#[pyo3(signature = (points, k, *, max_iter = 10_000, tol = 1e-8, n_init = 1, init = "random_points", seed = 0))]
fn kmeans(
    points: Rows,
    k: usize,
    max_iter: usize,
    tol: f64,
    n_init: usize,
    init: &str,
    seed: u64,
) -> PyResult<KMeansFit> {
    let x = matrix(&points)?;
    let params =
        KMeansParams::new(k).with_max_iter(max_iter).with_tol(tol).with_n_init(n_init).with_init(init_strategy(init)?);
    let fit = fedkmeans::kmeans(&x, &params, seed).map_err(py_err)?;
    Ok(KMeansFit {
        centroids: fit.centroids.to_rows(),
        score: fit.score,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

/// Index of the nearest centroid for every point.
#[pyfunction]
fn assign(points: Rows, centroids: Rows) -> PyResult<Vec<usize>> {
    let a = fedkmeans::assign(&matrix(&points)?, &self::centroids(&centroids)?).map_err(py_err)?;
    Ok(a.into_labels())
}

/// One Lloyd iteration; returns the new centroids and the cluster sizes.
#[pyfunction]
#[pyo3(signature = (points, centroids, relocate_empty = false))]
fn lloyd_step(points: Rows, centroids: Rows, relocate_empty: bool) -> PyResult<(Rows, Vec<usize>)> {
    let (next, counts) =
        fedkmeans::lloyd_step(&matrix(&points)?, &self::centroids(&centroids)?, relocate_empty).map_err(py_err)?;
    Ok((next.to_rows(), counts.0))
}

/// Mean squared distance of each point to its nearest centroid.
#[pyfunction]
fn score(points: Rows, centroids: Rows) -> PyResult<f64> {
    metrics::score(&matrix(&points)?, &self::centroids(&centroids)?).map_err(py_err)
}

#[pyfunction]
fn accuracy(true_labels: Vec<usize>, predicted: Vec<usize>) -> PyResult<f64> {
    metrics::accuracy(&true_labels, &predicted).map_err(py_err)
}

#[pyfunction]
fn v_measure(true_labels: Vec<usize>, predicted: Vec<usize>) -> PyResult<f64> {
    metrics::v_measure(&true_labels, &predicted).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (
    *, n_samples = 10_000, n_blobs = 5, std = 0.2, n_noise = 100, n_features = 2,
    seed = experiment::DEFAULT_SYNTHETIC_SEED,
))]
fn generate_blobs(
    n_samples: usize,
    n_blobs: usize,
    std: f64,
    n_noise: usize,
    n_features: usize,
    seed: u64,
) -> PyResult<(Rows, Vec<usize>)> {
    let params = BlobParams { n_samples, n_blobs, std, n_noise, n_features, ..BlobParams::default() };
    let d = data::generate_blobs(&params, seed).map_err(py_err)?;
    Ok((d.points.to_rows(), d.labels))
}

/// Row indices held by each client under an `iid`, `half_iid` or `noniid` split.
#[pyfunction]
#[pyo3(signature = (points, labels, n_clients, kind = "iid", seed = 0))]
fn partition(points: Rows, labels: Vec<usize>, n_clients: usize, kind: &str, seed: u64) -> PyResult<Vec<Vec<usize>>> {
    let d = data::LabeledDataset::new("python", matrix(&points)?, labels).map_err(py_err)?;
    let p = match kind {
        "iid" => data::partition_iid(&d, n_clients, seed),
        "half_iid" => data::partition_half_iid(&d, n_clients, seed),
        "noniid" => data::partition_noniid(&d, n_clients, seed),
        _ => return Err(PyValueError::new_err(format!("unknown partition {kind:?}"))),
    }
    .map_err(py_err)?;
    Ok(p.clients().to_vec())
}

/// Weighted federated k-means over a list of client matrices.
#[pyfunction]
#[pyo3(signature = (
    clients, k, *, weight_mode = "dynamic", n_clients = None, learning_rate = 0.01, momentum = 0.8,
    max_local = 5, max_global = 10_000, tol = 1e-8, stall_window = 300, n_init = 1, init = "kfed", seed = 0,
))]
#[allow(clippy::too_many_arguments)]
fn run_wf_kmeans(
    clients: Vec<Rows>,
    k: usize,
    weight_mode: &str,
    n_clients: Option<usize>,
    learning_rate: f64,
    momentum: f64,
    max_local: usize,
    max_global: usize,
    tol: f64,
    stall_window: usize,
    n_init: usize,
    init: &str,
    seed: u64,
) -> PyResult<RunResult> {
    let cfg = FederationConfig {
        k,
        weight_mode: self::weight_mode(weight_mode)?,
        n_clients,
        learning_rate,
        momentum,
        max_local,
        max_global,
        tol,
        stall_window,
        n_init,
        init: init_strategy(init)?,
        seed,
        ..FederationConfig::default()
    };
    let c = self::clients(&clients)?;
    let res = fedkmeans::run_wf_kmeans(&c, &cfg, None).map_err(py_err)?;
    Ok(res.into())
}

/// One-shot k-FED on `n_clients` sampled clients, scored on all of them.
#[pyfunction]
#[pyo3(signature = (clients, k, *, n_clients = None, k_local = None, seed = 0))]
fn kfed_baseline(
    clients: Vec<Rows>,
    k: usize,
    n_clients: Option<usize>,
    k_local: Option<usize>,
    seed: u64,
) -> PyResult<RunResult> {
    let c = self::clients(&clients)?;
    let params = KFedParams { k_local, ..KFedParams::new(k) };
    let res = fedkmeans::kfed_baseline(&c, n_clients.unwrap_or(c.len()), &params, seed).map_err(py_err)?;
    Ok(res.into())
}

/// Runs a full experiment from a JSON config and returns one dict per run.
/// Nothing is written to disk.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg: ExperimentConfig =
        serde_json::from_str(config).map_err(|e| PyValueError::new_err(format!("bad config: {e}")))?;
    let records = py.detach(|| experiment::run_experiment(&cfg)).map_err(py_err)?;
    let json = serde_json::to_string(&records).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (json,))
}

#[pymodule]
fn pyfedkmeans(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DEFAULT_SYNTHETIC_SEED", experiment::DEFAULT_SYNTHETIC_SEED)?;
    m.add_class::<KMeansFit>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(assign, m)?)?;
    m.add_function(wrap_pyfunction!(lloyd_step, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(v_measure, m)?)?;
    m.add_function(wrap_pyfunction!(generate_blobs, m)?)?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    m.add_function(wrap_pyfunction!(run_wf_kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(kfed_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
