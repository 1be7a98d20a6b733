//! Seeded experiment sweeps over datasets, client distributions, algorithms
//! and participation levels, with CSV result records and best-of-N reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, BlobParams, ClientDataset, LabeledDataset, Partition};
use crate::error::{Error, Result};
use crate::federation::{run_centralized, run_wf_kmeans, FederationConfig, RunResult, WeightMode};
use crate::kfed::{kfed_baseline, KFedParams};
use crate::kmeans::{assign, InitStrategy, KMeansParams};
use crate::metrics::{self, RunMetrics, RunSummary};
use crate::seed::derive_seed;

/// Realization of the default synthetic dataset used by the reference
/// experiments. See the README for how it was chosen.
pub const DEFAULT_SYNTHETIC_SEED: u64 = 396;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic {
        #[serde(default)]
        blobs: BlobParams,
        #[serde(default)]
        seed: u64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// Use only the first `limit` samples.
        #[serde(default)]
        limit: Option<usize>,
    },
    Partitioned {
        path: PathBuf,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic { blobs: BlobParams::default(), seed: DEFAULT_SYNTHETIC_SEED }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Iid,
    HalfIid,
    NonIid,
    FromFile,
}

impl Distribution {
    pub fn as_str(&self) -> &'static str {
        match self {
            Distribution::Iid => "iid",
            Distribution::HalfIid => "half_iid",
            Distribution::NonIid => "non_iid",
            Distribution::FromFile => "from_file",
        }
    }
}

impl std::str::FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(Distribution::Iid),
            "half_iid" | "half-iid" => Ok(Distribution::HalfIid),
            "non_iid" | "non-iid" | "noniid" => Ok(Distribution::NonIid),
            "from_file" | "file" => Ok(Distribution::FromFile),
            _ => Err(Error::InvalidParameter(format!("unknown distribution '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Kmeans,
    Ewf,
    Dwf,
    Kfed,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Kmeans, Algorithm::Ewf, Algorithm::Dwf, Algorithm::Kfed];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Kmeans => "kmeans",
            Algorithm::Ewf => "ewf",
            Algorithm::Dwf => "dwf",
            Algorithm::Kfed => "kfed",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            Algorithm::Kmeans => "k-means",
            Algorithm::Ewf => "EWF k-means",
            Algorithm::Dwf => "DWF k-means",
            Algorithm::Kfed => "k-FED",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" | "k-means" => Ok(Algorithm::Kmeans),
            "ewf" => Ok(Algorithm::Ewf),
            "dwf" => Ok(Algorithm::Dwf),
            "kfed" | "k-fed" => Ok(Algorithm::Kfed),
            _ => Err(Error::InvalidParameter(format!("unknown algorithm '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub distribution: Distribution,
    /// Number of clients the data is distributed to.
    pub n_total_clients: usize,
    pub algorithms: Vec<Algorithm>,
    pub k: usize,
    /// Round and local-training parameters shared by EWF and DWF; its `k`,
    /// `n_clients`, `weight_mode` and `seed` are set per run.
    pub federation: FederationConfig,
    pub kmeans_max_iter: usize,
    /// Seeding of the centralized baseline and of every k-means inside k-FED.
    pub kmeans_init: InitStrategy,
    pub kfed_k_local: Option<usize>,
    /// Participating clients per round, one sweep point each.
    pub sweep: Vec<usize>,
    pub runs: usize,
    pub keep_best: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    /// Fill the `wall_time_s` column. Off by default so reruns are byte-identical.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            distribution: Distribution::Iid,
            n_total_clients: 100,
            algorithms: Algorithm::ALL.to_vec(),
            k: 5,
            federation: FederationConfig::default(),
            kmeans_max_iter: 10_000,
            kmeans_init: InitStrategy::RandomPoints,
            kfed_k_local: None,
            sweep: vec![100],
            runs: 20,
            keep_best: 10,
            base_seed: 0,
            output_dir: PathBuf::from("results"),
            record_wall_time: false,
        }
    }
}

impl ExperimentConfig {
    /// Full grid: 100 runs per point, best 50 kept, 5..=100 clients in steps of 5.
    pub fn paper_protocol(mut self) -> Self {
        self.runs = 100;
        self.keep_best = 50;
        self.sweep = (5..=100).step_by(5).filter(|&s| s <= self.n_total_clients).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required".into());
        }
        if self.sweep.is_empty() {
            return bad("sweep must list at least one n_clients value".into());
        }
        if self.runs == 0 || self.keep_best == 0 || self.keep_best > self.runs {
            return bad(format!("need 1 <= keep_best ({}) <= runs ({})", self.keep_best, self.runs));
        }
        if self.n_total_clients == 0 {
            return bad("n_total_clients must be >= 1".into());
        }
        if let Some(&s) = self.sweep.iter().find(|&&s| s == 0 || s > self.n_total_clients) {
            return bad(format!("sweep value {s} outside 1..={}", self.n_total_clients));
        }
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if self.kmeans_max_iter == 0 {
            return bad("kmeans_max_iter must be >= 1".into());
        }
        if self.distribution == Distribution::FromFile && !matches!(self.dataset, DatasetSpec::Partitioned { .. }) {
            return bad("distribution from_file needs a partitioned dataset".into());
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// One CSV row: one algorithm run at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub dataset: String,
    pub distribution: String,
    pub n_total_clients: usize,
    pub algorithm: String,
    pub k: usize,
    pub n_clients: usize,
    pub run: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_local: usize,
    pub max_global: usize,
    pub tol: f64,
    pub stall_window: usize,
    pub score: f64,
    pub accuracy: Option<f64>,
    pub v_measure: Option<f64>,
    pub rounds: usize,
    pub converged_by: String,
    pub wall_time_s: Option<f64>,
}

impl ResultRecord {
    pub fn metrics(&self) -> RunMetrics {
        RunMetrics { score: self.score, accuracy: self.accuracy, v_measure: self.v_measure }
    }
}

/// A loaded dataset plus the fixed partition, if it came with one.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub data: LabeledDataset,
    pub fixed_partition: Option<Partition>,
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<LoadedDataset> {
    match spec {
        DatasetSpec::Synthetic { blobs, seed } => {
            Ok(LoadedDataset { data: data::generate_blobs(blobs, *seed)?, fixed_partition: None })
        }
        DatasetSpec::Idx { images, labels, limit } => {
            let mut d = data::load_idx(images, labels)?;
            if let Some(limit) = *limit {
                if limit < d.len() {
                    let keep: Vec<usize> = (0..limit).collect();
                    d = LabeledDataset::new(d.name.clone(), d.points.select_rows(&keep), d.labels[..limit].to_vec())?;
                }
            }
            Ok(LoadedDataset { data: d, fixed_partition: None })
        }
        DatasetSpec::Partitioned { path } => {
            let (d, p) = data::load_partitioned(path)?;
            Ok(LoadedDataset { data: d, fixed_partition: Some(p) })
        }
    }
}

/// Distributes `data` over `n_clients` clients.
pub fn make_partition(
    data: &LabeledDataset,
    fixed: Option<&Partition>,
    distribution: Distribution,
    n_clients: usize,
    seed: u64,
) -> Result<Partition> {
    match distribution {
        Distribution::Iid => data::partition_iid(data, n_clients, seed),
        Distribution::HalfIid => data::partition_half_iid(data, n_clients, seed),
        Distribution::NonIid => data::partition_noniid(data, n_clients, seed),
        Distribution::FromFile => fixed
            .cloned()
            .ok_or_else(|| Error::InvalidParameter("distribution from_file needs a partitioned dataset".into())),
    }
}

/// Seed of run `run` at sweep point `n_clients`.
///
/// The centralized baseline ignores the sweep, so its seed uses sweep
/// coordinate 0 and repeats across sweep points.
pub fn run_seed(base_seed: u64, algorithm: Algorithm, n_clients: usize, run: usize) -> u64 {
    let sweep = if algorithm == Algorithm::Kmeans { 0 } else { n_clients as u64 };
    derive_seed(base_seed, &[sweep, run as u64])
}

fn partition_seed(base_seed: u64, n_clients: usize, run: usize) -> u64 {
    derive_seed(base_seed, &[n_clients as u64, run as u64])
}

/// Evaluates `centroids` on the whole dataset.
pub fn evaluate(data: &LabeledDataset, result: &RunResult) -> Result<RunMetrics> {
    let predicted = assign(&data.points, &result.centroids)?;
    Ok(RunMetrics {
        score: metrics::score(&data.points, &result.centroids)?,
        accuracy: Some(metrics::accuracy(&data.labels, predicted.labels())?),
        v_measure: Some(metrics::v_measure(&data.labels, predicted.labels())?),
    })
}

/// Runs a single algorithm at one sweep point with the given run seed.
pub fn run_single(
    config: &ExperimentConfig,
    loaded: &LoadedDataset,
    partition: &Partition,
    algorithm: Algorithm,
    n_clients: usize,
    seed: u64,
) -> Result<RunResult> {
    match algorithm {
        Algorithm::Kmeans => {
            // Dataset order, so the baseline does not depend on the partition.
            let params = KMeansParams::new(config.k)
                .with_max_iter(config.kmeans_max_iter)
                .with_tol(config.federation.tol)
                .with_init(config.kmeans_init);
            let whole = ClientDataset::unlabeled(loaded.data.points.clone());
            run_centralized(std::slice::from_ref(&whole), &params, seed)
        }
        Algorithm::Ewf | Algorithm::Dwf => {
            let fed = FederationConfig {
                k: config.k,
                n_clients: Some(n_clients),
                weight_mode: if algorithm == Algorithm::Dwf { WeightMode::Dynamic } else { WeightMode::Equal },
                k_local: config.kfed_k_local.or(config.federation.k_local),
                kfed_seeding: config.kmeans_init,
                seed,
                ..config.federation.clone()
            };
            run_wf_kmeans(&loaded.data.split(partition), &fed, None)
        }
        Algorithm::Kfed => {
            let params = KFedParams {
                k_local: config.kfed_k_local,
                max_iter: config.kmeans_max_iter,
                tol: config.federation.tol,
                init: config.kmeans_init,
                ..KFedParams::new(config.k)
            };
            kfed_baseline(&loaded.data.split(partition), n_clients, &params, seed)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn record(
    config: &ExperimentConfig,
    dataset: &str,
    algorithm: Algorithm,
    n_clients: usize,
    run: usize,
    seed: u64,
    result: &RunResult,
    metrics: RunMetrics,
    wall: f64,
) -> ResultRecord {
    let f = &config.federation;
    ResultRecord {
        dataset: dataset.to_string(),
        distribution: config.distribution.as_str().to_string(),
        n_total_clients: config.n_total_clients,
        algorithm: algorithm.as_str().to_string(),
        k: config.k,
        n_clients,
        run,
        seed,
        learning_rate: f.learning_rate,
        momentum: f.momentum,
        max_local: f.max_local,
        max_global: f.max_global,
        tol: f.tol,
        stall_window: f.stall_window,
        score: metrics.score,
        accuracy: metrics.accuracy,
        v_measure: metrics.v_measure,
        rounds: result.rounds,
        converged_by: result.converged_by.as_str().to_string(),
        wall_time_s: config.record_wall_time.then_some(wall),
    }
}

/// Executes every (sweep point, run, algorithm) combination.
///
/// Runs execute in parallel; records come back ordered by sweep point, run
/// index and the configured algorithm order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    let loaded = load_dataset(&config.dataset)?;
    if let Some(p) = &loaded.fixed_partition {
        if config.distribution == Distribution::FromFile && p.n_clients() != config.n_total_clients {
            return Err(Error::InvalidParameter(format!(
                "partitioned file has {} clients but n_total_clients = {}",
                p.n_clients(),
                config.n_total_clients
            )));
        }
    }
    let dataset = loaded.data.name.clone();
    let jobs: Vec<(usize, usize)> = config.sweep.iter().flat_map(|&s| (0..config.runs).map(move |r| (s, r))).collect();

    let per_job: Vec<Vec<ResultRecord>> = jobs
        .par_iter()
        .map(|&(n_clients, run)| -> Result<Vec<ResultRecord>> {
            let partition = make_partition(
                &loaded.data,
                loaded.fixed_partition.as_ref(),
                config.distribution,
                config.n_total_clients,
                partition_seed(config.base_seed, n_clients, run),
            )?;
            config
                .algorithms
                .iter()
                .map(|&algorithm| {
                    let seed = run_seed(config.base_seed, algorithm, n_clients, run);
                    let start = Instant::now();
                    let result = run_single(config, &loaded, &partition, algorithm, n_clients, seed)?;
                    let wall = start.elapsed().as_secs_f64();
                    let m = evaluate(&loaded.data, &result)?;
                    Ok(record(config, &dataset, algorithm, n_clients, run, seed, &result, m, wall))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_job.into_iter().flatten().collect())
}

pub fn write_records(path: impl AsRef<Path>, records: &[ResultRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    for required in ["dataset", "distribution", "algorithm", "n_clients", "score"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Results(format!("missing column '{required}'")));
        }
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Runs the experiment and writes `results.csv` and `manifest.json` into
/// the configured output directory.
pub fn run_and_write(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let records = run_experiment(config)?;
    fs::create_dir_all(&config.output_dir)?;
    write_records(config.output_dir.join("results.csv"), &records)?;
    let mut manifest = fs::File::create(config.output_dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut manifest, config)?;
    manifest.write_all(b"\n")?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub distribution: String,
    pub algorithm: String,
    pub n_clients: usize,
    pub runs: usize,
    pub kept: usize,
    pub score_mean: f64,
    pub score_std: f64,
    pub score_min: f64,
    pub score_max: f64,
    pub accuracy_mean: Option<f64>,
    pub accuracy_std: Option<f64>,
    pub accuracy_min: Option<f64>,
    pub accuracy_max: Option<f64>,
    pub v_measure_mean: Option<f64>,
    pub v_measure_std: Option<f64>,
    pub v_measure_min: Option<f64>,
    pub v_measure_max: Option<f64>,
}

impl SummaryRow {
    fn new(dataset: String, distribution: String, algorithm: String, n_clients: usize, s: &RunSummary) -> Self {
        SummaryRow {
            dataset,
            distribution,
            algorithm,
            n_clients,
            runs: s.runs,
            kept: s.kept,
            score_mean: s.score.mean,
            score_std: s.score.std,
            score_min: s.score.min,
            score_max: s.score.max,
            accuracy_mean: s.accuracy.map(|a| a.mean),
            accuracy_std: s.accuracy.map(|a| a.std),
            accuracy_min: s.accuracy.map(|a| a.min),
            accuracy_max: s.accuracy.map(|a| a.max),
            v_measure_mean: s.v_measure.map(|a| a.mean),
            v_measure_std: s.v_measure.map(|a| a.std),
            v_measure_min: s.v_measure.map(|a| a.min),
            v_measure_max: s.v_measure.map(|a| a.max),
        }
    }
}

/// Groups records by (dataset, distribution, algorithm, n_clients) and keeps
/// the `keep_best` lowest-scoring runs of each group.
pub fn summarize(records: &[ResultRecord], keep_best: usize) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::Empty("no result records"));
    }
    let mut groups: BTreeMap<(String, String, usize, String), Vec<RunMetrics>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.dataset.clone(), r.distribution.clone(), r.n_clients, r.algorithm.clone()))
            .or_default()
            .push(r.metrics());
    }
    groups
        .into_iter()
        .map(|((dataset, distribution, n_clients, algorithm), runs)| {
            if keep_best > runs.len() {
                return Err(Error::InvalidParameter(format!(
                    "keep_best = {keep_best} exceeds the {} runs of {algorithm} at n_clients = {n_clients}",
                    runs.len()
                )));
            }
            let s = metrics::summarize_runs(&runs, keep_best)?;
            Ok(SummaryRow::new(dataset, distribution, algorithm, n_clients, &s))
        })
        .collect()
}

pub fn write_summary(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Renders summaries as three tables (score, accuracy, v-measure) with one
/// column per algorithm, like the results tables of the reference study.
pub fn format_tables(rows: &[SummaryRow]) -> String {
    let algos: Vec<String> = {
        let mut present: Vec<Algorithm> = rows.iter().filter_map(|r| r.algorithm.parse().ok()).collect();
        present.sort();
        present.dedup();
        present.iter().map(|a| a.as_str().to_string()).collect()
    };
    let mut keys: Vec<(String, String, usize)> =
        rows.iter().map(|r| (r.dataset.clone(), r.distribution.clone(), r.n_clients)).collect();
    keys.sort();
    keys.dedup();

    type Getter = fn(&SummaryRow) -> Option<f64>;
    let tables: [(&str, [(&str, Getter); 3]); 3] = [
        ("score", [("mean", |s| Some(s.score_mean)), ("min", |s| Some(s.score_min)), ("std", |s| Some(s.score_std))]),
        ("accuracy", [("mean", |s| s.accuracy_mean), ("max", |s| s.accuracy_max), ("std", |s| s.accuracy_std)]),
        ("v_measure", [("mean", |s| s.v_measure_mean), ("max", |s| s.v_measure_max), ("std", |s| s.v_measure_std)]),
    ];

    let mut out = String::new();
    for (metric, stats) in tables {
        let _ = writeln!(out, "== {metric} ==");
        let _ = write!(out, "{:<14} {:<10} {:>9} {:<5}", "data", "dist", "n_clients", "value");
        for a in &algos {
            let name = a.parse::<Algorithm>().map(|a| a.display_name()).unwrap_or(a);
            let _ = write!(out, " {name:>12}");
        }
        out.push('\n');
        for (dataset, dist, n) in &keys {
            for (label, get) in stats {
                let _ = write!(out, "{dataset:<14} {dist:<10} {n:>9} {label:<5}");
                for a in &algos {
                    let cell = rows
                        .iter()
                        .find(|r| {
                            &r.dataset == dataset && &r.distribution == dist && r.n_clients == *n && &r.algorithm == a
                        })
                        .and_then(get);
                    match cell {
                        Some(v) => {
                            let _ = write!(out, " {v:>12.4}");
                        }
                        None => {
                            let _ = write!(out, " {:>12}", "-");
                        }
                    }
                }
                out.push('\n');
            }
        }
        out.push('\n');
    }
    out
}

/// Reads a results file, summarizes it, and writes `summary.csv` and
/// `summary.json` next to `out_prefix`.
pub fn report(
    results_path: impl AsRef<Path>,
    keep_best: usize,
    out_dir: impl AsRef<Path>,
) -> Result<(Vec<SummaryRow>, String)> {
    let records = read_records(results_path)?;
    let rows = summarize(&records, keep_best)?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    write_summary(out_dir.join("summary.csv"), &rows)?;
    let mut json = fs::File::create(out_dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut json, &rows)?;
    json.write_all(b"\n")?;
    Ok((rows.clone(), format_tables(&rows)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetSpec::Synthetic {
                blobs: BlobParams { n_samples: 300, n_noise: 5, ..Default::default() },
                seed: 3,
            },
            distribution: Distribution::NonIid,
            n_total_clients: 6,
            sweep: vec![3, 6],
            runs: 2,
            keep_best: 1,
            federation: FederationConfig { max_global: 50, stall_window: 20, ..Default::default() },
            output_dir: dir.to_path_buf(),
            ..Default::default()
        }
    }

    #[test]
    fn rows_cover_grid_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let records = run_experiment(&cfg).unwrap();
        assert_eq!(records.len(), 2 * 2 * 4);
        assert_eq!(records[0].n_clients, 3);
        assert_eq!(records[0].algorithm, "kmeans");
        assert_eq!(records[4].run, 1);
        assert!(records.iter().all(|r| r.wall_time_s.is_none()));
        // The centralized baseline ignores the sweep.
        assert_eq!(records[0].score, records[8].score);
        assert_eq!(records[0].seed, records[8].seed);
    }

    #[test]
    fn csv_round_trip_and_report() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let records = run_and_write(&cfg).unwrap();
        let back = read_records(dir.path().join("results.csv")).unwrap();
        assert_eq!(back, records);
        let (rows, table) = report(dir.path().join("results.csv"), 2, dir.path()).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(table.contains("DWF k-means"));
        assert!(report(dir.path().join("results.csv"), 3, dir.path()).is_err());
    }

    #[test]
    fn single_run_summary_has_zero_std() {
        let rec = ResultRecord {
            dataset: "d".into(),
            distribution: "iid".into(),
            n_total_clients: 1,
            algorithm: "dwf".into(),
            k: 1,
            n_clients: 1,
            run: 0,
            seed: 0,
            learning_rate: 1.0,
            momentum: 0.0,
            max_local: 1,
            max_global: 1,
            tol: 1e-8,
            stall_window: 0,
            score: 0.25,
            accuracy: Some(0.5),
            v_measure: None,
            rounds: 1,
            converged_by: "tol".into(),
            wall_time_s: None,
        };
        let rows = summarize(&[rec], 1).unwrap();
        assert_eq!(rows[0].score_mean, 0.25);
        assert_eq!(rows[0].score_std, 0.0);
        assert_eq!(rows[0].v_measure_mean, None);
    }

    #[test]
    fn missing_columns_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "dataset,algorithm\nx,dwf\n").unwrap();
        assert!(matches!(read_records(&path), Err(Error::Results(_))));
    }

    #[test]
    fn config_validation_and_protocol() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let p = cfg.clone().paper_protocol();
        assert_eq!((p.runs, p.keep_best), (100, 50));
        assert_eq!(p.sweep.len(), 20);
        assert_eq!(p.sweep[0], 5);
        assert!(ExperimentConfig { keep_best: 30, ..cfg.clone() }.validate().is_err());
        assert!(ExperimentConfig { sweep: vec![101], ..cfg.clone() }.validate().is_err());
        assert!(ExperimentConfig { distribution: Distribution::FromFile, ..cfg }.validate().is_err());
    }

    #[test]
    fn config_json_accepts_partial_documents() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"dataset": {"kind": "synthetic", "seed": 4}, "distribution": "non_iid", "algorithms": ["dwf"], "sweep": [10]}"#,
        )
        .unwrap();
        assert_eq!(cfg.algorithms, vec![Algorithm::Dwf]);
        assert_eq!(cfg.n_total_clients, 100);
        assert!(matches!(cfg.dataset, DatasetSpec::Synthetic { seed: 4, .. }));
    }
}
