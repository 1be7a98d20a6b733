use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fedkmeans::data::{self, BlobParams};
use fedkmeans::experiment::{self, Algorithm, DatasetSpec, Distribution, ExperimentConfig, DEFAULT_SYNTHETIC_SEED};
use fedkmeans::kmeans::InitStrategy;

#[derive(Parser)]
#[command(name = "fedkmeans", version, about = "Federated k-means simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or convert a dataset and write it as a partitioned JSON file.
    Generate(GenerateArgs),
    /// Run an experiment sweep and write results.csv + manifest.json.
    Run(Box<RunArgs>),
    /// Summarize a results.csv (best-of-N per group).
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Iid,
    HalfIid,
    NonIid,
    FromFile,
}

impl From<DistArg> for Distribution {
    fn from(d: DistArg) -> Self {
        match d {
            DistArg::Iid => Distribution::Iid,
            DistArg::HalfIid => Distribution::HalfIid,
            DistArg::NonIid => Distribution::NonIid,
            DistArg::FromFile => Distribution::FromFile,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Kmeans,
    Ewf,
    Dwf,
    Kfed,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Kmeans => Algorithm::Kmeans,
            AlgoArg::Ewf => Algorithm::Ewf,
            AlgoArg::Dwf => Algorithm::Dwf,
            AlgoArg::Kfed => Algorithm::Kfed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SeedingArg {
    RandomPoints,
    KmeansPlusPlus,
}

impl From<SeedingArg> for InitStrategy {
    fn from(a: SeedingArg) -> Self {
        match a {
            SeedingArg::RandomPoints => InitStrategy::RandomPoints,
            SeedingArg::KmeansPlusPlus => InitStrategy::KMeansPlusPlus,
        }
    }
}

/// Dataset selection shared by `generate` and `run`.
#[derive(Args, Default)]
struct DatasetArgs {
    /// IDX image file (MNIST format); requires --labels.
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    /// Use only the first N IDX samples.
    #[arg(long)]
    limit: Option<usize>,
    /// Pre-partitioned JSON dataset.
    #[arg(long, conflicts_with = "images")]
    partitioned: Option<PathBuf>,
    /// Seed of the synthetic blob dataset.
    #[arg(long)]
    synthetic_seed: Option<u64>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    n_blobs: Option<usize>,
    #[arg(long)]
    blob_std: Option<f64>,
    #[arg(long)]
    n_noise: Option<usize>,
}

impl DatasetArgs {
    /// Applies the flags on top of `base`.
    fn apply(&self, base: DatasetSpec) -> DatasetSpec {
        if let (Some(images), Some(labels)) = (&self.images, &self.labels) {
            return DatasetSpec::Idx { images: images.clone(), labels: labels.clone(), limit: self.limit };
        }
        if let Some(path) = &self.partitioned {
            return DatasetSpec::Partitioned { path: path.clone() };
        }
        match base {
            DatasetSpec::Synthetic { mut blobs, mut seed } => {
                if let Some(s) = self.synthetic_seed {
                    seed = s;
                }
                if let Some(v) = self.n_samples {
                    blobs.n_samples = v;
                }
                if let Some(v) = self.n_blobs {
                    blobs.n_blobs = v;
                }
                if let Some(v) = self.blob_std {
                    blobs.std = v;
                }
                if let Some(v) = self.n_noise {
                    blobs.n_noise = v;
                }
                DatasetSpec::Synthetic { blobs, seed }
            }
            DatasetSpec::Idx { images, labels, limit } => {
                DatasetSpec::Idx { images, labels, limit: self.limit.or(limit) }
            }
            other => other,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long, value_enum, default_value = "iid")]
    distribution: DistArg,
    #[arg(long, default_value_t = 100)]
    n_total_clients: usize,
    /// Partition seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// 100 runs, best 50 kept, n_clients = 5, 10, ..., 100.
    #[arg(long)]
    paper_protocol: bool,
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long, value_enum)]
    distribution: Option<DistArg>,
    #[arg(long)]
    n_total_clients: Option<usize>,
    #[arg(long, value_enum, value_delimiter = ',')]
    algorithms: Option<Vec<AlgoArg>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<usize>>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    keep_best: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    max_local: Option<usize>,
    #[arg(long)]
    max_global: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    stall_window: Option<usize>,
    #[arg(long)]
    n_init: Option<usize>,
    #[arg(long)]
    relocate_empty_local: Option<bool>,
    #[arg(long)]
    kmeans_max_iter: Option<usize>,
    #[arg(long)]
    kfed_k_local: Option<usize>,
    /// Seeding of the centralized baseline and of the k-means runs inside k-FED.
    #[arg(long, value_enum)]
    kmeans_init: Option<SeedingArg>,
    #[arg(long)]
    record_wall_time: bool,
    /// Also print the summary tables after the run.
    #[arg(long)]
    report: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, short)]
    results: PathBuf,
    #[arg(long, default_value_t = 10)]
    keep_best: usize,
    /// Directory for summary.csv / summary.json; defaults to the results directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            ExperimentConfig::from_json_file(path).with_context(|| format!("reading config {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    cfg.dataset = args.dataset.apply(cfg.dataset);
    macro_rules! set {
        ($($field:ident).+ = $value:expr) => {
            if let Some(v) = $value {
                cfg.$($field).+ = v;
            }
        };
    }
    set!(distribution = args.distribution.map(Distribution::from));
    set!(n_total_clients = args.n_total_clients);
    set!(algorithms = args.algorithms.as_ref().map(|a| a.iter().copied().map(Algorithm::from).collect()));
    set!(k = args.k);
    set!(base_seed = args.base_seed);
    set!(output_dir = args.output_dir.clone());
    set!(federation.learning_rate = args.learning_rate);
    set!(federation.momentum = args.momentum);
    set!(federation.max_local = args.max_local);
    set!(federation.max_global = args.max_global);
    set!(federation.tol = args.tol);
    set!(federation.stall_window = args.stall_window);
    set!(federation.n_init = args.n_init);
    set!(federation.relocate_empty_local = args.relocate_empty_local);
    set!(kmeans_max_iter = args.kmeans_max_iter);
    set!(kmeans_init = args.kmeans_init.map(InitStrategy::from));
    if args.kfed_k_local.is_some() {
        cfg.kfed_k_local = args.kfed_k_local;
    }
    if args.record_wall_time {
        cfg.record_wall_time = true;
    }
    if args.paper_protocol {
        cfg = cfg.paper_protocol();
    }
    set!(sweep = args.sweep.clone());
    set!(runs = args.runs);
    set!(keep_best = args.keep_best);
    if args.sweep.is_none() && !args.paper_protocol && cfg.sweep.iter().any(|&s| s > cfg.n_total_clients) {
        cfg.sweep = vec![cfg.n_total_clients];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let spec =
        args.dataset.apply(DatasetSpec::Synthetic { blobs: BlobParams::default(), seed: DEFAULT_SYNTHETIC_SEED });
    let loaded = experiment::load_dataset(&spec)?;
    let partition = experiment::make_partition(
        &loaded.data,
        loaded.fixed_partition.as_ref(),
        args.distribution.into(),
        args.n_total_clients,
        args.seed,
    )?;
    data::save_partitioned(&args.out, &loaded.data, &partition)?;
    eprintln!("wrote {} points in {} clients to {}", loaded.data.len(), partition.n_clients(), args.out.display());
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = build_config(args)?;
    eprintln!(
        "running {} sweep point(s) x {} run(s) x {} algorithm(s)",
        cfg.sweep.len(),
        cfg.runs,
        cfg.algorithms.len()
    );
    let records = experiment::run_and_write(&cfg)?;
    let path = cfg.output_dir.join("results.csv");
    eprintln!("wrote {} records to {}", records.len(), path.display());
    if args.report {
        let (_, table) = experiment::report(&path, cfg.keep_best, &cfg.output_dir)?;
        print!("{table}");
    }
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let out = match &args.out {
        Some(o) => o.clone(),
        None => args.results.parent().map(PathBuf::from).unwrap_or_default(),
    };
    if !args.results.exists() {
        bail!("results file {} not found", args.results.display());
    }
    let (_, table) = experiment::report(&args.results, args.keep_best, &out)?;
    print!("{table}");
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
    }
}
