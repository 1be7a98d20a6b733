//! Datasets and their distribution across clients.
//!
//! Covers synthetic Gaussian blobs, IDX (MNIST-format) ingestion, the JSON
//! pre-partitioned dataset format, and the IID / half-IID / non-IID client
//! partitions.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{self, assign_with_distances, KMeansParams};
use crate::matrix::DataMatrix;
use crate::seed::{self, derive_seed, stream};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// The data held by one client, with ground truth when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub points: DataMatrix,
    pub labels: Option<Vec<usize>>,
}

impl ClientDataset {
    pub fn new(points: DataMatrix, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != points.n_rows() {
                return Err(Error::LengthMismatch { left: points.n_rows(), right: l.len() });
            }
        }
        Ok(Self { points, labels })
    }

    pub fn unlabeled(points: DataMatrix) -> Self {
        Self { points, labels: None }
    }

    pub fn len(&self) -> usize {
        self.points.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub points: DataMatrix,
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, points: DataMatrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != points.n_rows() {
            return Err(Error::LengthMismatch { left: points.n_rows(), right: labels.len() });
        }
        Ok(Self { name: name.into(), points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.n_cols()
    }

    /// Splits the dataset into per-client datasets following `partition`.
    pub fn split(&self, partition: &Partition) -> Vec<ClientDataset> {
        partition
            .clients()
            .iter()
            .map(|idx| ClientDataset {
                points: self.points.select_rows(idx),
                labels: Some(idx.iter().map(|&i| self.labels[i]).collect()),
            })
            .collect()
    }
}

/// Disjoint cover of `0..n` by per-client index lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    clients: Vec<Vec<usize>>,
}

impl Partition {
    /// Validates that `clients` is a disjoint cover of `0..n` without empty clients.
    pub fn new(clients: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let p = Self { clients };
        p.validate(n)?;
        Ok(p)
    }

    pub fn clients(&self) -> &[Vec<usize>] {
        &self.clients
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clients.iter().map(Vec::len).collect()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.clients.is_empty() {
            return Err(Error::InvalidPartition("no clients".into()));
        }
        let mut seen = vec![false; n];
        let mut covered = 0;
        for (c, idx) in self.clients.iter().enumerate() {
            if idx.is_empty() {
                return Err(Error::InvalidPartition(format!("client {c} is empty")));
            }
            for &i in idx {
                if i >= n {
                    return Err(Error::InvalidPartition(format!(
                        "client {c} references point {i} but the dataset has {n}"
                    )));
                }
                if seen[i] {
                    return Err(Error::InvalidPartition(format!("point {i} assigned twice")));
                }
                seen[i] = true;
                covered += 1;
            }
        }
        if covered != n {
            return Err(Error::InvalidPartition(format!("{} of {n} points unassigned", n - covered)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobParams {
    pub n_samples: usize,
    pub n_blobs: usize,
    pub std: f64,
    pub n_noise: usize,
    pub n_features: usize,
    /// Lower and upper bound of the box holding blob centers and noise points.
    pub center_box: (f64, f64),
}

impl Default for BlobParams {
    fn default() -> Self {
        Self { n_samples: 10_000, n_blobs: 5, std: 0.2, n_noise: 100, n_features: 2, center_box: (-1.0, 1.0) }
    }
}

/// Isotropic Gaussian blobs plus uniform background noise.
///
/// Blob points carry labels `0..n_blobs` and appear in shuffled order; the
/// `n_noise` uniform points follow them with label `n_blobs`.
pub fn generate_blobs(params: &BlobParams, seed: u64) -> Result<LabeledDataset> {
    if params.n_blobs == 0 {
        return Err(Error::InvalidParameter("n_blobs must be >= 1".into()));
    }
    if !params.std.is_finite() || params.std < 0.0 {
        return Err(Error::InvalidParameter("std must be finite and >= 0".into()));
    }
    let (lo, hi) = params.center_box;
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Error::InvalidParameter("center_box must satisfy low < high".into()));
    }
    let dim = params.n_features.max(1);
    let mut rng = seed::rng(seed);

    let centers: Vec<Vec<f64>> =
        (0..params.n_blobs).map(|_| (0..dim).map(|_| rng.random_range(lo..hi)).collect()).collect();

    let base = params.n_samples / params.n_blobs;
    let extra = params.n_samples % params.n_blobs;
    let mut samples: Vec<(Vec<f64>, usize)> = Vec::with_capacity(params.n_samples + params.n_noise);
    for (b, center) in centers.iter().enumerate() {
        let size = base + usize::from(b < extra);
        for _ in 0..size {
            let p = center.iter().map(|&c| c + params.std * rng.sample::<f64, _>(StandardNormal)).collect();
            samples.push((p, b));
        }
    }
    samples.shuffle(&mut rng);
    for _ in 0..params.n_noise {
        let p = (0..dim).map(|_| rng.random_range(lo..hi)).collect();
        samples.push((p, params.n_blobs));
    }

    let mut values = Vec::with_capacity(samples.len() * dim);
    let mut labels = Vec::with_capacity(samples.len());
    for (p, l) in samples {
        values.extend(p);
        labels.push(l);
    }
    let n = labels.len();
    LabeledDataset::new("synthetic", DataMatrix::new(n, dim, values)?, labels)
}

fn check_client_count(n: usize, n_clients: usize) -> Result<()> {
    if n_clients == 0 {
        return Err(Error::InvalidParameter("number of clients must be >= 1".into()));
    }
    if n_clients > n {
        return Err(Error::TooManyClients { requested: n_clients, available: n });
    }
    Ok(())
}

/// Shuffles `indices` and cuts them into `n_clients` contiguous chunks whose
/// sizes differ by at most one (the first `len % n_clients` chunks are larger).
fn iid_chunks(mut indices: Vec<usize>, n_clients: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = seed::rng(derive_seed(seed, &[stream::PARTITION, 0]));
    indices.shuffle(&mut rng);
    let base = indices.len() / n_clients;
    let extra = indices.len() % n_clients;
    let mut out = Vec::with_capacity(n_clients);
    let mut start = 0;
    for c in 0..n_clients {
        let size = base + usize::from(c < extra);
        out.push(indices[start..start + size].to_vec());
        start += size;
    }
    out
}

/// Clusters the given rows into `n_clients` groups with a short k-means run
/// (five restarts of at most five steps) and returns one group per client.
fn kmeans_groups(points: &DataMatrix, indices: &[usize], n_clients: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let subset = points.select_rows(indices);
    let params = KMeansParams::new(n_clients).with_max_iter(5).with_n_init(5);
    let fit = kmeans::kmeans(&subset, &params, derive_seed(seed, &[stream::PARTITION, 1]))?;
    let assigned = assign_with_distances(&subset, &fit.centroids)?;

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
    let mut dist: Vec<f64> = Vec::with_capacity(assigned.len());
    let mut label: Vec<usize> = Vec::with_capacity(assigned.len());
    for &(l, d) in &assigned {
        label.push(l);
        dist.push(d);
    }
    // The final assignment can leave a relocated centroid without points.
    // Give each empty group the point farthest from its centroid among groups
    // that can spare one.
    let mut sizes = vec![0usize; n_clients];
    for &l in &label {
        sizes[l] += 1;
    }
    for j in 0..n_clients {
        if sizes[j] > 0 {
            continue;
        }
        let mut pick: Option<usize> = None;
        for i in 0..label.len() {
            if sizes[label[i]] > 1 && pick.is_none_or(|p| dist[i] > dist[p]) {
                pick = Some(i);
            }
        }
        let i = pick.expect("n_clients <= n guarantees a donor group");
        sizes[label[i]] -= 1;
        label[i] = j;
        dist[i] = 0.0;
        sizes[j] = 1;
    }
    for (pos, &l) in label.iter().enumerate() {
        groups[l].push(indices[pos]);
    }
    Ok(groups)
}

/// Random, equally sized client shards.
pub fn partition_iid(data: &LabeledDataset, n_clients: usize, seed: u64) -> Result<Partition> {
    check_client_count(data.len(), n_clients)?;
    let clients = iid_chunks((0..data.len()).collect(), n_clients, seed);
    Partition::new(clients, data.len())
}

/// One k-means cluster per client.
pub fn partition_noniid(data: &LabeledDataset, n_clients: usize, seed: u64) -> Result<Partition> {
    check_client_count(data.len(), n_clients)?;
    let indices: Vec<usize> = (0..data.len()).collect();
    let clients = kmeans_groups(&data.points, &indices, n_clients, seed)?;
    Partition::new(clients, data.len())
}

/// A random half of the points is shared out IID, the rest non-IID; client
/// `c` receives IID shard `c` together with k-means cluster `c`.
pub fn partition_half_iid(data: &LabeledDataset, n_clients: usize, seed: u64) -> Result<Partition> {
    check_client_count(data.len(), n_clients)?;
    if data.len() < 2 * n_clients {
        return Err(Error::TooManyClients { requested: 2 * n_clients, available: data.len() });
    }
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let mut rng = seed::rng(derive_seed(seed, &[stream::PARTITION, 2]));
    indices.shuffle(&mut rng);
    let half = data.len() / 2;
    let (iid_part, noniid_part) = indices.split_at(half);

    let iid = iid_chunks(iid_part.to_vec(), n_clients, derive_seed(seed, &[3]));
    let mut noniid_sorted = noniid_part.to_vec();
    noniid_sorted.sort_unstable();
    let noniid = kmeans_groups(&data.points, &noniid_sorted, n_clients, derive_seed(seed, &[4]))?;

    let clients = iid
        .into_iter()
        .zip(noniid)
        .map(|(mut a, b)| {
            a.extend(b);
            a
        })
        .collect();
    Partition::new(clients, data.len())
}

fn idx_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Idx { path: path.to_path_buf(), reason: reason.into() }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut buf)?;
    Ok(buf)
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| idx_err(path, "truncated header"))
}

/// Reads an IDX image file (`u8`, three dimensions) and its label file.
///
/// Pixels are scaled to `[0, 1]` by dividing by 255 and each image is
/// flattened row-major.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = read_all(ip)?;
    let magic = be_u32(&images, 0, ip)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(idx_err(ip, format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let n = be_u32(&images, 4, ip)? as usize;
    let rows = be_u32(&images, 8, ip)? as usize;
    let cols = be_u32(&images, 12, ip)? as usize;
    let dim = rows * cols;
    if dim == 0 {
        return Err(idx_err(ip, "zero-sized images"));
    }
    let body = &images[16..];
    if body.len() < n * dim {
        return Err(idx_err(ip, format!("truncated: expected {} pixel bytes, found {}", n * dim, body.len())));
    }

    let labels = read_all(lp)?;
    let magic = be_u32(&labels, 0, lp)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(idx_err(lp, format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let n_labels = be_u32(&labels, 4, lp)? as usize;
    if n_labels != n {
        return Err(idx_err(lp, format!("{n_labels} labels for {n} images")));
    }
    let label_body = &labels[8..];
    if label_body.len() < n {
        return Err(idx_err(lp, format!("truncated: expected {n} labels, found {}", label_body.len())));
    }

    let values = body[..n * dim].iter().map(|&b| f64::from(b) / 255.0).collect();
    let name = ip.file_stem().and_then(|s| s.to_str()).unwrap_or("idx").to_string();
    LabeledDataset::new(name, DataMatrix::new(n, dim, values)?, label_body[..n].iter().map(|&b| b as usize).collect())
}

/// Writes `u8` images and labels in IDX format.
pub fn write_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    pixels: &[u8],
    labels: &[u8],
) -> Result<()> {
    let n = labels.len();
    if pixels.len() != n * rows * cols {
        return Err(Error::ShapeMismatch { rows: n, cols: rows * cols, len: pixels.len() });
    }
    let mut w = BufWriter::new(File::create(images_path)?);
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        w.write_all(&v.to_be_bytes())?;
    }
    w.write_all(pixels)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(labels_path)?);
    for v in [IDX_LABELS_MAGIC, n as u32] {
        w.write_all(&v.to_be_bytes())?;
    }
    w.write_all(labels)?;
    w.flush()?;
    Ok(())
}

/// On-disk layout of a pre-partitioned dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionedFile {
    pub name: String,
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub clients: Vec<Vec<usize>>,
}

impl PartitionedFile {
    pub fn from_parts(data: &LabeledDataset, partition: &Partition) -> Self {
        Self {
            name: data.name.clone(),
            dim: data.dim(),
            points: data.points.to_rows(),
            labels: data.labels.clone(),
            clients: partition.clients().to_vec(),
        }
    }

    pub fn into_parts(self) -> Result<(LabeledDataset, Partition)> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dim must be >= 1".into()));
        }
        let points = DataMatrix::from_rows_with_dim(&self.points, self.dim)?;
        let data = LabeledDataset::new(self.name, points, self.labels)?;
        let partition = Partition::new(self.clients, data.len())?;
        Ok((data, partition))
    }
}

pub fn load_partitioned(path: impl AsRef<Path>) -> Result<(LabeledDataset, Partition)> {
    let file: PartitionedFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    file.into_parts()
}

pub fn save_partitioned(path: impl AsRef<Path>, data: &LabeledDataset, partition: &Partition) -> Result<()> {
    partition.validate(data.len())?;
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &PartitionedFile::from_parts(data, partition))?;
    w.flush()?;
    Ok(())
}
