//! Dataset generation and ingestion, quantity-based Dirichlet partitioning,
//! validation holdout, and the size-based ground truth.
//!
//! Partitioning is quantity-based: a Dirichlet draw fixes per-client shard
//! *sizes*, and records are assigned uniformly at random. Labels are not
//! skewed per client, which keeps size-proportional ground truth meaningful.

use std::io::Read;
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Maximum number of Dirichlet redraws before giving up on `min_shard`.
const MAX_REDRAWS: usize = 100;

/// Labeled feature matrix: `len × input_dim` reals plus one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    input_dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        input_dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyInput("dataset"));
        }
        if features.len() != labels.len() * input_dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * input_dim,
                got: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidParameter(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            input_dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::EmptyInput("dataset selection"));
        }
        let mut features = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.label(i));
        }
        Dataset::new(features, labels, self.input_dim, self.num_classes)
    }
}

/// How a training set is split across clients.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub num_clients: usize,
    pub alpha: f64,
    pub seed: u64,
    pub min_shard: usize,
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients < 2 {
            return Err(Error::InvalidParameter(format!(
                "partition needs at least 2 clients, got {}",
                self.num_clients
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if self.min_shard < 1 {
            return Err(Error::InvalidParameter("min_shard must be >= 1".into()));
        }
        Ok(())
    }
}

/// One client's shard. `n_i` is the size the client reports to the server;
/// in this simulator it always equals the true record count.
#[derive(Debug, Clone)]
pub struct ClientDataset {
    pub client_id: usize,
    pub data: Dataset,
    pub n_i: usize,
}

/// Size-proportional contribution shares, the evaluation reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    shares: Vec<f64>,
}

impl GroundTruth {
    pub fn shares(&self) -> &[f64] {
        &self.shares
    }
}

/// Gaussian class blobs: one mean per class drawn uniformly from
/// [-2, 2]^input_dim, then `per_class_count` points per class at
/// mean + N(0, noise_sigma^2 I). Rows are grouped by class.
pub fn gen_synthetic(
    num_classes: usize,
    input_dim: usize,
    per_class_count: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes == 0 || input_dim == 0 || per_class_count == 0 {
        return Err(Error::InvalidParameter(
            "synthetic dataset needs positive counts".into(),
        ));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise_sigma must be finite and non-negative, got {noise_sigma}"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut means = vec![0.0; num_classes * input_dim];
    for m in means.iter_mut() {
        *m = rng.uniform(-2.0, 2.0);
    }
    let n = num_classes * per_class_count;
    let mut features = Vec::with_capacity(n * input_dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..num_classes {
        let mean = &means[c * input_dim..(c + 1) * input_dim];
        for _ in 0..per_class_count {
            for &m in mean {
                features.push(m + noise_sigma * rng.normal());
            }
            labels.push(c);
        }
    }
    Dataset::new(features, labels, input_dim, num_classes)
}

fn read_be_u32(reader: &mut impl Read, what: &str) -> Result<u32> {
    reader
        .read_u32::<BigEndian>()
        .map_err(|_| Error::IdxFormat(format!("truncated file while reading {what}")))
}

/// Reads an IDX image/label file pair. Pixels are scaled to [0,1] by /255;
/// the class count is the largest label plus one.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut img = std::io::BufReader::new(
        std::fs::File::open(images_path).map_err(|e| Error::io(images_path, e))?,
    );
    let magic = read_be_u32(&mut img, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxFormat(format!(
            "bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let count = read_be_u32(&mut img, "image count")? as usize;
    let rows = read_be_u32(&mut img, "row count")? as usize;
    let cols = read_be_u32(&mut img, "column count")? as usize;
    let input_dim = rows * cols;
    let mut pixels = vec![0u8; count * input_dim];
    img.read_exact(&mut pixels)
        .map_err(|_| Error::IdxFormat("truncated image payload".into()))?;

    let mut lab = std::io::BufReader::new(
        std::fs::File::open(labels_path).map_err(|e| Error::io(labels_path, e))?,
    );
    let magic = read_be_u32(&mut lab, "label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::IdxFormat(format!(
            "bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let label_count = read_be_u32(&mut lab, "label count")? as usize;
    if label_count != count {
        return Err(Error::IdxFormat(format!(
            "{count} images but {label_count} labels"
        )));
    }
    let mut raw_labels = vec![0u8; count];
    lab.read_exact(&mut raw_labels)
        .map_err(|_| Error::IdxFormat("truncated label payload".into()))?;

    let features: Vec<f64> = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&y| y as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    Dataset::new(features, labels, input_dim, num_classes)
}

/// Largest-remainder rounding of `proportions * n_total` to integer sizes
/// summing exactly to `n_total`. Ties go to the lowest index.
pub fn sizes_from_proportions(proportions: &[f64], n_total: usize) -> Vec<usize> {
    let targets: Vec<f64> = proportions.iter().map(|p| p * n_total as f64).collect();
    let mut sizes: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    // Descending fractional remainder, index ascending on ties.
    order.sort_by(|&a, &b| {
        let ra = targets[a] - targets[a].floor();
        let rb = targets[b] - targets[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n_total - assigned) {
        sizes[i] += 1;
    }
    sizes
}

/// Shard sizes and the record indices assigned to each client, without
/// materializing the per-client datasets.
pub fn dirichlet_partition_indices(
    n_records: usize,
    spec: &PartitionSpec,
) -> Result<Vec<Vec<usize>>> {
    spec.validate()?;
    let needed = spec.num_clients * spec.min_shard;
    if n_records < needed {
        return Err(Error::Capacity {
            needed,
            have: n_records,
        });
    }
    let mut chosen: Option<(Vec<usize>, SplitMix64)> = None;
    for attempt in 0..=MAX_REDRAWS {
        let mut rng = SplitMix64::new(crate::rng::derive_seed(spec.seed, attempt as u64));
        let gammas: Vec<f64> = (0..spec.num_clients)
            .map(|_| rng.gamma(spec.alpha))
            .collect();
        let total: f64 = gammas.iter().sum();
        let proportions: Vec<f64> = gammas.iter().map(|g| g / total).collect();
        let sizes = sizes_from_proportions(&proportions, n_records);
        if sizes.iter().all(|&s| s >= spec.min_shard) {
            chosen = Some((sizes, rng));
            break;
        }
    }
    let (sizes, mut rng) = chosen.ok_or(Error::RedrawBudget(MAX_REDRAWS))?;
    let mut indices: Vec<usize> = (0..n_records).collect();
    rng.shuffle(&mut indices);
    let mut shards = Vec::with_capacity(spec.num_clients);
    let mut start = 0;
    for &s in &sizes {
        shards.push(indices[start..start + s].to_vec());
        start += s;
    }
    Ok(shards)
}

/// Quantity-based non-IID split: Dirichlet(alpha) proportions fix shard
/// sizes, a seeded shuffle assigns records. Redraws with derived sub-seeds
/// until every shard reaches `min_shard`, within a fixed budget.
pub fn dirichlet_partition(ds: &Dataset, spec: &PartitionSpec) -> Result<Vec<ClientDataset>> {
    let shards = dirichlet_partition_indices(ds.len(), spec)?;
    shards
        .iter()
        .enumerate()
        .map(|(client_id, idx)| {
            let data = ds.select(idx)?;
            let n_i = data.len();
            Ok(ClientDataset {
                client_id,
                data,
                n_i,
            })
        })
        .collect()
}

/// Seeded shuffle, then the first `ceil(frac * N)` records become the
/// validation set and the rest the training set.
pub fn holdout_split(ds: &Dataset, frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "holdout fraction must be in (0,1), got {frac}"
        )));
    }
    let n = ds.len();
    let n_val = (frac * n as f64).ceil() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::EmptyInput("holdout split side"));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = SplitMix64::new(seed);
    rng.shuffle(&mut indices);
    let validation = ds.select(&indices[..n_val])?;
    let train = ds.select(&indices[n_val..])?;
    Ok((train, validation))
}

/// g_i = n_i / sum_j n_j.
pub fn ground_truth_sizes(parts: &[ClientDataset]) -> Result<GroundTruth> {
    if parts.is_empty() {
        return Err(Error::EmptyInput("ground_truth_sizes"));
    }
    let total: usize = parts.iter().map(|p| p.n_i).sum();
    let shares = parts
        .iter()
        .map(|p| p.n_i as f64 / total as f64)
        .collect();
    Ok(GroundTruth { shares })
}

#[cfg(test)]
mod tests {
    use super::*;
    use byteorder::WriteBytesExt;
    use std::io::Write;

    fn spec(num_clients: usize, alpha: f64, seed: u64, min_shard: usize) -> PartitionSpec {
        PartitionSpec {
            num_clients,
            alpha,
            seed,
            min_shard,
        }
    }

    #[test]
    fn synthetic_counts_and_balance() {
        let ds = gen_synthetic(4, 3, 250, 1.0, 11).unwrap();
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.input_dim(), 3);
        for c in 0..4 {
            assert_eq!(ds.labels.iter().filter(|&&y| y == c).count(), 250);
        }
    }

    #[test]
    fn synthetic_zero_noise_collapses_to_class_means() {
        let ds = gen_synthetic(3, 2, 5, 0.0, 7).unwrap();
        for c in 0..3 {
            let first = ds.row(c * 5).to_vec();
            for j in 0..5 {
                assert_eq!(ds.row(c * 5 + j), first.as_slice());
                assert_eq!(ds.label(c * 5 + j), c);
            }
            // Means come from uniform[-2,2].
            assert!(first.iter().all(|&m| (-2.0..2.0).contains(&m)));
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = gen_synthetic(4, 6, 20, 0.8, 99).unwrap();
        let b = gen_synthetic(4, 6, 20, 0.8, 99).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic(4, 6, 20, 0.8, 100).unwrap();
        assert_ne!(a, c);
    }

    fn write_idx_fixture(
        dir: &std::path::Path,
        magic_img: u32,
        magic_lab: u32,
        images: &[Vec<u8>],
        labels: &[u8],
        rows: u32,
        cols: u32,
    ) -> (std::path::PathBuf, std::path::PathBuf) {
        let img_path = dir.join("images.idx");
        let lab_path = dir.join("labels.idx");
        let mut img = Vec::new();
        img.write_u32::<BigEndian>(magic_img).unwrap();
        img.write_u32::<BigEndian>(images.len() as u32).unwrap();
        img.write_u32::<BigEndian>(rows).unwrap();
        img.write_u32::<BigEndian>(cols).unwrap();
        for im in images {
            img.write_all(im).unwrap();
        }
        std::fs::write(&img_path, img).unwrap();
        let mut lab = Vec::new();
        lab.write_u32::<BigEndian>(magic_lab).unwrap();
        lab.write_u32::<BigEndian>(labels.len() as u32).unwrap();
        lab.write_all(labels).unwrap();
        std::fs::write(&lab_path, lab).unwrap();
        (img_path, lab_path)
    }

    #[test]
    fn idx_round_trips_handcrafted_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let zeros = vec![0u8; 28 * 28];
        let ones = vec![255u8; 28 * 28];
        let (img, lab) = write_idx_fixture(
            dir.path(),
            IDX_IMAGES_MAGIC,
            IDX_LABELS_MAGIC,
            &[zeros, ones],
            &[0, 1],
            28,
            28,
        );
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.input_dim(), 28 * 28);
        assert_eq!(ds.num_classes(), 2);
        assert!(ds.row(0).iter().all(|&p| p == 0.0));
        assert!(ds.row(1).iter().all(|&p| p == 1.0));
        assert_eq!(ds.label(0), 0);
        assert_eq!(ds.label(1), 1);
    }

    #[test]
    fn idx_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = write_idx_fixture(
            dir.path(),
            0xDEAD_BEEF,
            IDX_LABELS_MAGIC,
            &[vec![0u8; 4]],
            &[0],
            2,
            2,
        );
        let err = load_idx(&img, &lab).unwrap_err();
        assert!(matches!(err, Error::IdxFormat(_)), "got {err:?}");
    }

    #[test]
    fn idx_rejects_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = write_idx_fixture(
            dir.path(),
            IDX_IMAGES_MAGIC,
            IDX_LABELS_MAGIC,
            &[vec![0u8; 4], vec![1u8; 4]],
            &[0],
            2,
            2,
        );
        let err = load_idx(&img, &lab).unwrap_err();
        assert!(matches!(err, Error::IdxFormat(_)), "got {err:?}");
    }

    #[test]
    fn idx_rejects_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("short.idx");
        let mut img = Vec::new();
        img.write_u32::<BigEndian>(IDX_IMAGES_MAGIC).unwrap();
        img.write_u32::<BigEndian>(2).unwrap();
        img.write_u32::<BigEndian>(2).unwrap();
        img.write_u32::<BigEndian>(2).unwrap();
        img.write_all(&[0u8; 3]).unwrap(); // needs 8 bytes
        std::fs::write(&img_path, img).unwrap();
        let lab_path = dir.path().join("labels.idx");
        let mut lab = Vec::new();
        lab.write_u32::<BigEndian>(IDX_LABELS_MAGIC).unwrap();
        lab.write_u32::<BigEndian>(2).unwrap();
        lab.write_all(&[0, 1]).unwrap();
        std::fs::write(&lab_path, lab).unwrap();
        assert!(load_idx(&img_path, &lab_path).is_err());
    }

    #[test]
    fn largest_remainder_is_exact_on_clean_proportions() {
        assert_eq!(sizes_from_proportions(&[0.25, 0.75], 100), vec![25, 75]);
        assert_eq!(sizes_from_proportions(&[0.5, 0.5], 101), vec![51, 50]);
        assert_eq!(
            sizes_from_proportions(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 100),
            vec![34, 33, 33]
        );
    }

    #[test]
    fn high_alpha_concentrates_near_uniform() {
        let ds = gen_synthetic(4, 2, 250, 0.5, 3).unwrap();
        for seed in 0..10 {
            let parts = dirichlet_partition(&ds, &spec(4, 1e9, seed, 1)).unwrap();
            for p in &parts {
                assert!(
                    (248..=252).contains(&p.n_i),
                    "seed {seed}: shard size {} outside [248,252]",
                    p.n_i
                );
            }
        }
    }

    #[test]
    fn partition_conserves_records() {
        let ds = gen_synthetic(4, 3, 60, 1.0, 5).unwrap();
        for alpha in [1.0, 10.0, 100.0] {
            for seed in 0..5 {
                let parts = dirichlet_partition(&ds, &spec(5, alpha, seed, 1)).unwrap();
                let total: usize = parts.iter().map(|p| p.n_i).sum();
                assert_eq!(total, ds.len());
                // Disjointness + union: the multiset of rows must match.
                let mut got: Vec<(Vec<u64>, usize)> = parts
                    .iter()
                    .flat_map(|p| {
                        (0..p.data.len()).map(|i| {
                            (
                                p.data.row(i).iter().map(|v| v.to_bits()).collect(),
                                p.data.label(i),
                            )
                        })
                    })
                    .collect();
                let mut want: Vec<(Vec<u64>, usize)> = (0..ds.len())
                    .map(|i| (ds.row(i).iter().map(|v| v.to_bits()).collect(), ds.label(i)))
                    .collect();
                got.sort();
                want.sort();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn partition_indices_are_disjoint() {
        let shards = dirichlet_partition_indices(500, &spec(5, 1.0, 77, 1)).unwrap();
        let mut all: Vec<usize> = shards.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..500).collect::<Vec<_>>());
    }

    #[test]
    fn low_alpha_spreads_more_than_high_alpha() {
        let gap = |alpha: f64| -> f64 {
            let mut total = 0.0;
            for seed in 0..50 {
                let shards = dirichlet_partition_indices(1000, &spec(5, alpha, seed, 1)).unwrap();
                let sizes: Vec<usize> = shards.iter().map(|s| s.len()).collect();
                let max = *sizes.iter().max().unwrap();
                let min = *sizes.iter().min().unwrap();
                total += (max - min) as f64;
            }
            total / 50.0
        };
        assert!(gap(1.0) > gap(100.0));
    }

    #[test]
    fn partition_rejects_insufficient_capacity() {
        let err = dirichlet_partition_indices(9, &spec(5, 1.0, 0, 2)).unwrap_err();
        assert!(matches!(err, Error::Capacity { needed: 10, have: 9 }));
    }

    #[test]
    fn partition_exhausts_redraw_budget_on_impossible_min_shard() {
        // Two clients must split 10 records exactly 5/5 while alpha=1e-4
        // pushes nearly all mass to one client: no attempt succeeds.
        let err = dirichlet_partition_indices(10, &spec(2, 1e-4, 3, 5)).unwrap_err();
        assert!(matches!(err, Error::RedrawBudget(_)), "got {err:?}");
    }

    #[test]
    fn partition_is_deterministic() {
        let a = dirichlet_partition_indices(300, &spec(4, 1.0, 42, 1)).unwrap();
        let b = dirichlet_partition_indices(300, &spec(4, 1.0, 42, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn holdout_sizes_and_determinism() {
        let ds = gen_synthetic(2, 2, 5, 1.0, 8).unwrap();
        let (train, val) = holdout_split(&ds, 0.2, 9).unwrap();
        assert_eq!(val.len(), 2);
        assert_eq!(train.len(), 8);
        let (train2, val2) = holdout_split(&ds, 0.2, 9).unwrap();
        assert_eq!(train, train2);
        assert_eq!(val, val2);
    }

    #[test]
    fn holdout_conserves_multiset() {
        let ds = gen_synthetic(3, 2, 20, 1.0, 13).unwrap();
        let (train, val) = holdout_split(&ds, 0.3, 1).unwrap();
        let rows = |d: &Dataset| -> Vec<(Vec<u64>, usize)> {
            (0..d.len())
                .map(|i| (d.row(i).iter().map(|v| v.to_bits()).collect(), d.label(i)))
                .collect()
        };
        let mut got = rows(&train);
        got.extend(rows(&val));
        got.sort();
        let mut want = rows(&ds);
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn holdout_rejects_degenerate_fractions() {
        let ds = gen_synthetic(2, 2, 2, 1.0, 8).unwrap();
        assert!(holdout_split(&ds, 0.0, 1).is_err());
        assert!(holdout_split(&ds, 1.0, 1).is_err());
        // N=2, frac=0.9 -> ceil(1.8)=2 validation rows, empty train.
        let tiny = gen_synthetic(2, 2, 1, 1.0, 8).unwrap();
        assert!(holdout_split(&tiny, 0.9, 1).is_err());
    }

    fn fake_part(client_id: usize, n_i: usize) -> ClientDataset {
        let ds = gen_synthetic(2, 2, n_i.div_ceil(2), 1.0, client_id as u64).unwrap();
        let data = ds.select(&(0..n_i).collect::<Vec<_>>()).unwrap();
        ClientDataset {
            client_id,
            n_i: data.len(),
            data,
        }
    }

    #[test]
    fn ground_truth_matches_sizes() {
        let gt = ground_truth_sizes(&[fake_part(0, 25), fake_part(1, 75)]).unwrap();
        assert_eq!(gt.shares(), &[0.25, 0.75]);

        let equal: Vec<ClientDataset> = (0..5).map(|i| fake_part(i, 40)).collect();
        let gt = ground_truth_sizes(&equal).unwrap();
        assert_eq!(gt.shares(), &[0.2; 5]);

        let gt = ground_truth_sizes(&[fake_part(0, 1), fake_part(1, 1), fake_part(2, 2)]).unwrap();
        assert_eq!(gt.shares(), &[0.25, 0.25, 0.5]);
    }

    #[test]
    fn ground_truth_sums_to_one() {
        let mut rng = SplitMix64::new(17);
        for _ in 0..20 {
            let parts: Vec<ClientDataset> = (0..6)
                .map(|i| fake_part(i, 1 + rng.next_below(50) as usize))
                .collect();
            let gt = ground_truth_sizes(&parts).unwrap();
            let sum: f64 = gt.shares().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(gt.shares().iter().all(|&g| g > 0.0));
        }
    }
}
