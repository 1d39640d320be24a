//! Synthetic class-mixture benchmark and the frozen gallery encoder that stands
//! in for a large pretrained model.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embed::{l2_normalize, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::formats;
use crate::trainer::{Activation, QueryEncoder};

/// Input scale of the oracle's tanh layer. Larger values bend the map more but
/// discard class structure; at 1.5 the output stays within 3e-4 (mean `1 - cos`)
/// of the oracle's linear part on the standard benchmark.
pub const ORACLE_GAIN: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    /// Data for anchor (codebook) training.
    Anchor,
    /// Data for query-model training.
    Train,
    Query,
    Gallery,
}

impl SplitTag {
    pub const ALL: [SplitTag; 4] = [SplitTag::Anchor, SplitTag::Train, SplitTag::Query, SplitTag::Gallery];

    pub fn name(self) -> &'static str {
        match self {
            SplitTag::Anchor => "anchor",
            SplitTag::Train => "train",
            SplitTag::Query => "query",
            SplitTag::Gallery => "gallery",
        }
    }
}

/// Gallery embedding dimension of the standard benchmark.
pub const STANDARD_EMBED_DIM: usize = 64;
/// Hidden width of the standard benchmark's query encoder.
pub const STANDARD_QUERY_HIDDEN: usize = 64;
/// Anchor subspace count used on the standard benchmark unless an ablation says otherwise.
pub const STANDARD_SUBSPACES: usize = 8;

/// Defaults are the standard benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub num_classes: usize,
    /// Query plus gallery samples per class; one of them becomes the query.
    pub per_class: usize,
    pub input_dim: usize,
    pub cluster_std: f64,
    pub anchor_size: usize,
    pub train_size: usize,
    pub seed: u64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            num_classes: 32,
            per_class: 24,
            input_dim: 32,
            cluster_std: 0.15,
            anchor_size: 4096,
            train_size: 4096,
            seed: 0,
        }
    }
}

impl MixtureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::BadConfig(format!("num_classes must be >= 2, got {}", self.num_classes)));
        }
        if self.per_class < 4 {
            return Err(Error::BadConfig(format!("per_class must be >= 4, got {}", self.per_class)));
        }
        if self.input_dim == 0 {
            return Err(Error::BadConfig("input_dim must be >= 1".into()));
        }
        if !(self.cluster_std >= 0.0) {
            return Err(Error::BadConfig("cluster_std must be >= 0".into()));
        }
        Ok(())
    }
}

/// Raw inputs of one split with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub inputs: EmbeddingMatrix,
    pub labels: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub inputs: EmbeddingMatrix,
    pub labels: Vec<u32>,
    pub splits: Vec<SplitTag>,
    pub class_means: EmbeddingMatrix,
}

impl SyntheticDataset {
    pub fn indices(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.splits.len()).filter(|&i| self.splits[i] == tag).collect()
    }

    pub fn split(&self, tag: SplitTag) -> Split {
        let idx = self.indices(tag);
        Split { inputs: self.inputs.select_rows(&idx), labels: idx.iter().map(|&i| self.labels[i]).collect() }
    }
}

fn gaussian_vec(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn push_sample(mean: &[f64], std: f64, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
    out.extend(mean.iter().map(|&m| {
        let z: f64 = StandardNormal.sample(rng);
        m + std * z
    }));
}

/// Class-structured Gaussian mixture.
///
/// Class means are uniform on the unit sphere. Rows come class by class for the
/// query and gallery splits (the first sample of each class is its query),
/// followed by `anchor_size` anchor rows and `train_size` training rows drawn
/// from independent streams. Stream seeds: means `seed`, query/gallery `seed + 1`,
/// anchor `seed + 2`, train `seed + 3`.
pub fn gen_mixture(cfg: &MixtureConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let dim = cfg.input_dim;
    let mut mean_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut means = Vec::with_capacity(cfg.num_classes * dim);
    for _ in 0..cfg.num_classes {
        let mut v = l2_normalize(&gaussian_vec(dim, &mut mean_rng));
        while v.degenerate {
            v = l2_normalize(&gaussian_vec(dim, &mut mean_rng));
        }
        means.extend(v.vector);
    }
    let class_means = EmbeddingMatrix::new(cfg.num_classes, dim, means)?;

    let total = cfg.num_classes * cfg.per_class + cfg.anchor_size + cfg.train_size;
    let mut data = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    let mut splits = Vec::with_capacity(total);

    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    for c in 0..cfg.num_classes {
        for s in 0..cfg.per_class {
            push_sample(class_means.row(c), cfg.cluster_std, &mut eval_rng, &mut data);
            labels.push(c as u32);
            splits.push(if s == 0 { SplitTag::Query } else { SplitTag::Gallery });
        }
    }
    for (tag, size, offset) in [(SplitTag::Anchor, cfg.anchor_size, 2), (SplitTag::Train, cfg.train_size, 3)] {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(offset));
        for _ in 0..size {
            let c = rng.random_range(0..cfg.num_classes);
            push_sample(class_means.row(c), cfg.cluster_std, &mut rng, &mut data);
            labels.push(c as u32);
            splits.push(tag);
        }
    }
    Ok(SyntheticDataset { inputs: EmbeddingMatrix::new(total, dim, data)?, labels, splits, class_means })
}

/// `rows × cols` row-major matrix with orthonormal columns (or rows, when `rows < cols`).
fn orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (n, len) = if rows >= cols { (cols, rows) } else { (rows, cols) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let d = crate::embed::dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let l = l2_normalize(&v);
        if !l.degenerate && crate::embed::norm(&v) > 1e-6 {
            basis.push(l.vector);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = if rows >= cols { basis[c][r] } else { basis[r][c] };
        }
    }
    out
}

/// Frozen two-layer tanh network standing in for the gallery model:
/// `x -> R · tanh(g · W x) / g` with hidden width `2 * input_dim`, where `W` has
/// orthonormal columns, `R` is a random semi-orthogonal `output_dim × input_dim`
/// map, `g` is [`ORACLE_GAIN`] and biases are zero. Output rows are L2-normalized.
#[derive(Debug, Clone)]
pub struct GalleryOracle {
    net: QueryEncoder,
    checksum: u64,
}

impl GalleryOracle {
    pub fn new(input_dim: usize, output_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::BadDimension(format!("oracle dims {input_dim} -> {output_dim}")));
        }
        let hidden = 2 * input_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = orthonormal(hidden, input_dim, &mut rng);
        let r = orthonormal(output_dim, input_dim, &mut rng);
        let mut params = Vec::with_capacity(hidden * input_dim + hidden + output_dim * hidden + output_dim);
        params.extend(w.iter().map(|v| v * ORACLE_GAIN));
        params.extend(std::iter::repeat_n(0.0, hidden));
        for o in 0..output_dim {
            for h in 0..hidden {
                let s: f64 = (0..input_dim).map(|j| r[o * input_dim + j] * w[h * input_dim + j]).sum();
                params.push(s / ORACLE_GAIN);
            }
        }
        params.extend(std::iter::repeat_n(0.0, output_dim));
        let net = QueryEncoder::from_params(vec![input_dim, hidden, output_dim], Activation::Tanh, params)?;
        let checksum = net.checksum();
        Ok(Self { net, checksum })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    /// The underlying network, for architecture comparisons.
    pub fn network(&self) -> &QueryEncoder {
        &self.net
    }

    pub fn checksum(&self) -> u64 {
        self.checksum
    }

    /// True while the parameters still hash to the value recorded at construction.
    pub fn is_intact(&self) -> bool {
        self.net.checksum() == self.checksum
    }

    pub fn encode(&self, raw: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        self.net.embed_matrix(raw)
    }
}

pub fn oracle_encode(oracle: &GalleryOracle, raw: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    oracle.encode(raw)
}

pub fn export_embeddings(emb: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    formats::write_embeddings(path, emb)
}

pub fn import_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    formats::read_embeddings(path)
}

/// Generated dataset plus cached gallery-oracle embeddings for every split.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub config: MixtureConfig,
    pub oracle: GalleryOracle,
    pub anchor: Split,
    pub anchor_gallery: EmbeddingMatrix,
    pub train: Split,
    pub train_gallery: EmbeddingMatrix,
    pub query: Split,
    pub query_gallery: EmbeddingMatrix,
    pub gallery: Split,
    pub gallery_gallery: EmbeddingMatrix,
}

impl Benchmark {
    /// Generates the mixture and runs the oracle (seeded with `oracle_seed`) over every split.
    pub fn generate(cfg: &MixtureConfig, embed_dim: usize, oracle_seed: u64) -> Result<Self> {
        let ds = gen_mixture(cfg)?;
        let oracle = GalleryOracle::new(cfg.input_dim, embed_dim, oracle_seed)?;
        let anchor = ds.split(SplitTag::Anchor);
        let train = ds.split(SplitTag::Train);
        let query = ds.split(SplitTag::Query);
        let gallery = ds.split(SplitTag::Gallery);
        Ok(Self {
            anchor_gallery: oracle.encode(&anchor.inputs)?,
            train_gallery: oracle.encode(&train.inputs)?,
            query_gallery: oracle.encode(&query.inputs)?,
            gallery_gallery: oracle.encode(&gallery.inputs)?,
            config: cfg.clone(),
            oracle,
            anchor,
            train,
            query,
            gallery,
        })
    }
}
