//! Product codebooks: one k-means sub-codebook per contiguous subspace.

use log::warn;
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_fit, nearest_centroid, KMeansResult, DEFAULT_MAX_ITERS, DEFAULT_REL_TOL};
use crate::embed::{split_subvectors, sub_dim, EmbeddingMatrix};
use crate::error::{check_len, Error, Result};

/// `k × sub_dim` centroids for a single subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubCodebook {
    index: usize,
    centroids: EmbeddingMatrix,
}

impl SubCodebook {
    pub fn new(index: usize, centroids: EmbeddingMatrix) -> Result<Self> {
        if centroids.rows() == 0 {
            return Err(Error::BadConfig("a sub-codebook needs at least one centroid".into()));
        }
        Ok(Self { index, centroids })
    }

    /// 0-based subspace index.
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn sub_dim(&self) -> usize {
        self.centroids.dim()
    }

    pub fn centroids(&self) -> &EmbeddingMatrix {
        &self.centroids
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        self.centroids.row(c)
    }

    /// Nearest centroid to `sub`, lowest index on ties.
    pub fn nearest(&self, sub: &[f64]) -> (usize, f64) {
        nearest_centroid(self.centroids.data(), self.sub_dim(), sub)
    }
}

/// Product quantization code: one centroid index per subspace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PQCode(pub Vec<u32>);

impl PQCode {
    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// M sub-codebooks whose Cartesian product defines `K^M` anchor points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductCodebook {
    m: usize,
    k: usize,
    dim: usize,
    subs: Vec<SubCodebook>,
}

impl ProductCodebook {
    /// Assembles a codebook, checking that the sub-codebooks cover `0..m`
    /// in order and share `k` and `sub_dim`.
    pub fn new(subs: Vec<SubCodebook>) -> Result<Self> {
        let first = subs.first().ok_or(Error::EmptyInput)?;
        let (k, sd) = (first.k(), first.sub_dim());
        for (j, s) in subs.iter().enumerate() {
            if s.index != j {
                return Err(Error::ShapeMismatch(format!("sub-codebook at position {j} has index {}", s.index)));
            }
            if s.k() != k || s.sub_dim() != sd {
                return Err(Error::ShapeMismatch(format!(
                    "sub-codebook {j} is {}x{}, expected {k}x{sd}",
                    s.k(),
                    s.sub_dim()
                )));
            }
        }
        Ok(Self { m: subs.len(), k, dim: subs.len() * sd, subs })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sub_dim(&self) -> usize {
        self.dim / self.m
    }

    pub fn subs(&self) -> &[SubCodebook] {
        &self.subs
    }

    pub fn sub(&self, j: usize) -> &SubCodebook {
        &self.subs[j]
    }

    /// Number of implicit anchor points, `K^M`. Never materialized.
    pub fn anchor_count(&self) -> BigUint {
        BigUint::from(self.k).pow(self.m as u32)
    }

    pub fn encode(&self, v: &[f64]) -> Result<PQCode> {
        check_len(self.dim, v.len())?;
        let parts = split_subvectors(v, self.m)?;
        Ok(PQCode(self.subs.iter().zip(parts).map(|(s, u)| s.nearest(u).0 as u32).collect()))
    }

    pub fn encode_all(&self, vectors: &EmbeddingMatrix) -> Result<Vec<PQCode>> {
        vectors.iter_rows().map(|v| self.encode(v)).collect()
    }

    fn check_code(&self, code: &PQCode) -> Result<()> {
        check_len(self.m, code.len())?;
        if let Some((j, &c)) = code.0.iter().enumerate().find(|(_, &c)| c as usize >= self.k) {
            return Err(Error::ShapeMismatch(format!("code entry {j} = {c} >= K = {}", self.k)));
        }
        Ok(())
    }

    /// Concatenation of the centroids selected by `code`.
    pub fn reconstruct(&self, code: &PQCode) -> Result<Vec<f64>> {
        self.check_code(code)?;
        let mut out = Vec::with_capacity(self.dim);
        for (s, &c) in self.subs.iter().zip(&code.0) {
            out.extend_from_slice(s.centroid(c as usize));
        }
        Ok(out)
    }

    /// Rounds every centroid to 32-bit precision, matching what the file format stores.
    pub fn to_f32_precision(&self) -> Self {
        let subs = self
            .subs
            .iter()
            .map(|s| {
                let c = &s.centroids;
                let data = c.data().iter().map(|&x| x as f32 as f64).collect();
                SubCodebook {
                    index: s.index,
                    centroids: EmbeddingMatrix::new(c.rows(), c.dim(), data).expect("shape unchanged"),
                }
            })
            .collect();
        Self { subs, ..*self }
    }
}

/// Options for [`train_product_codebook_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqTrainConfig {
    pub m: usize,
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub rel_tol: f64,
    /// L2-normalize features before clustering. Off by default.
    pub normalize: bool,
}

impl PqTrainConfig {
    pub fn new(m: usize, k: usize, seed: u64) -> Self {
        Self { m, k, seed, max_iters: DEFAULT_MAX_ITERS, rel_tol: DEFAULT_REL_TOL, normalize: false }
    }
}

/// A trained codebook plus the per-subspace k-means diagnostics.
#[derive(Debug, Clone)]
pub struct TrainedCodebook {
    pub codebook: ProductCodebook,
    pub fits: Vec<KMeansResult>,
}

/// Trains one sub-codebook per subspace. Subspace `j` (0-based) is seeded with `seed + j`.
pub fn train_product_codebook_with(features: &EmbeddingMatrix, cfg: &PqTrainConfig) -> Result<TrainedCodebook> {
    if features.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    sub_dim(features.dim(), cfg.m)?;
    if cfg.k == 0 {
        return Err(Error::BadConfig("K must be at least 1".into()));
    }
    if features.rows() < cfg.k {
        warn!("training {} centroids per subspace on only {} vectors", cfg.k, features.rows());
    }
    let owned;
    let features = if cfg.normalize {
        owned = features.normalized()?;
        &owned
    } else {
        features
    };
    let mut subs = Vec::with_capacity(cfg.m);
    let mut fits = Vec::with_capacity(cfg.m);
    for j in 0..cfg.m {
        let slice = features.subspace(j, cfg.m)?.to_matrix();
        let fit = kmeans_fit(&slice, cfg.k, cfg.seed.wrapping_add(j as u64), cfg.max_iters, cfg.rel_tol)?;
        subs.push(SubCodebook::new(j, fit.centroids.clone())?);
        fits.push(fit);
    }
    Ok(TrainedCodebook { codebook: ProductCodebook::new(subs)?, fits })
}

pub fn train_product_codebook(features: &EmbeddingMatrix, m: usize, k: usize, seed: u64) -> Result<ProductCodebook> {
    Ok(train_product_codebook_with(features, &PqTrainConfig::new(m, k, seed))?.codebook)
}
