//! Structure-similarity preservation loss.
//!
//! A vector is compared subspace by subspace against every centroid of a
//! [`ProductCodebook`], giving an `M × K` similarity matrix. Each row is turned
//! into a distribution with a temperature softmax, and the query distribution
//! is pulled towards the gallery one with a KL divergence summed over
//! subspaces. The gradient with respect to the query embedding is exact.

use serde::{Deserialize, Serialize};

use crate::embed::{dot, l2_normalize, norm, split_subvectors, squared_distance, NORM_EPS};
use crate::error::{check_len, Error, Result};
use crate::quantizer::ProductCodebook;

pub const DEFAULT_TAU_G: f64 = 0.1;
pub const DEFAULT_TAU_Q: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    #[default]
    Cosine,
    /// Negative Euclidean distance.
    NegEuclidean,
}

impl SimilarityKind {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            SimilarityKind::Cosine => crate::embed::cosine_unchecked(a, b),
            SimilarityKind::NegEuclidean => -squared_distance(a, b).sqrt(),
        }
    }
}

/// `M × K` similarities between each subvector and the centroids of its subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureSimilarity {
    m: usize,
    k: usize,
    values: Vec<f64>,
    kind: SimilarityKind,
}

impl StructureSimilarity {
    pub fn from_values(m: usize, k: usize, values: Vec<f64>, kind: SimilarityKind) -> Result<Self> {
        check_len(m * k, values.len())?;
        Ok(Self { m, k, values, kind })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> SimilarityKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.values[i * self.k + l]
    }

    /// Per-row argmax, lowest index on ties.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.m).map(|i| argmax(self.row(i))).collect()
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (l, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = l;
        }
    }
    best
}

pub fn structure_similarity(
    codebook: &ProductCodebook,
    v: &[f64],
    kind: SimilarityKind,
) -> Result<StructureSimilarity> {
    check_len(codebook.dim(), v.len())?;
    let (m, k) = (codebook.m(), codebook.k());
    let mut values = Vec::with_capacity(m * k);
    for (sub, u) in codebook.subs().iter().zip(split_subvectors(v, m)?) {
        values.extend((0..k).map(|c| kind.eval(u, sub.centroid(c))));
    }
    Ok(StructureSimilarity { m, k, values, kind })
}

/// Row-stochastic `M × K` soft assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentDistribution {
    m: usize,
    k: usize,
    probs: Vec<f64>,
    temperature: f64,
}

impl AssignmentDistribution {
    pub fn from_probs(m: usize, k: usize, probs: Vec<f64>, temperature: f64) -> Result<Self> {
        check_len(m * k, probs.len())?;
        Ok(Self { m, k, probs, temperature })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.k..(i + 1) * self.k]
    }
}

fn check_temperature(tau: f64) -> Result<()> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::BadConfig(format!("temperature must be >= 0, got {tau}")));
    }
    Ok(())
}

/// Natural log of the softmax of `row / tau`, via max subtraction.
fn log_softmax(row: &[f64], tau: f64, out: &mut Vec<f64>) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled = row.iter().map(|&s| (s - max) / tau);
    let lse = scaled.clone().map(f64::exp).sum::<f64>().ln();
    out.extend(scaled.map(|z| z - lse));
}

/// Temperature softmax per row. `tau == 0` gives the one-hot argmax (lowest index on ties).
pub fn soften(sim: &StructureSimilarity, tau: f64) -> Result<AssignmentDistribution> {
    check_temperature(tau)?;
    let mut probs = Vec::with_capacity(sim.values.len());
    for i in 0..sim.m {
        let row = sim.row(i);
        if tau == 0.0 {
            let j = argmax(row);
            probs.extend((0..sim.k).map(|l| if l == j { 1.0 } else { 0.0 }));
        } else {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let start = probs.len();
            probs.extend(row.iter().map(|&s| ((s - max) / tau).exp()));
            let z: f64 = probs[start..].iter().sum();
            probs[start..].iter_mut().for_each(|p| *p /= z);
        }
    }
    Ok(AssignmentDistribution { m: sim.m, k: sim.k, probs, temperature: tau })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub per_subspace: Vec<f64>,
}

impl LossValue {
    fn from_parts(per_subspace: Vec<f64>) -> Self {
        Self { total: per_subspace.iter().sum(), per_subspace }
    }
}

fn check_shapes(a: &AssignmentDistribution, b: &AssignmentDistribution) -> Result<()> {
    if a.m != b.m || a.k != b.k {
        return Err(Error::ShapeMismatch(format!("{}x{} distribution vs {}x{}", a.m, a.k, b.m, b.k)));
    }
    Ok(())
}

/// `KL(p_g || p_q)` per subspace, with `0 ln(0/x) = 0`.
pub fn kl_loss(p_g: &AssignmentDistribution, p_q: &AssignmentDistribution) -> Result<LossValue> {
    check_shapes(p_g, p_q)?;
    let mut per = Vec::with_capacity(p_g.m);
    for i in 0..p_g.m {
        let mut acc = 0.0;
        for (l, (&pg, &pq)) in p_g.row(i).iter().zip(p_q.row(i)).enumerate() {
            if pg == 0.0 {
                continue;
            }
            if pq == 0.0 {
                return Err(Error::ZeroTargetProbability { subspace: i, centroid: l });
            }
            acc += pg * (pg / pq).ln();
        }
        per.push(acc);
    }
    Ok(LossValue::from_parts(per))
}

/// Hard-assignment loss `-ln p_q[i, j_i]` where `j_i` is the argmax of the gallery similarity row.
pub fn hard_assignment_loss(sim_g: &StructureSimilarity, p_q: &AssignmentDistribution) -> Result<LossValue> {
    if sim_g.m != p_q.m || sim_g.k != p_q.k {
        return Err(Error::ShapeMismatch("similarity and distribution shapes differ".into()));
    }
    let per = sim_g
        .argmax()
        .into_iter()
        .enumerate()
        .map(|(i, j)| {
            let p = p_q.row(i)[j];
            if p == 0.0 {
                Err(Error::ZeroTargetProbability { subspace: i, centroid: j })
            } else {
                Ok(-p.ln())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LossValue::from_parts(per))
}

/// Temperatures and similarity kernel of the structure-preservation loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SspLoss {
    pub tau_g: f64,
    pub tau_q: f64,
    pub kind: SimilarityKind,
}

impl Default for SspLoss {
    fn default() -> Self {
        Self { tau_g: DEFAULT_TAU_G, tau_q: DEFAULT_TAU_Q, kind: SimilarityKind::Cosine }
    }
}

impl SspLoss {
    pub fn new(tau_g: f64, tau_q: f64, kind: SimilarityKind) -> Result<Self> {
        check_temperature(tau_g)?;
        if tau_q.is_nan() || tau_q <= 0.0 {
            return Err(Error::BadConfig(format!("tau_q must be > 0, got {tau_q}")));
        }
        Ok(Self { tau_g, tau_q, kind })
    }

    /// Soft assignment of a (frozen) gallery embedding. Cache it per training sample.
    pub fn target(&self, codebook: &ProductCodebook, g: &[f64]) -> Result<AssignmentDistribution> {
        soften(&structure_similarity(codebook, g, self.kind)?, self.tau_g)
    }

    /// Loss against a cached target and its gradient with respect to `q`.
    pub fn loss_and_grad(
        &self,
        codebook: &ProductCodebook,
        target: &AssignmentDistribution,
        q: &[f64],
    ) -> Result<(LossValue, Vec<f64>)> {
        check_len(codebook.dim(), q.len())?;
        if target.m != codebook.m() || target.k != codebook.k() {
            return Err(Error::ShapeMismatch("target does not match codebook".into()));
        }
        let sim = structure_similarity(codebook, q, self.kind)?;
        let (m, k) = (codebook.m(), codebook.k());
        let mut per = Vec::with_capacity(m);
        let mut grad = Vec::with_capacity(q.len());
        let mut log_pq = Vec::with_capacity(k);
        let mut weights = vec![0.0; k];

        for (i, u) in split_subvectors(q, m)?.into_iter().enumerate() {
            log_pq.clear();
            log_softmax(sim.row(i), self.tau_q, &mut log_pq);
            let pg = target.row(i);
            let mut acc = 0.0;
            for l in 0..k {
                if pg[l] > 0.0 {
                    acc += pg[l] * (pg[l].ln() - log_pq[l]);
                }
                // d KL / d S_q[i, l]
                weights[l] = (log_pq[l].exp() - pg[l]) / self.tau_q;
            }
            per.push(acc);

            let start = grad.len();
            grad.resize(start + u.len(), 0.0);
            let g = &mut grad[start..];
            let sub = codebook.sub(i);
            match self.kind {
                SimilarityKind::Cosine => {
                    let n = norm(u);
                    let mut radial = 0.0;
                    for (l, &w) in weights.iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let c = sub.centroid(l);
                        let a = norm(c);
                        let denom = a * n + NORM_EPS;
                        for (gx, cx) in g.iter_mut().zip(c) {
                            *gx += w * cx / denom;
                        }
                        radial += w * dot(c, u) * a / (denom * denom);
                    }
                    if n > 0.0 {
                        for (gx, ux) in g.iter_mut().zip(u) {
                            *gx -= radial * ux / n;
                        }
                    }
                }
                SimilarityKind::NegEuclidean => {
                    for (l, &w) in weights.iter().enumerate() {
                        let c = sub.centroid(l);
                        let dist = squared_distance(u, c).sqrt();
                        if dist == 0.0 || w == 0.0 {
                            continue;
                        }
                        for ((gx, ux), cx) in g.iter_mut().zip(u).zip(c) {
                            *gx -= w * (ux - cx) / dist;
                        }
                    }
                }
            }
        }
        Ok((LossValue::from_parts(per), grad))
    }
}

/// Structure-preservation loss of query embedding `q` against gallery embedding `g`,
/// and its gradient with respect to `q`. `g` is treated as a constant.
pub fn ssp_loss_and_grad(
    codebook: &ProductCodebook,
    g: &[f64],
    q: &[f64],
    tau_g: f64,
    tau_q: f64,
    kind: SimilarityKind,
) -> Result<(LossValue, Vec<f64>)> {
    check_len(codebook.dim(), g.len())?;
    let loss = SspLoss::new(tau_g, tau_q, kind)?;
    let target = loss.target(codebook, g)?;
    loss.loss_and_grad(codebook, &target, q)
}

/// Direct feature regression baseline: `|| q/|q| - g/|g| ||^2` and its gradient in `q`.
pub fn regression_loss_and_grad(g: &[f64], q: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len(g.len(), q.len())?;
    let gh = l2_normalize(g).vector;
    let qn = l2_normalize(q);
    let qh = qn.vector;
    let loss = squared_distance(&qh, &gh);
    if qn.degenerate {
        return Ok((loss, vec![0.0; q.len()]));
    }
    let n = norm(q);
    let cos = dot(&qh, &gh);
    let grad = qh.iter().zip(&gh).map(|(qx, gx)| 2.0 * (qx * cos - gx) / n).collect();
    Ok((loss, grad))
}
