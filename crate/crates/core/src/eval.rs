//! Exact and PQ-compressed retrieval scored with mean average precision.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::embed::{dot, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::quantizer::{adc_search, PQCode, ProductCodebook};

/// Gallery ids for one query, best first. Cosine rankings hold similarities
/// (descending); ADC rankings hold squared distances (ascending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query: usize,
    pub ids: Vec<usize>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Gallery model on both sides.
    SymmetricGallery,
    /// Query model on both sides.
    SymmetricQuery,
    /// Query model for queries, gallery model for the gallery.
    Asymmetric,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::SymmetricGallery => "symmetric_gallery",
            EvalMode::SymmetricQuery => "symmetric_query",
            EvalMode::Asymmetric => "asymmetric",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub map: f64,
    pub per_query_ap: Vec<f64>,
    pub n_queries: usize,
    pub encoder: Option<String>,
    pub codebook: Option<String>,
}

impl EvalReport {
    fn from_aps(mode: EvalMode, per_query_ap: Vec<f64>) -> Self {
        let map = per_query_ap.iter().sum::<f64>() / per_query_ap.len() as f64;
        Self { mode, map, n_queries: per_query_ap.len(), per_query_ap, encoder: None, codebook: None }
    }

    pub fn with_encoder(mut self, id: impl Into<String>) -> Self {
        self.encoder = Some(id.into());
        self
    }

    pub fn with_codebook(mut self, id: impl Into<String>) -> Self {
        self.codebook = Some(id.into());
        self
    }

    pub const CSV_HEADER: &'static str = "mode,map,n_queries,codebook";

    /// `mode,map,n_queries,codebook` row, without a trailing newline.
    pub fn csv_row(&self) -> String {
        format!("{},{:.6},{},{}", self.mode.name(), self.map, self.n_queries, self.codebook.as_deref().unwrap_or(""))
    }
}

/// Full cosine ranking of the gallery for every query. Both sides must be normalized.
pub fn exact_search(queries: &EmbeddingMatrix, gallery: &EmbeddingMatrix) -> Result<Vec<RankedList>> {
    if queries.dim() != gallery.dim() {
        return Err(Error::DimensionMismatch(format!("queries have dim {}, gallery {}", queries.dim(), gallery.dim())));
    }
    if !queries.is_normalized() || !gallery.is_normalized() {
        return Err(Error::NotNormalized);
    }
    Ok(map_indexed(queries.rows(), |qi| {
        let q = queries.row(qi);
        let mut scored: Vec<(usize, f64)> = gallery.iter_rows().enumerate().map(|(i, g)| (i, dot(q, g))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let (ids, scores) = scored.into_iter().unzip();
        RankedList { query: qi, ids, scores }
    }))
}

/// ADC ranking of a PQ-coded gallery for every query.
pub fn pq_search(queries: &EmbeddingMatrix, codes: &[PQCode], codebook: &ProductCodebook) -> Result<Vec<RankedList>> {
    map_indexed(queries.rows(), |qi| {
        let hits = adc_search(codebook, codes, queries.row(qi), codes.len())?;
        Ok(RankedList {
            query: qi,
            ids: hits.iter().map(|h| h.index).collect(),
            scores: hits.iter().map(|h| h.distance).collect(),
        })
    })
    .into_iter()
    .collect()
}

/// `(1/|relevant|) * sum over relevant hits at rank r of (hits so far / r)`.
pub fn average_precision(ranked: &RankedList, relevant: &HashSet<usize>) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevantSet { query: ranked.query });
    }
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (r, id) in ranked.ids.iter().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            acc += hits as f64 / (r + 1) as f64;
        }
    }
    Ok(acc / relevant.len() as f64)
}

fn score_rankings(
    rankings: &[RankedList],
    query_labels: &[u32],
    gallery_labels: &[u32],
    mode: EvalMode,
) -> Result<EvalReport> {
    let aps = rankings
        .iter()
        .map(|r| {
            let label = query_labels[r.query];
            let relevant: HashSet<usize> = (0..gallery_labels.len()).filter(|&i| gallery_labels[i] == label).collect();
            average_precision(r, &relevant)
        })
        .collect::<Result<Vec<_>>>()?;
    if aps.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(EvalReport::from_aps(mode, aps))
}

fn check_labels(queries: usize, ql: &[u32], gallery: usize, gl: &[u32]) -> Result<()> {
    if ql.len() != queries || gl.len() != gallery {
        return Err(Error::MissingLabels(format!(
            "{} query labels for {queries} queries, {} gallery labels for {gallery} items",
            ql.len(),
            gl.len()
        )));
    }
    Ok(())
}

/// mAP where a gallery item is relevant to a query iff their labels match.
pub fn evaluate(
    queries: &EmbeddingMatrix,
    query_labels: &[u32],
    gallery: &EmbeddingMatrix,
    gallery_labels: &[u32],
    mode: EvalMode,
) -> Result<EvalReport> {
    check_labels(queries.rows(), query_labels, gallery.rows(), gallery_labels)?;
    let rankings = exact_search(queries, gallery)?;
    score_rankings(&rankings, query_labels, gallery_labels, mode)
}

/// Like [`evaluate`] but the gallery is PQ-coded and ranked by ADC.
pub fn evaluate_pq(
    queries: &EmbeddingMatrix,
    query_labels: &[u32],
    codes: &[PQCode],
    codebook: &ProductCodebook,
    gallery_labels: &[u32],
    mode: EvalMode,
) -> Result<EvalReport> {
    check_labels(queries.rows(), query_labels, codes.len(), gallery_labels)?;
    let rankings = pq_search(queries, codes, codebook)?;
    Ok(score_rankings(&rankings, query_labels, gallery_labels, mode)?.with_codebook(format!(
        "pq_m{}_k{}",
        codebook.m(),
        codebook.k()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::l2_normalize;
    use crate::quantizer::{train_product_codebook, SubCodebook};
    use approx::assert_abs_diff_eq;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_unit(n: usize, d: usize, rng: &mut ChaCha8Rng) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            data.extend(l2_normalize(&v).vector);
        }
        EmbeddingMatrix::new_normalized(n, d, data).unwrap()
    }

    fn ranked(ids: Vec<usize>) -> RankedList {
        let scores = vec![0.0; ids.len()];
        RankedList { query: 0, ids, scores }
    }

    #[test]
    fn ap_examples() {
        let rel = |v: &[usize]| v.iter().cloned().collect::<HashSet<_>>();
        assert_eq!(average_precision(&ranked(vec![4, 1, 2]), &rel(&[4])).unwrap(), 1.0);
        assert_eq!(average_precision(&ranked(vec![1, 4]), &rel(&[4])).unwrap(), 0.5);
        let ap = average_precision(&ranked(vec![7, 3, 8, 5]), &rel(&[7, 8])).unwrap();
        assert_abs_diff_eq!(ap, (1.0 + 2.0 / 3.0) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ap, 0.83333, epsilon = 1e-5);
        assert!(matches!(average_precision(&ranked(vec![1]), &rel(&[])), Err(Error::EmptyRelevantSet { .. })));
    }

    #[test]
    fn ap_is_one_iff_relevant_items_lead() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let mut ids: Vec<usize> = (0..10).collect();
            ids.shuffle(&mut rng);
            let k = rng.random_range(1..=5);
            let relevant: HashSet<usize> = (0..k).collect();
            let ap = average_precision(&ranked(ids.clone()), &relevant).unwrap();
            assert!((0.0..=1.0).contains(&ap));
            let leading = ids[..k].iter().all(|i| relevant.contains(i));
            assert_eq!(ap == 1.0, leading);
        }
    }

    #[test]
    fn exact_search_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_unit(5, 6, &mut rng);
        let g = random_unit(40, 6, &mut rng);
        let lists = exact_search(&q, &g).unwrap();
        for (qi, list) in lists.iter().enumerate() {
            let mut oracle = Vec::new();
            for gi in 0..g.rows() {
                let mut s = 0.0;
                for j in 0..6 {
                    s += q.row(qi)[j] * g.row(gi)[j];
                }
                oracle.push((gi, s));
            }
            oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            assert_eq!(list.ids, oracle.iter().map(|o| o.0).collect::<Vec<_>>());
            let mut seen = list.ids.clone();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), g.rows());
        }
    }

    #[test]
    fn self_match_and_tiny_gallery() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_unit(10, 4, &mut rng);
        let q = g.select_rows(&[6]);
        let lists = exact_search(&q, &g).unwrap();
        assert_eq!(lists[0].ids[0], 6);
        assert_abs_diff_eq!(lists[0].scores[0], 1.0, epsilon = 1e-12);

        let one = g.select_rows(&[0]);
        let lists = exact_search(&g, &one).unwrap();
        assert!(lists.iter().all(|l| l.ids.len() == 1));

        let bad = random_unit(2, 3, &mut rng);
        assert!(matches!(exact_search(&bad, &g), Err(Error::DimensionMismatch(_))));
        let raw = EmbeddingMatrix::new(1, 4, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(exact_search(&raw, &g), Err(Error::NotNormalized)));
    }

    #[test]
    fn random_embeddings_score_near_class_prior() {
        let mut maps = Vec::new();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let g = random_unit(500, 16, &mut rng);
            let gl: Vec<u32> = (0..500).map(|i| (i % 10) as u32).collect();
            let q = random_unit(50, 16, &mut rng);
            let ql: Vec<u32> = (0..50).map(|i| (i % 10) as u32).collect();
            maps.push(evaluate(&q, &ql, &g, &gl, EvalMode::Asymmetric).unwrap().map);
        }
        let mean = maps.iter().sum::<f64>() / 5.0;
        assert!((mean - 0.1).abs() < 0.05, "mean mAP {mean}");
    }

    #[test]
    fn report_invariants_and_label_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_unit(30, 4, &mut rng);
        let gl: Vec<u32> = (0..30).map(|i| (i % 3) as u32).collect();
        let q = random_unit(6, 4, &mut rng);
        let ql = vec![0, 1, 2, 0, 1, 2];
        let r = evaluate(&q, &ql, &g, &gl, EvalMode::SymmetricGallery).unwrap();
        assert_eq!(r.n_queries, 6);
        assert!((r.map - r.per_query_ap.iter().sum::<f64>() / 6.0).abs() < 1e-12);
        assert!(r.per_query_ap.iter().all(|ap| (0.0..=1.0).contains(ap)));
        assert!(r.csv_row().starts_with("symmetric_gallery,"));
        assert!(matches!(evaluate(&q, &ql[..3], &g, &gl, EvalMode::Asymmetric), Err(Error::MissingLabels(_))));
        let missing_class = vec![0, 1, 2, 0, 1, 9];
        assert!(matches!(
            evaluate(&q, &missing_class, &g, &gl, EvalMode::Asymmetric),
            Err(Error::EmptyRelevantSet { query: 5 })
        ));
    }

    #[test]
    fn gallery_permutation_does_not_change_ap() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = random_unit(60, 8, &mut rng);
        let gl: Vec<u32> = (0..60).map(|i| (i % 4) as u32).collect();
        let q = random_unit(8, 8, &mut rng);
        let ql: Vec<u32> = (0..8).map(|i| (i % 4) as u32).collect();
        let base = evaluate(&q, &ql, &g, &gl, EvalMode::Asymmetric).unwrap();
        for _ in 0..5 {
            let mut perm: Vec<usize> = (0..60).collect();
            perm.shuffle(&mut rng);
            let pg = g.select_rows(&perm);
            let pl: Vec<u32> = perm.iter().map(|&i| gl[i]).collect();
            let r = evaluate(&q, &ql, &pg, &pl, EvalMode::Asymmetric).unwrap();
            for (a, b) in base.per_query_ap.iter().zip(&r.per_query_ap) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lossless_pq_matches_exact() {
        // each coordinate takes one of two values, so K = 2 per scalar subspace is lossless
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let levels = [-0.5, 0.5];
        let mut data = Vec::new();
        for _ in 0..40 {
            for _ in 0..4 {
                data.push(levels[rng.random_range(0..2)]);
            }
        }
        let g = EmbeddingMatrix::new_normalized(40, 4, data).unwrap();
        let gl: Vec<u32> = (0..40).map(|i| (i % 5) as u32).collect();
        let q = random_unit(10, 4, &mut rng);
        let ql: Vec<u32> = (0..10).map(|i| (i % 5) as u32).collect();
        let cb = train_product_codebook(&g, 4, 2, 0).unwrap();
        let codes = cb.encode_all(&g).unwrap();
        for (i, c) in codes.iter().enumerate() {
            assert_eq!(cb.reconstruct(c).unwrap(), g.row(i));
        }
        let exact = evaluate(&q, &ql, &g, &gl, EvalMode::Asymmetric).unwrap();
        let pq = evaluate_pq(&q, &ql, &codes, &cb, &gl, EvalMode::Asymmetric).unwrap();
        // unit-norm gallery: ascending squared distance == descending cosine
        assert!((exact.map - pq.map).abs() < 1e-9);
        assert_eq!(pq.codebook.as_deref(), Some("pq_m4_k2"));
    }

    #[test]
    fn single_item_gallery_is_perfect() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = random_unit(1, 4, &mut rng);
        let q = random_unit(3, 4, &mut rng);
        let sub = SubCodebook::new(0, EmbeddingMatrix::new(1, 4, vec![0.0; 4]).unwrap()).unwrap();
        let cb = ProductCodebook::new(vec![sub]).unwrap();
        let codes = cb.encode_all(&g).unwrap();
        let r = evaluate_pq(&q, &[1, 1, 1], &codes, &cb, &[1], EvalMode::Asymmetric).unwrap();
        assert_eq!(r.map, 1.0);
    }
}
