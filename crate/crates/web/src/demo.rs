//! The three demo operations as plain functions so they run under native tests.

use std::f64::consts::TAU;

use serde::Serialize;
use ssp_core::loss::{soften, structure_similarity};
use ssp_core::quantizer::{MemoryReport, SubCodebook};
use ssp_core::trainer::Activation;
use ssp_core::{
    evaluate, evaluate_pq, train_product_codebook, train_query_model, Benchmark, EmbeddingMatrix, EvalMode, LossKind,
    MixtureConfig, ProductCodebook, QueryEncoder, Result, SimilarityKind, TrainConfig,
};

/// Gallery size used for the memory column.
pub const REFERENCE_GALLERY: u64 = 1_000_000;
pub const DEMO_EMBED_DIM: usize = 32;
pub const DEMO_CENTROIDS: usize = 16;
/// Codebook for the alignment run.
pub const DEMO_SUBSPACES: usize = 4;
pub const EXPLORER_CENTROIDS: usize = 8;

/// Small enough to regenerate on every click.
pub fn demo_mixture(seed: u64) -> MixtureConfig {
    MixtureConfig {
        num_classes: 16,
        per_class: 12,
        input_dim: 16,
        cluster_std: 0.15,
        anchor_size: 1024,
        train_size: 1024,
        seed,
    }
}

fn demo_benchmark(seed: u64) -> Result<Benchmark> {
    Benchmark::generate(&demo_mixture(seed), DEMO_EMBED_DIM, seed + 1)
}

/// Two rings of centroids in the plane: radius 0.5 on even slots, 1.0 on odd ones.
pub fn explorer_codebook() -> ProductCodebook {
    let mut data = Vec::with_capacity(2 * EXPLORER_CENTROIDS);
    for l in 0..EXPLORER_CENTROIDS {
        let angle = TAU * l as f64 / EXPLORER_CENTROIDS as f64;
        let r = if l % 2 == 0 { 0.5 } else { 1.0 };
        data.extend([r * angle.cos(), r * angle.sin()]);
    }
    let centroids = EmbeddingMatrix::new(EXPLORER_CENTROIDS, 2, data).expect("static shape");
    ProductCodebook::new(vec![SubCodebook::new(0, centroids).expect("static shape")]).expect("one subspace")
}

#[derive(Debug, Serialize)]
pub struct SoftAssignment {
    pub centroids: Vec<[f64; 2]>,
    pub similarities: Vec<f64>,
    pub probs: Vec<f64>,
    pub argmax: usize,
    /// In nats; zero for a one-hot assignment.
    pub entropy: f64,
}

pub fn soft_assignment(point: [f64; 2], tau: f64, kind: SimilarityKind) -> Result<SoftAssignment> {
    let cb = explorer_codebook();
    let sim = structure_similarity(&cb, &point, kind)?;
    let p = soften(&sim, tau)?;
    let probs = p.row(0).to_vec();
    Ok(SoftAssignment {
        centroids: (0..cb.k()).map(|l| [cb.sub(0).centroid(l)[0], cb.sub(0).centroid(l)[1]]).collect(),
        similarities: sim.row(0).to_vec(),
        argmax: sim.argmax()[0],
        entropy: -probs.iter().filter(|&&q| q > 0.0).map(|q| q * q.ln()).sum::<f64>(),
        probs,
    })
}

#[derive(Debug, Serialize)]
pub struct TradeoffRow {
    pub m: usize,
    pub map: f64,
    pub bytes_per_vector: u64,
    pub reference_mib: f64,
}

#[derive(Debug, Serialize)]
pub struct Tradeoff {
    pub exact_map: f64,
    pub reference_gallery: u64,
    /// Uncompressed 32-bit float gallery at the reference size.
    pub reference_raw_mib: f64,
    pub rows: Vec<TradeoffRow>,
}

/// Symmetric retrieval mAP with the gallery PQ-coded at each subspace count.
pub fn pq_tradeoff(seed: u64, subspaces: &[usize]) -> Result<Tradeoff> {
    let b = demo_benchmark(seed)?;
    let exact =
        evaluate(&b.query_gallery, &b.query.labels, &b.gallery_gallery, &b.gallery.labels, EvalMode::SymmetricGallery)?;
    let mut rows = Vec::with_capacity(subspaces.len());
    for &m in subspaces {
        let cb = train_product_codebook(&b.anchor_gallery, m, DEMO_CENTROIDS, seed + 2)?;
        let codes = cb.encode_all(&b.gallery_gallery)?;
        let r =
            evaluate_pq(&b.query_gallery, &b.query.labels, &codes, &cb, &b.gallery.labels, EvalMode::SymmetricGallery)?;
        let mem = MemoryReport::new(REFERENCE_GALLERY, m as u64, DEMO_CENTROIDS as u64)?;
        rows.push(TradeoffRow {
            m,
            map: r.map,
            bytes_per_vector: MemoryReport::new(1, m as u64, DEMO_CENTROIDS as u64)?.code_bytes,
            reference_mib: mem.mib,
        });
    }
    let raw = MemoryReport::raw_f32_bytes(REFERENCE_GALLERY, DEMO_EMBED_DIM as u64);
    Ok(Tradeoff {
        exact_map: exact.map,
        reference_gallery: REFERENCE_GALLERY,
        reference_raw_mib: raw as f64 / (1024.0 * 1024.0),
        rows,
    })
}

#[derive(Debug, Serialize)]
pub struct Alignment {
    pub symmetric_map: f64,
    pub untrained_map: f64,
    pub trained_map: f64,
    pub epoch_losses: Vec<f64>,
}

/// Trains a small query encoder against the frozen gallery model and reports
/// asymmetric mAP before and after.
pub fn train_alignment(seed: u64, epochs: usize, loss_kind: LossKind) -> Result<Alignment> {
    let b = demo_benchmark(seed)?;
    let cb = train_product_codebook(&b.anchor_gallery, DEMO_SUBSPACES, DEMO_CENTROIDS, seed + 2)?;
    let init = QueryEncoder::new(b.config.input_dim, &[32], DEMO_EMBED_DIM, Activation::Tanh, seed + 3)?;
    let cfg = TrainConfig { epochs, learning_rate: 3e-3, loss_kind, seed: seed + 4, ..Default::default() };
    let (trained, report) = train_query_model(&init, &b.train_gallery, &b.train.inputs, &cb, &cfg)?;
    let asym = |enc: &QueryEncoder| -> Result<f64> {
        let q = enc.embed_matrix(&b.query.inputs)?;
        Ok(evaluate(&q, &b.query.labels, &b.gallery_gallery, &b.gallery.labels, EvalMode::Asymmetric)?.map)
    };
    Ok(Alignment {
        symmetric_map: evaluate(
            &b.query_gallery,
            &b.query.labels,
            &b.gallery_gallery,
            &b.gallery.labels,
            EvalMode::SymmetricGallery,
        )?
        .map,
        untrained_map: asym(&init)?,
        trained_map: asym(&trained)?,
        epoch_losses: report.epoch_losses,
    })
}
