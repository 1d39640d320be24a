use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use ssp_core::formats::{codebook_load, codebook_save, load_labels, read_embeddings, save_labels, write_embeddings};
use ssp_core::quantizer::{quantization_error, train_product_codebook_with, MemoryReport, PqTrainConfig};
use ssp_core::trainer::{load_checkpoint, save_checkpoint};
use ssp_core::{
    evaluate, evaluate_pq, gen_mixture, EmbeddingMatrix, EvalMode, EvalReport, GalleryOracle, ProductCodebook,
    QueryEncoder, SplitTag,
};

use crate::config::{ExperimentConfig, CODEBOOK_SEED_OFFSET, ENCODER_SEED_OFFSET, ORACLE_SEED_OFFSET};

/// Gallery size of the R1M + ROxford setting, used for the at-scale memory row.
pub const REFERENCE_GALLERY_SIZE: u64 = 1_005_994;

#[derive(Debug, Serialize, Deserialize)]
pub struct SplitEntry {
    pub name: String,
    pub rows: usize,
    pub inputs: String,
    pub gallery_embeddings: String,
    pub labels: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub input_dim: usize,
    pub embed_dim: usize,
    pub oracle_seed: u64,
    pub oracle_checkpoint: String,
    pub config: ExperimentConfig,
    pub splits: Vec<SplitEntry>,
}

/// Loaded split: raw inputs, cached gallery-model embeddings, labels.
pub struct SplitData {
    pub inputs: EmbeddingMatrix,
    pub gallery: EmbeddingMatrix,
    pub labels: Vec<u32>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(ssp_core::Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(ssp_core::Error::from)?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(ssp_core::Error::from)?;
    Ok(())
}

pub fn load_manifest(data: &Path) -> Result<Manifest> {
    let path = data.join("manifest.json");
    let text = fs::read_to_string(&path)
        .map_err(ssp_core::Error::from)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text).map_err(ssp_core::Error::from)?)
}

pub fn load_split(data: &Path, tag: SplitTag) -> Result<SplitData> {
    let name = tag.name();
    Ok(SplitData {
        inputs: read_embeddings(data.join(format!("{name}_inputs.emb")))?,
        gallery: read_embeddings(data.join(format!("{name}_gallery.emb")))?,
        labels: load_labels(data.join(format!("{name}_labels.csv")))?,
    })
}

pub fn gen(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mix = cfg.mixture();
    let ds = gen_mixture(&mix)?;
    let oracle_seed = cfg.seed + ORACLE_SEED_OFFSET;
    let oracle = GalleryOracle::new(cfg.input_dim, cfg.embed_dim, oracle_seed)?;
    create_dir(out)?;
    let mut splits = Vec::new();
    for tag in SplitTag::ALL {
        let split = ds.split(tag);
        let name = tag.name();
        let entry = SplitEntry {
            name: name.to_string(),
            rows: split.labels.len(),
            inputs: format!("{name}_inputs.emb"),
            gallery_embeddings: format!("{name}_gallery.emb"),
            labels: format!("{name}_labels.csv"),
        };
        write_embeddings(out.join(&entry.inputs), &split.inputs)?;
        write_embeddings(out.join(&entry.gallery_embeddings), &oracle.encode(&split.inputs)?)?;
        save_labels(out.join(&entry.labels), &split.labels)?;
        splits.push(entry);
    }
    save_checkpoint(out.join("oracle.sspq"), oracle.network(), None)?;
    let manifest = Manifest {
        input_dim: cfg.input_dim,
        embed_dim: cfg.embed_dim,
        oracle_seed,
        oracle_checkpoint: "oracle.sspq".into(),
        config: cfg.clone(),
        splits,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    info!("wrote {} rows to {}", ds.inputs.rows(), out.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CodebookSummary {
    pub m: usize,
    pub k: usize,
    pub dim: usize,
    pub sub_dim: usize,
    pub seed: u64,
    pub anchor_rows: usize,
    /// K^M in decimal.
    pub anchor_count: String,
    /// Quantization error of the anchor set per subspace under the saved (f32) codebook.
    pub objectives: Vec<f64>,
    pub objective: f64,
    pub iterations: Vec<usize>,
    pub flat_kmeans_baseline: bool,
}

fn train_codebook_from(
    cfg: &ExperimentConfig,
    anchors: &EmbeddingMatrix,
    m: usize,
) -> Result<(ProductCodebook, CodebookSummary)> {
    if m == 1 {
        warn!("M = 1: single flat k-means quantizer, the flat baseline regime rather than a product codebook");
    }
    let seed = cfg.seed + CODEBOOK_SEED_OFFSET;
    let pq = PqTrainConfig {
        m,
        k: cfg.centroids,
        seed,
        max_iters: cfg.kmeans_max_iters,
        rel_tol: cfg.kmeans_rel_tol,
        normalize: cfg.normalize_anchors,
    };
    let trained = train_product_codebook_with(anchors, &pq)?;
    // summarize what is persisted, which is the f32-rounded codebook
    let cb = trained.codebook.to_f32_precision();
    let features = if cfg.normalize_anchors { anchors.normalized()? } else { anchors.clone() };
    let objectives: Vec<f64> = (0..m)
        .map(|j| Ok(quantization_error(&features.subspace(j, m)?.to_matrix(), cb.sub(j).centroids())))
        .collect::<ssp_core::Result<_>>()?;
    let summary = CodebookSummary {
        m,
        k: cb.k(),
        dim: cb.dim(),
        sub_dim: cb.sub_dim(),
        seed,
        anchor_rows: anchors.rows(),
        anchor_count: cb.anchor_count().to_string(),
        objective: objectives.iter().sum(),
        objectives,
        iterations: trained.fits.iter().map(|f| f.iterations_run).collect(),
        flat_kmeans_baseline: m == 1,
    };
    Ok((cb, summary))
}

pub fn train_codebook(cfg: &ExperimentConfig, data: &Path, out: &Path) -> Result<()> {
    let anchors = load_split(data, SplitTag::Anchor)?.gallery;
    let (cb, summary) = train_codebook_from(cfg, &anchors, cfg.subspaces)?;
    create_dir(out)?;
    codebook_save(&cb, out.join("codebook.pqc"))?;
    write_json(&out.join("codebook_summary.json"), &summary)?;
    Ok(())
}

pub fn train_query(cfg: &ExperimentConfig, data: &Path, codebook: &Path, out: &Path, init_only: bool) -> Result<()> {
    let manifest = load_manifest(data)?;
    let train = load_split(data, SplitTag::Train)?;
    let cb = codebook_load(codebook)?;
    let enc = QueryEncoder::new(
        manifest.input_dim,
        &cfg.query_hidden,
        manifest.embed_dim,
        cfg.activation,
        cfg.seed + ENCODER_SEED_OFFSET,
    )?;
    create_dir(out)?;
    if init_only {
        save_checkpoint(out.join("query.sspq"), &enc, None)?;
        return Ok(());
    }
    let tcfg = cfg.train();
    let (trained, report) = ssp_core::train_query_model(&enc, &train.gallery, &train.inputs, &cb, &tcfg)?;
    eprintln!("training took {:.2}s", report.wall_clock_seconds);
    save_checkpoint(out.join("query.sspq"), &trained, Some(&tcfg))?;
    write_json(&out.join("train_report.json"), &report)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MemorySummary {
    pub gallery: MemoryReport,
    pub gallery_raw_f32_bytes: u64,
    pub reference: MemoryReport,
}

fn memory_summary(n: usize, dim: usize, cb: &ProductCodebook) -> Result<MemorySummary> {
    let (m, k) = (cb.m() as u64, cb.k() as u64);
    Ok(MemorySummary {
        gallery: MemoryReport::new(n as u64, m, k)?,
        gallery_raw_f32_bytes: MemoryReport::raw_f32_bytes(n as u64, dim as u64),
        reference: MemoryReport::new(REFERENCE_GALLERY_SIZE, m, k)?,
    })
}

fn csv_table(reports: &[&EvalReport]) -> String {
    let mut s = String::from(EvalReport::CSV_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

pub fn eval(data: &Path, checkpoint: &Path, codebook: Option<&Path>, out: &Path) -> Result<()> {
    let query = load_split(data, SplitTag::Query)?;
    let gallery = load_split(data, SplitTag::Gallery)?;
    let (enc, _) = load_checkpoint(checkpoint)?;
    let enc_id = format!("{:016x}", enc.checksum());
    let q_query = enc.embed_matrix(&query.inputs)?;
    let g_query = enc.embed_matrix(&gallery.inputs)?;

    let sym_g = evaluate(&query.gallery, &query.labels, &gallery.gallery, &gallery.labels, EvalMode::SymmetricGallery)?;
    let sym_q = evaluate(&q_query, &query.labels, &g_query, &gallery.labels, EvalMode::SymmetricQuery)?
        .with_encoder(enc_id.clone());
    let asym = evaluate(&q_query, &query.labels, &gallery.gallery, &gallery.labels, EvalMode::Asymmetric)?
        .with_encoder(enc_id.clone());
    create_dir(out)?;
    write_json(&out.join("symmetric_gallery.json"), &sym_g)?;
    write_json(&out.join("symmetric_query.json"), &sym_q)?;
    write_json(&out.join("asymmetric.json"), &asym)?;
    let mut rows = vec![&sym_g, &sym_q, &asym];

    let pq_report;
    if let Some(path) = codebook {
        let cb = codebook_load(path)?;
        let codes = cb.encode_all(&gallery.gallery)?;
        pq_report = evaluate_pq(&q_query, &query.labels, &codes, &cb, &gallery.labels, EvalMode::Asymmetric)?
            .with_encoder(enc_id);
        write_json(&out.join("asymmetric_pq.json"), &pq_report)?;
        write_json(&out.join("memory.json"), &memory_summary(gallery.gallery.rows(), cb.dim(), &cb)?)?;
        rows.push(&pq_report);
    }
    fs::write(out.join("summary.csv"), csv_table(&rows)).map_err(ssp_core::Error::from)?;
    for r in &rows {
        println!("{}", r.csv_row());
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PqBenchRow {
    pub m: usize,
    pub k: usize,
    pub symmetric_gallery_map: f64,
    pub asymmetric_map: Option<f64>,
    pub memory: MemoryReport,
    pub reference_memory: MemoryReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PqBench {
    pub exact_symmetric_gallery_map: f64,
    pub exact_asymmetric_map: Option<f64>,
    pub rows: Vec<PqBenchRow>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LatencyRow {
    pub m: usize,
    /// Mean ADC search time per query over the full gallery.
    pub seconds_per_query: f64,
}

pub fn pq_bench(
    cfg: &ExperimentConfig,
    data: &Path,
    checkpoint: Option<&Path>,
    ms: &[usize],
    out: &Path,
) -> Result<()> {
    let anchors = load_split(data, SplitTag::Anchor)?.gallery;
    let query = load_split(data, SplitTag::Query)?;
    let gallery = load_split(data, SplitTag::Gallery)?;
    let q_query = match checkpoint {
        Some(p) => Some(load_checkpoint(p)?.0.embed_matrix(&query.inputs)?),
        None => None,
    };
    let exact_sym =
        evaluate(&query.gallery, &query.labels, &gallery.gallery, &gallery.labels, EvalMode::SymmetricGallery)?.map;
    let exact_asym = q_query
        .as_ref()
        .map(|q| evaluate(q, &query.labels, &gallery.gallery, &gallery.labels, EvalMode::Asymmetric).map(|r| r.map))
        .transpose()?;

    let mut rows = Vec::new();
    let mut latency = Vec::new();
    for &m in ms {
        let (cb, _) = train_codebook_from(cfg, &anchors, m)?;
        let codes = cb.encode_all(&gallery.gallery)?;
        let sym = evaluate_pq(&query.gallery, &query.labels, &codes, &cb, &gallery.labels, EvalMode::SymmetricGallery)?;
        let start = Instant::now();
        let asym = q_query
            .as_ref()
            .map(|q| evaluate_pq(q, &query.labels, &codes, &cb, &gallery.labels, EvalMode::Asymmetric).map(|r| r.map))
            .transpose()?;
        let timed_queries = if asym.is_some() { query.labels.len() } else { 0 };
        if timed_queries > 0 {
            latency.push(LatencyRow { m, seconds_per_query: start.elapsed().as_secs_f64() / timed_queries as f64 });
        }
        rows.push(PqBenchRow {
            m,
            k: cb.k(),
            symmetric_gallery_map: sym.map,
            asymmetric_map: asym,
            memory: MemoryReport::new(gallery.gallery.rows() as u64, m as u64, cb.k() as u64)?,
            reference_memory: MemoryReport::new(REFERENCE_GALLERY_SIZE, m as u64, cb.k() as u64)?,
        });
    }
    create_dir(out)?;
    let bench = PqBench { exact_symmetric_gallery_map: exact_sym, exact_asymmetric_map: exact_asym, rows };
    write_json(&out.join("pq_bench.json"), &bench)?;
    let mut csv = String::from("m,k,symmetric_gallery_map,asymmetric_map,code_bytes,reference_mib\n");
    for r in &bench.rows {
        csv.push_str(&format!(
            "{},{},{:.6},{},{},{:.2}\n",
            r.m,
            r.k,
            r.symmetric_gallery_map,
            r.asymmetric_map.map(|v| format!("{v:.6}")).unwrap_or_default(),
            r.memory.code_bytes,
            r.reference_memory.mib
        ));
    }
    fs::write(out.join("pq_bench.csv"), &csv).map_err(ssp_core::Error::from)?;
    // timings vary run to run, so they live apart from the reproducible artifacts
    write_json(&out.join("pq_latency.json"), &latency)?;
    print!("{csv}");
    Ok(())
}

pub fn default_out(out: Option<PathBuf>, fallback: &str) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from(fallback))
}
