//! Flat experiment config: built-in defaults, then a JSON file, then CLI flags.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use ssp_core::synth::{STANDARD_EMBED_DIM, STANDARD_QUERY_HIDDEN, STANDARD_SUBSPACES};
use ssp_core::trainer::Activation;
use ssp_core::{LossKind, MixtureConfig, SimilarityKind, TrainConfig};

/// Offsets added to `seed` for each pipeline stage.
pub const DATASET_SEED_OFFSET: u64 = 0;
pub const ORACLE_SEED_OFFSET: u64 = 1;
pub const CODEBOOK_SEED_OFFSET: u64 = 2;
pub const ENCODER_SEED_OFFSET: u64 = 3;
pub const TRAIN_SEED_OFFSET: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,

    pub num_classes: usize,
    pub per_class: usize,
    pub input_dim: usize,
    pub cluster_std: f64,
    pub anchor_size: usize,
    pub train_size: usize,
    pub embed_dim: usize,

    pub subspaces: usize,
    pub centroids: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_rel_tol: f64,
    pub normalize_anchors: bool,

    pub query_hidden: Vec<usize>,
    pub activation: Activation,
    pub loss: LossKind,
    pub similarity: SimilarityKind,
    pub tau_g: f64,
    pub tau_q: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mix = MixtureConfig::default();
        let train = TrainConfig::default();
        Self {
            seed: 0,
            num_classes: mix.num_classes,
            per_class: mix.per_class,
            input_dim: mix.input_dim,
            cluster_std: mix.cluster_std,
            anchor_size: mix.anchor_size,
            train_size: mix.train_size,
            embed_dim: STANDARD_EMBED_DIM,
            subspaces: STANDARD_SUBSPACES,
            centroids: 256,
            kmeans_max_iters: ssp_core::quantizer::DEFAULT_MAX_ITERS,
            kmeans_rel_tol: ssp_core::quantizer::DEFAULT_REL_TOL,
            normalize_anchors: false,
            query_hidden: vec![STANDARD_QUERY_HIDDEN],
            activation: Activation::Tanh,
            loss: train.loss_kind,
            similarity: train.similarity_kind,
            tau_g: train.tau_g,
            tau_q: train.tau_q,
            learning_rate: train.learning_rate,
            weight_decay: train.weight_decay,
            epochs: train.epochs,
            batch_size: train.batch_size,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let cfg = serde_json::from_str(&text).map_err(ssp_core::Error::from)?;
                Ok(cfg)
            }
        }
    }

    pub fn mixture(&self) -> MixtureConfig {
        MixtureConfig {
            num_classes: self.num_classes,
            per_class: self.per_class,
            input_dim: self.input_dim,
            cluster_std: self.cluster_std,
            anchor_size: self.anchor_size,
            train_size: self.train_size,
            seed: self.seed + DATASET_SEED_OFFSET,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            tau_g: self.tau_g,
            tau_q: self.tau_q,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed + TRAIN_SEED_OFFSET,
            loss_kind: self.loss,
            similarity_kind: self.similarity,
            weight_decay: self.weight_decay,
        }
    }
}
