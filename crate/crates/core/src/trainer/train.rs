use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::encoder::QueryEncoder;
use super::schedule::linear_lr;
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::loss::{regression_loss_and_grad, AssignmentDistribution, SimilarityKind, SspLoss};
use crate::parallel::map_indexed;
use crate::quantizer::ProductCodebook;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// KL between softened structure similarities.
    #[default]
    Ssp,
    /// Squared distance between normalized embeddings.
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub tau_g: f64,
    pub tau_q: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss_kind: LossKind,
    pub similarity_kind: SimilarityKind,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau_g: crate::loss::DEFAULT_TAU_G,
            tau_q: crate::loss::DEFAULT_TAU_Q,
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            loss_kind: LossKind::Ssp,
            similarity_kind: SimilarityKind::Cosine,
            weight_decay: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::BadConfig("learning_rate must be > 0".into()));
        }
        if self.epochs == 0 {
            return Err(Error::BadConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::BadConfig("batch_size must be >= 1".into()));
        }
        SspLoss::new(self.tau_g, self.tau_q, self.similarity_kind)?;
        Ok(())
    }

    pub fn ssp_loss(&self) -> SspLoss {
        SspLoss { tau_g: self.tau_g, tau_q: self.tau_q, kind: self.similarity_kind }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample loss of each epoch, in order.
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub total_steps: usize,
    /// Learning rate used by the last optimizer step.
    pub final_lr: f64,
    pub param_count: usize,
    pub config: TrainConfig,
    /// Not serialized so that report files stay byte-identical across runs.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl TrainReport {
    /// Equality on everything except wall-clock time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let strip = |r: &Self| Self { wall_clock_seconds: 0.0, ..r.clone() };
        strip(self) == strip(other)
    }
}

/// What one training sample is compared against.
#[derive(Debug, Clone)]
pub enum SampleTarget<'a> {
    /// Cached soft assignment of the gallery embedding.
    Ssp { loss: SspLoss, codebook: &'a ProductCodebook, target: AssignmentDistribution },
    /// The gallery embedding itself.
    Regression(&'a [f64]),
}

impl<'a> SampleTarget<'a> {
    pub fn new(cfg: &TrainConfig, codebook: &'a ProductCodebook, gallery_embedding: &'a [f64]) -> Result<Self> {
        Ok(match cfg.loss_kind {
            LossKind::Ssp => {
                let loss = cfg.ssp_loss();
                let target = loss.target(codebook, gallery_embedding)?;
                SampleTarget::Ssp { loss, codebook, target }
            }
            LossKind::Regression => SampleTarget::Regression(gallery_embedding),
        })
    }

    /// Loss and gradient with respect to the (normalized) query embedding.
    pub fn loss_and_grad(&self, q: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            SampleTarget::Ssp { loss, codebook, target } => {
                let (l, g) = loss.loss_and_grad(codebook, target, q)?;
                Ok((l.total, g))
            }
            SampleTarget::Regression(g) => regression_loss_and_grad(g, q),
        }
    }
}

/// Per-sample loss and its gradient with respect to every encoder parameter.
pub fn sample_loss_and_param_grad(enc: &QueryEncoder, target: &SampleTarget<'_>, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let pass = enc.forward(x)?;
    let (loss, grad_q) = target.loss_and_grad(&pass.output)?;
    let mut grad = vec![0.0; enc.param_count()];
    enc.backward(&pass, &grad_q, &mut grad);
    Ok((loss, grad))
}

/// Returns a closure reading seconds since the call; always zero on browser wasm, which has no clock.
#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
fn clock() -> impl Fn() -> f64 {
    let started = std::time::Instant::now();
    move || started.elapsed().as_secs_f64()
}

#[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
fn clock() -> impl Fn() -> f64 {
    || 0.0
}

/// Optimizes a copy of `enc` so its embeddings of `raw_inputs` agree with the
/// frozen `gallery_embeddings` under `cfg.loss_kind`.
///
/// Each epoch visits the training set in a seeded random order, in mini-batches
/// whose per-sample losses are averaged. Adam steps use a linear learning-rate
/// decay over all steps of the run.
pub fn train_query_model(
    enc: &QueryEncoder,
    gallery_embeddings: &EmbeddingMatrix,
    raw_inputs: &EmbeddingMatrix,
    codebook: &ProductCodebook,
    cfg: &TrainConfig,
) -> Result<(QueryEncoder, TrainReport)> {
    cfg.validate()?;
    let n = raw_inputs.rows();
    if n == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if gallery_embeddings.rows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} gallery embeddings for {n} training inputs",
            gallery_embeddings.rows()
        )));
    }
    if raw_inputs.dim() != enc.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "inputs have dim {}, encoder expects {}",
            raw_inputs.dim(),
            enc.input_dim()
        )));
    }
    let d = gallery_embeddings.dim();
    if enc.output_dim() != d || codebook.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "gallery dim {d}, encoder output {}, codebook dim {}",
            enc.output_dim(),
            codebook.dim()
        )));
    }

    let elapsed = clock();
    let targets = map_indexed(n, |i| SampleTarget::new(cfg, codebook, gallery_embeddings.row(i)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut model = enc.clone();
    let mut adam = AdamState::new(model.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut step = 0;
    let mut final_lr = cfg.learning_rate;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut grad = vec![0.0; model.param_count()];

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results = map_indexed(batch.len(), |b| {
                let i = batch[b];
                sample_loss_and_param_grad(&model, &targets[i], raw_inputs.row(i))
            });
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for r in results {
                let (loss, g) = r?;
                epoch_total += loss;
                for (acc, v) in grad.iter_mut().zip(&g) {
                    *acc += v * scale;
                }
            }
            final_lr = linear_lr(step, total_steps, cfg.learning_rate)?;
            adam.step(model.params_mut(), &grad, final_lr, cfg.weight_decay)?;
            step += 1;
        }
        epoch_losses.push(epoch_total / n as f64);
    }

    let report = TrainReport {
        final_loss: *epoch_losses.last().expect("epochs >= 1"),
        epoch_losses,
        total_steps,
        final_lr,
        param_count: model.param_count(),
        config: cfg.clone(),
        wall_clock_seconds: elapsed(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::l2_normalize;
    use crate::quantizer::train_product_codebook;
    use crate::trainer::Activation;
    use rand::Rng;

    fn toy_problem(n: usize, seed: u64) -> (QueryEncoder, EmbeddingMatrix, EmbeddingMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = EmbeddingMatrix::new(n, 6, (0..n * 6).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let teacher = QueryEncoder::new(6, &[8], 8, Activation::Tanh, seed + 100).unwrap();
        let gallery = teacher.embed_matrix(&raw).unwrap();
        (teacher, raw, gallery)
    }

    #[test]
    fn losses_descend_on_toy_set() {
        let (_, raw, gallery) = toy_problem(64, 1);
        let cb = train_product_codebook(&gallery, 2, 8, 0).unwrap();
        let enc = QueryEncoder::new(6, &[8], 8, Activation::Tanh, 9).unwrap();
        let cfg = TrainConfig { epochs: 2, batch_size: 8, learning_rate: 1e-2, ..Default::default() };
        let (_, report) = train_query_model(&enc, &gallery, &raw, &cb, &cfg).unwrap();
        assert_eq!(report.epoch_losses.len(), 2);
        assert!(report.epoch_losses[1] < report.epoch_losses[0], "{:?}", report.epoch_losses);
    }

    #[test]
    fn regression_fits_realizable_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let raw = EmbeddingMatrix::new(32, 8, (0..32 * 8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let teacher = QueryEncoder::new(8, &[16], 8, Activation::Tanh, 102).unwrap();
        let gallery = teacher.embed_matrix(&raw).unwrap();
        let cb = train_product_codebook(&gallery, 2, 4, 0).unwrap();
        let student = QueryEncoder::new(8, &[16], 8, Activation::Tanh, 3).unwrap();
        let cfg = TrainConfig {
            loss_kind: LossKind::Regression,
            epochs: 50,
            batch_size: 1,
            learning_rate: 5e-2,
            ..Default::default()
        };
        let (_, report) = train_query_model(&student, &gallery, &raw, &cb, &cfg).unwrap();
        assert!(report.final_loss < 1e-3, "final loss {}", report.final_loss);
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = l2_normalize(&(0..8).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>()).vector;
        let enc = QueryEncoder::new(6, &[8], 8, Activation::Tanh, 3).unwrap();
        let (_, _, gallery) = toy_problem(16, 7);
        let cb = train_product_codebook(&gallery, 2, 4, 0).unwrap();
        let cfg = TrainConfig::default();
        for target in [SampleTarget::Regression(&g), SampleTarget::new(&cfg, &cb, &g).unwrap()] {
            let (_, grad) = sample_loss_and_param_grad(&enc, &target, &x).unwrap();
            let loss_at = |p: usize, h: f64| {
                let mut e = enc.clone();
                e.params_mut()[p] += h;
                sample_loss_and_param_grad(&e, &target, &x).unwrap().0
            };
            for (p, &an) in grad.iter().enumerate() {
                let fd = (loss_at(p, 1e-6) - loss_at(p, -1e-6)) / 2e-6;
                assert!((fd - an).abs() < 1e-6, "param {p}: fd {fd} vs {an}");
            }
        }
    }

    #[test]
    fn training_is_reproducible_and_leaves_gallery_alone() {
        let (_, raw, gallery) = toy_problem(40, 4);
        let before = gallery.checksum();
        let cb = train_product_codebook(&gallery, 4, 4, 0).unwrap();
        let enc = QueryEncoder::new(6, &[8], 8, Activation::Tanh, 5).unwrap();
        let cfg = TrainConfig { epochs: 3, batch_size: 7, ..Default::default() };
        let (m1, r1) = train_query_model(&enc, &gallery, &raw, &cb, &cfg).unwrap();
        let (m2, r2) = train_query_model(&enc, &gallery, &raw, &cb, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert!(r1.same_outcome(&r2));
        assert_eq!(serde_json::to_string(&r1).unwrap(), serde_json::to_string(&r2).unwrap());
        assert_eq!(gallery.checksum(), before);
        assert_eq!(r1.total_steps, 3 * 6);
        assert!((r1.final_lr - cfg.learning_rate / r1.total_steps as f64).abs() < 1e-12);
    }

    #[test]
    fn input_validation() {
        let (_, raw, gallery) = toy_problem(10, 6);
        let cb = train_product_codebook(&gallery, 2, 4, 0).unwrap();
        let enc = QueryEncoder::new(6, &[8], 8, Activation::Tanh, 5).unwrap();
        let cfg = TrainConfig::default();
        let short = gallery.select_rows(&[0, 1, 2]);
        assert!(matches!(train_query_model(&enc, &short, &raw, &cb, &cfg), Err(Error::DimensionMismatch(_))));
        let empty_raw = EmbeddingMatrix::new(0, 6, vec![]).unwrap();
        let empty_g = EmbeddingMatrix::new(0, 8, vec![]).unwrap();
        assert!(matches!(train_query_model(&enc, &empty_g, &empty_raw, &cb, &cfg), Err(Error::EmptyTrainingSet)));
        let wrong = QueryEncoder::new(6, &[8], 4, Activation::Tanh, 5).unwrap();
        assert!(matches!(train_query_model(&wrong, &gallery, &raw, &cb, &cfg), Err(Error::DimensionMismatch(_))));
        let bad = TrainConfig { tau_q: 0.0, ..Default::default() };
        assert!(matches!(train_query_model(&enc, &gallery, &raw, &cb, &bad), Err(Error::BadConfig(_))));
        let bad = TrainConfig { epochs: 0, ..Default::default() };
        assert!(train_query_model(&enc, &gallery, &raw, &cb, &bad).is_err());
    }
}
