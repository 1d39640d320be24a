//! Structure-similarity preserving alignment of a query encoder to a fixed
//! gallery encoder, evaluated with product-quantized retrieval.

pub mod embed;
pub mod error;
pub mod eval;
pub mod formats;
pub mod loss;
mod parallel;
pub mod quantizer;
pub mod synth;
pub mod trainer;

pub use embed::{cosine_sim, l2_normalize, neg_euclid_sim, split_subvectors, EmbeddingMatrix};
pub use error::{Error, Result};
pub use eval::{average_precision, evaluate, evaluate_pq, exact_search, EvalMode, EvalReport, RankedList};
pub use loss::{SimilarityKind, SspLoss};
pub use quantizer::{adc_search, pq_memory_bytes, train_product_codebook, PQCode, ProductCodebook, SubCodebook};
pub use synth::{gen_mixture, Benchmark, GalleryOracle, MixtureConfig, SplitTag, SyntheticDataset};
pub use trainer::{train_query_model, LossKind, QueryEncoder, TrainConfig, TrainReport};
