//! k-means, product codebooks, PQ encoding and ADC search.

mod adc;
mod kmeans;
mod memory;
mod pq;

pub use adc::{adc_search, DistanceTable, Neighbor};
pub use kmeans::{
    kmeans_best_of, kmeans_fit, nearest_centroid, quantization_error, KMeansResult, DEFAULT_MAX_ITERS, DEFAULT_REL_TOL,
};
pub use memory::{pq_memory_bytes, MemoryReport};
pub use pq::{
    train_product_codebook, train_product_codebook_with, PQCode, PqTrainConfig, ProductCodebook, SubCodebook,
    TrainedCodebook,
};
