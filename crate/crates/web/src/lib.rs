//! wasm-bindgen exports for the browser demo. Each call returns a JSON string.

pub mod demo;

use serde::Serialize;
use ssp_core::{LossKind, SimilarityKind};
use wasm_bindgen::prelude::*;

fn to_json<T: Serialize>(r: ssp_core::Result<T>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// Soft assignment of the point `(x, y)` over the demo codebook. `kind` is `"cosine"` or `"l2"`.
#[wasm_bindgen]
pub fn soft_assignment(x: f64, y: f64, tau: f64, kind: &str) -> Result<String, JsError> {
    let kind = match kind {
        "cosine" => SimilarityKind::Cosine,
        "l2" => SimilarityKind::NegEuclidean,
        other => return Err(JsError::new(&format!("unknown similarity {other:?}"))),
    };
    to_json(demo::soft_assignment([x, y], tau, kind))
}

/// PQ mAP and memory for each subspace count in `subspaces`.
#[wasm_bindgen]
pub fn pq_tradeoff(seed: u32, subspaces: Vec<u32>) -> Result<String, JsError> {
    let ms: Vec<usize> = subspaces.into_iter().map(|m| m as usize).collect();
    to_json(demo::pq_tradeoff(seed as u64, &ms))
}

/// Trains the demo query encoder. `loss` is `"ssp"` or `"reg"`.
#[wasm_bindgen]
pub fn train_alignment(seed: u32, epochs: u32, loss: &str) -> Result<String, JsError> {
    let loss = match loss {
        "ssp" => LossKind::Ssp,
        "reg" => LossKind::Regression,
        other => return Err(JsError::new(&format!("unknown loss {other:?}"))),
    };
    to_json(demo::train_alignment(seed as u64, epochs as usize, loss))
}
