use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIB: f64 = 1024.0 * 1024.0;

/// Bytes needed to store `n` PQ codes of `m` sub-codes, each `log2(k)` bits.
/// Codebook storage is not included.
pub fn pq_memory_bytes(n: u64, m: u64, k: u64) -> Result<u64> {
    if k == 0 || !k.is_power_of_two() {
        return Err(Error::NonPowerOfTwoK(k as usize));
    }
    let bits = n * m * u64::from(k.trailing_zeros());
    Ok(bits.div_ceil(8))
}

/// Gallery code-storage summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub n: u64,
    pub m: u64,
    pub k: u64,
    pub code_bytes: u64,
    pub mib: f64,
}

impl MemoryReport {
    pub fn new(n: u64, m: u64, k: u64) -> Result<Self> {
        let code_bytes = pq_memory_bytes(n, m, k)?;
        Ok(Self { n, m, k, code_bytes, mib: code_bytes as f64 / MIB })
    }

    /// Bytes of an uncompressed gallery with 32-bit floats of dimension `dim`.
    pub fn raw_f32_bytes(n: u64, dim: u64) -> u64 {
        n * dim * 4
    }
}
