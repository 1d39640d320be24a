//! Binary file formats.
//!
//! `EMB1` embedding matrix:
//!
//! ```text
//! b"EMB1" | rows: u32 LE | dim: u32 LE | dtype: u8 (0 = f32) | rows*dim f32 LE, row-major
//! ```
//!
//! `PQC1` product codebook:
//!
//! ```text
//! b"PQC1" | M: u32 LE | K: u32 LE | d: u32 LE | M blocks of K*(d/M) f32 LE
//! ```
//!
//! Label sidecars are CSV files with header `id,label`, one row per embedding,
//! where `id` is the 0-based row index.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{sub_dim, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::quantizer::{ProductCodebook, SubCodebook};

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
pub const PQC_MAGIC: &[u8; 4] = b"PQC1";
const DTYPE_F32: u8 = 0;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format_err(format!("truncated: wanted {n} bytes at offset {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f64>> {
        let raw = self.take(count.checked_mul(4).ok_or_else(|| format_err("size overflow"))?)?;
        Ok(raw.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))).collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(format_err(format!("{} trailing bytes after payload", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn expect_magic(cur: &mut Cursor<'_>, magic: &[u8; 4]) -> Result<()> {
    let got = cur.take(4)?;
    if got != magic {
        return Err(format_err(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(got),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| format_err(format!("{what} = {v} does not fit in u32")))
}

fn push_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Serializes a matrix as `EMB1`. Values are stored as 32-bit floats.
pub fn encode_embeddings(emb: &EmbeddingMatrix) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(13 + emb.data().len() * 4);
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&to_u32(emb.rows(), "rows")?.to_le_bytes());
    out.extend_from_slice(&to_u32(emb.dim(), "dim")?.to_le_bytes());
    out.push(DTYPE_F32);
    push_f32s(&mut out, emb.data());
    Ok(out)
}

/// Parses an `EMB1` buffer. The normalized flag is set when every row has unit norm.
pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let mut cur = Cursor::new(bytes);
    expect_magic(&mut cur, EMB_MAGIC)?;
    let rows = cur.u32()? as usize;
    let dim = cur.u32()? as usize;
    let dtype = cur.take(1)?[0];
    if dtype != DTYPE_F32 {
        return Err(format_err(format!("unsupported dtype {dtype}")));
    }
    if dim == 0 {
        return Err(format_err("dim must be at least 1"));
    }
    let data = cur.f32s(rows * dim)?;
    cur.finish()?;
    Ok(EmbeddingMatrix::new(rows, dim, data)?.detect_normalized())
}

pub fn write_embeddings(path: impl AsRef<Path>, emb: &EmbeddingMatrix) -> Result<()> {
    fs::write(path, encode_embeddings(emb)?)?;
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    decode_embeddings(&fs::read(path)?)
}

pub fn encode_codebook(cb: &ProductCodebook) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + cb.k() * cb.dim() * 4);
    out.extend_from_slice(PQC_MAGIC);
    out.extend_from_slice(&to_u32(cb.m(), "M")?.to_le_bytes());
    out.extend_from_slice(&to_u32(cb.k(), "K")?.to_le_bytes());
    out.extend_from_slice(&to_u32(cb.dim(), "d")?.to_le_bytes());
    for sub in cb.subs() {
        push_f32s(&mut out, sub.centroids().data());
    }
    Ok(out)
}

pub fn decode_codebook(bytes: &[u8]) -> Result<ProductCodebook> {
    let mut cur = Cursor::new(bytes);
    expect_magic(&mut cur, PQC_MAGIC)?;
    let m = cur.u32()? as usize;
    let k = cur.u32()? as usize;
    let d = cur.u32()? as usize;
    if m == 0 || k == 0 {
        return Err(format_err("M and K must be at least 1"));
    }
    let sd = sub_dim(d, m).map_err(|_| format_err(format!("d = {d} not divisible by M = {m}")))?;
    if sd == 0 {
        return Err(format_err("d must be at least M"));
    }
    let mut subs = Vec::with_capacity(m);
    for j in 0..m {
        let data = cur.f32s(k * sd)?;
        subs.push(SubCodebook::new(j, EmbeddingMatrix::new(k, sd, data)?)?);
    }
    cur.finish()?;
    ProductCodebook::new(subs)
}

pub fn codebook_save(cb: &ProductCodebook, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_codebook(cb)?)?;
    Ok(())
}

pub fn codebook_load(path: impl AsRef<Path>) -> Result<ProductCodebook> {
    decode_codebook(&fs::read(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    id: usize,
    label: u32,
}

pub fn write_labels<W: Write>(w: W, labels: &[u32]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for (id, &label) in labels.iter().enumerate() {
        wtr.serialize(LabelRow { id, label })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads an `id,label` CSV. Ids must be exactly `0..n` in order.
pub fn read_labels<R: Read>(r: R) -> Result<Vec<u32>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?;
    if headers.iter().collect::<Vec<_>>() != ["id", "label"] {
        return Err(format_err("label file header must be `id,label`"));
    }
    let mut labels = Vec::new();
    for row in rdr.deserialize() {
        let row: LabelRow = row?;
        if row.id != labels.len() {
            return Err(format_err(format!("label id {} out of order at row {}", row.id, labels.len())));
        }
        labels.push(row.label);
    }
    Ok(labels)
}

pub fn save_labels(path: impl AsRef<Path>, labels: &[u32]) -> Result<()> {
    write_labels(fs::File::create(path)?, labels)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    read_labels(fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::train_product_codebook;
    use proptest::prelude::*;

    fn sample() -> EmbeddingMatrix {
        EmbeddingMatrix::new(3, 2, vec![0.1, -2.5, 3.0, 1e-3, 7.25, 0.0]).unwrap()
    }

    #[test]
    fn embedding_layout() {
        let bytes = encode_embeddings(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(&bytes[4..8], &3u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(bytes[12], 0);
        assert_eq!(bytes.len(), 13 + 24);
        assert_eq!(&bytes[13..17], &0.1f32.to_le_bytes());
    }

    #[test]
    fn embedding_errors() {
        let mut bytes = encode_embeddings(&sample()).unwrap();
        assert!(matches!(decode_embeddings(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        bytes[4] = 4; // header claims 4 rows
        assert!(matches!(decode_embeddings(&bytes), Err(Error::Format(_))));
        bytes[4] = 2; // header claims fewer rows than the payload holds
        assert!(matches!(decode_embeddings(&bytes), Err(Error::Format(_))));
        bytes[4] = 3;
        bytes[12] = 1;
        assert!(matches!(decode_embeddings(&bytes), Err(Error::Format(_))));
        assert!(matches!(decode_embeddings(b"EMB2"), Err(Error::Format(_))));
    }

    #[test]
    fn normalized_flag_detected() {
        let m = EmbeddingMatrix::from_rows(&[vec![0.6, 0.8], vec![1.0, 0.0]]).unwrap().normalized().unwrap();
        let back = decode_embeddings(&encode_embeddings(&m).unwrap()).unwrap();
        assert!(back.is_normalized());
        assert!(!decode_embeddings(&encode_embeddings(&sample()).unwrap()).unwrap().is_normalized());
    }

    #[test]
    fn codebook_round_trip_and_errors() {
        let feats = EmbeddingMatrix::new(40, 4, (0..160).map(|i| ((i * 37 % 17) as f64).sin()).collect()).unwrap();
        let cb = train_product_codebook(&feats, 2, 4, 3).unwrap();
        let bytes = encode_codebook(&cb).unwrap();
        assert_eq!(bytes.len(), 16 + 2 * 4 * 2 * 4);
        let back = decode_codebook(&bytes).unwrap();
        assert_eq!(back, cb.to_f32_precision());
        assert_eq!(encode_codebook(&back).unwrap(), bytes);

        assert!(matches!(decode_codebook(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_codebook(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[12] = 5; // d = 5 with M = 2
        assert!(matches!(decode_codebook(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.emb");
        write_embeddings(&p, &sample()).unwrap();
        let back = read_embeddings(&p).unwrap();
        let first = fs::read(&p).unwrap();
        write_embeddings(&p, &back).unwrap();
        assert_eq!(fs::read(&p).unwrap(), first);
        assert!(matches!(read_embeddings(dir.path().join("missing")), Err(Error::Io(_))));
    }

    #[test]
    fn labels_round_trip() {
        let mut buf = Vec::new();
        write_labels(&mut buf, &[3, 1, 4]).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "id,label\n0,3\n1,1\n2,4\n");
        assert_eq!(read_labels(&buf[..]).unwrap(), vec![3, 1, 4]);
        assert!(read_labels(&b"id,label\n1,3\n"[..]).is_err());
        assert!(read_labels(&b"row,label\n0,3\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn embeddings_preserved_to_f32(
            rows in 1usize..6,
            dim in 1usize..6,
            seed in proptest::collection::vec(-1e6f64..1e6, 36),
        ) {
            let data: Vec<f64> = seed.into_iter().take(rows * dim).collect();
            let m = EmbeddingMatrix::new(rows, dim, data.clone()).unwrap();
            let back = decode_embeddings(&encode_embeddings(&m).unwrap()).unwrap();
            for (a, b) in data.iter().zip(back.data()) {
                prop_assert_eq!(*a as f32 as f64, *b);
            }
        }
    }
}
