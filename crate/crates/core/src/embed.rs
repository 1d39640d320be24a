//! Embedding matrices, normalization, subvector splitting and the two
//! similarity kernels used against anchor centroids.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Guard added to norms and norm products so degenerate vectors never divide by zero.
pub const NORM_EPS: f64 = 1e-12;

/// Tolerance on row norms for a matrix flagged as normalized.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Dense row-major `rows × dim` matrix of embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::BadDimension("embedding dimension must be at least 1".into()));
        }
        check_len(rows * dim, data.len())?;
        Ok(Self { rows, dim, data, normalized: false })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyInput)?;
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            check_len(dim, row.as_ref().len())?;
            data.extend_from_slice(row.as_ref());
        }
        Self::new(rows.len(), dim, data)
    }

    /// Builds a matrix and sets the normalized flag after checking every row.
    pub fn new_normalized(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        let mut m = Self::new(rows, dim, data)?;
        for i in 0..m.rows {
            let n = norm(m.row(i));
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(if n < NORM_EPS { Error::DegenerateRow(i) } else { Error::NotNormalized });
            }
        }
        m.normalized = true;
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Returns a copy with every row L2-normalized. Zero rows are rejected.
    pub fn normalized(&self) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        for (i, row) in self.iter_rows().enumerate() {
            let n = l2_normalize(row);
            if n.degenerate {
                return Err(Error::DegenerateRow(i));
            }
            data.extend(n.vector);
        }
        Ok(Self { rows: self.rows, dim: self.dim, data, normalized: true })
    }

    /// Sets the normalized flag if every row already has unit norm.
    pub(crate) fn detect_normalized(mut self) -> Self {
        self.normalized = self.rows > 0 && self.iter_rows().all(|r| (norm(r) - 1.0).abs() <= UNIT_NORM_TOL);
        self
    }

    /// Gathers the given rows into a new matrix; the normalized flag carries over.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: indices.len(), dim: self.dim, data, normalized: self.normalized }
    }

    /// View of subspace `index` (0-based) when rows are split into `subspaces` pieces.
    pub fn subspace(&self, index: usize, subspaces: usize) -> Result<SubvectorView<'_>> {
        let sub_dim = sub_dim(self.dim, subspaces)?;
        if index >= subspaces {
            return Err(Error::BadDimension(format!("subspace index {index} out of range for {subspaces} subspaces")));
        }
        Ok(SubvectorView { parent: self, index, sub_dim })
    }

    /// Order-sensitive FNV-1a checksum of the raw bits, used to assert immutability.
    pub fn checksum(&self) -> u64 {
        checksum_f64(&self.data)
    }
}

pub(crate) fn checksum_f64(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Borrowed view of one subspace of an [`EmbeddingMatrix`].
#[derive(Debug, Clone, Copy)]
pub struct SubvectorView<'a> {
    parent: &'a EmbeddingMatrix,
    index: usize,
    sub_dim: usize,
}

impl<'a> SubvectorView<'a> {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn sub_dim(&self) -> usize {
        self.sub_dim
    }

    pub fn rows(&self) -> usize {
        self.parent.rows
    }

    /// Coordinates `[index * sub_dim, (index + 1) * sub_dim)` of row `i`.
    pub fn row(&self, i: usize) -> &'a [f64] {
        let start = self.index * self.sub_dim;
        &self.parent.row(i)[start..start + self.sub_dim]
    }

    /// Copies the view into a contiguous `rows × sub_dim` matrix.
    pub fn to_matrix(&self) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(self.rows() * self.sub_dim);
        for i in 0..self.rows() {
            data.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix { rows: self.rows(), dim: self.sub_dim, data, normalized: false }
    }
}

/// Result of [`l2_normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub vector: Vec<f64>,
    /// Set when the input norm was below [`NORM_EPS`] and the input was returned unchanged.
    pub degenerate: bool,
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn l2_normalize(v: &[f64]) -> Normalized {
    let n = norm(v);
    if n < NORM_EPS {
        return Normalized { vector: v.to_vec(), degenerate: true };
    }
    Normalized { vector: v.iter().map(|x| x / n).collect(), degenerate: false }
}

/// `d / m`, or an error when `m` does not divide `d`.
pub fn sub_dim(dim: usize, subspaces: usize) -> Result<usize> {
    if subspaces == 0 || !dim.is_multiple_of(subspaces) {
        return Err(Error::IndivisibleDimension { dim, subspaces });
    }
    Ok(dim / subspaces)
}

/// Splits `v` into `m` contiguous subvectors of equal length.
pub fn split_subvectors(v: &[f64], m: usize) -> Result<Vec<&[f64]>> {
    let d = sub_dim(v.len(), m)?;
    Ok(v.chunks_exact(d).collect())
}

pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(cosine_unchecked(a, b))
}

pub(crate) fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b) + NORM_EPS)
}

pub fn neg_euclid_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(-squared_distance(a, b).sqrt())
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        let n = l2_normalize(&[3.0, 4.0]);
        assert!(!n.degenerate);
        assert_abs_diff_eq!(n.vector[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(n.vector[1], 0.8, epsilon = 1e-15);

        assert_eq!(l2_normalize(&[1.0, 0.0, 0.0]).vector, vec![1.0, 0.0, 0.0]);

        let z = l2_normalize(&[0.0, 0.0]);
        assert!(z.degenerate);
        assert_eq!(z.vector, vec![0.0, 0.0]);
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_subvectors(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), vec![&[1.0, 2.0][..], &[3.0, 4.0][..]]);
        assert_eq!(split_subvectors(&[5.0], 1).unwrap(), vec![&[5.0][..]]);
        assert_eq!(
            split_subvectors(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3).unwrap(),
            vec![&[1.0, 2.0][..], &[3.0, 4.0][..], &[5.0, 6.0][..]]
        );
        assert!(matches!(
            split_subvectors(&[1.0, 2.0, 3.0], 2),
            Err(Error::IndivisibleDimension { dim: 3, subspaces: 2 })
        ));
    }

    #[test]
    fn cosine_examples() {
        assert_abs_diff_eq!(cosine_sim(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cosine_sim(&[1.0, 1.0], &[1.0, 0.0]).unwrap(), 0.70710678, epsilon = 1e-8);
        assert!(matches!(cosine_sim(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
        // zero vector is guarded to 0
        assert_eq!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn neg_euclid_examples() {
        assert_eq!(neg_euclid_sim(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(neg_euclid_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), -1.41421356, epsilon = 1e-8);
        assert_abs_diff_eq!(neg_euclid_sim(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), -5.0, epsilon = 1e-15);
        assert!(neg_euclid_sim(&[1.0], &[]).is_err());
    }

    #[test]
    fn matrix_invariants() {
        assert!(EmbeddingMatrix::new(2, 2, vec![1.0; 3]).is_err());
        let m = EmbeddingMatrix::from_rows(&[vec![3.0, 4.0], vec![0.0, 2.0]]).unwrap();
        assert!(!m.is_normalized());
        let n = m.normalized().unwrap();
        assert!(n.is_normalized());
        assert_eq!(n.row(1), &[0.0, 1.0]);

        let z = EmbeddingMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(matches!(z.normalized(), Err(Error::DegenerateRow(0))));
        assert!(EmbeddingMatrix::new_normalized(1, 2, vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn subspace_view_covers_contiguous_range() {
        let m = EmbeddingMatrix::new(2, 6, (0..12).map(f64::from).collect()).unwrap();
        let v = m.subspace(1, 3).unwrap();
        assert_eq!(v.sub_dim(), 2);
        assert_eq!(v.row(0), &[2.0, 3.0]);
        assert_eq!(v.row(1), &[8.0, 9.0]);
        assert_eq!(v.to_matrix().data(), &[2.0, 3.0, 8.0, 9.0]);
        assert!(m.subspace(0, 4).is_err());
        assert!(m.subspace(3, 3).is_err());
    }

    fn vec_and_m() -> impl Strategy<Value = (Vec<f64>, usize)> {
        (1usize..6, 1usize..6).prop_flat_map(|(m, sd)| (proptest::collection::vec(-10.0f64..10.0, m * sd), Just(m)))
    }

    proptest! {
        #[test]
        fn split_concat_round_trip((v, m) in vec_and_m()) {
            let parts = split_subvectors(&v, m).unwrap();
            prop_assert_eq!(parts.len(), m);
            let joined: Vec<f64> = parts.concat();
            prop_assert_eq!(joined, v);
        }

        #[test]
        fn cosine_self_and_scale(
            a in proptest::collection::vec(-10.0f64..10.0, 1..12),
            c in 0.01f64..100.0,
            c2 in 0.01f64..100.0,
        ) {
            prop_assume!(norm(&a) > 1e-3);
            prop_assert!((cosine_sim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
            let b: Vec<f64> = a.iter().rev().map(|x| x + 0.5).collect();
            prop_assume!(norm(&b) > 1e-3);
            let scaled_a: Vec<f64> = a.iter().map(|x| x * c).collect();
            let scaled_b: Vec<f64> = b.iter().map(|x| x * c2).collect();
            let base = cosine_sim(&a, &b).unwrap();
            prop_assert!((cosine_sim(&scaled_a, &scaled_b).unwrap() - base).abs() < 1e-9);
            prop_assert!((cosine_sim(&b, &a).unwrap() - base).abs() < 1e-15);
        }

        #[test]
        fn neg_euclid_nonpositive(
            a in proptest::collection::vec(-10.0f64..10.0, 1..8),
            shift in -1.0f64..1.0,
        ) {
            let b: Vec<f64> = a.iter().map(|x| x + shift).collect();
            let s = neg_euclid_sim(&a, &b).unwrap();
            prop_assert!(s <= 0.0);
            prop_assert_eq!(s == 0.0, a == b);
            prop_assert_eq!(neg_euclid_sim(&a, &a).unwrap(), 0.0);
        }
    }
}
