//! Row-major feature matrices and the handful of vector kernels the
//! classifiers need.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A row-major `rows × dim` matrix of finite values.
///
/// The only zero-row matrix that can be built is [`FeatureMatrix::empty`],
/// which stands for an empty query set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    rows: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(rows: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invariant("dim", "must be positive"));
        }
        if rows == 0 {
            return Err(Error::Empty {
                what: "feature matrix",
            });
        }
        if data.len() != rows * dim {
            return Err(Error::invariant(
                "data",
                format!("length {} != rows {} × dim {}", data.len(), rows, dim),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(Self { rows, dim, data })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty {
            what: "feature matrix",
        })?;
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    /// Zero-row matrix of the given width.
    pub fn empty(dim: usize) -> Self {
        Self {
            rows: 0,
            dim,
            data: Vec::new(),
        }
    }

    /// Gathers `indices` from row-major binary32 storage of width `dim`.
    pub fn gather_f32(source: &[f32], dim: usize, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * dim);
        for &i in indices {
            let row = source
                .get(i * dim..(i + 1) * dim)
                .ok_or_else(|| Error::invariant("row index", format!("{i} out of range")))?;
            data.extend(row.iter().map(|&v| T::from_f32_value(v)));
        }
        Self::new(indices.len(), dim, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Column-wise arithmetic mean.
    pub fn column_mean(&self) -> Result<Vec<T>> {
        if self.rows == 0 {
            return Err(Error::Empty {
                what: "feature matrix",
            });
        }
        let mut acc = vec![T::zero(); self.dim];
        for row in self.iter_rows() {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let n = T::from_usize(self.rows).expect("row count representable");
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }

    /// Returns a copy with rows reordered by `order`.
    pub fn select_rows(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(order.len() * self.dim);
        for &i in order {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: order.len(),
            dim: self.dim,
            data,
        }
    }

    pub fn cast<U: Scalar>(&self) -> FeatureMatrix<U> {
        FeatureMatrix {
            rows: self.rows,
            dim: self.dim,
            data: self.data.iter().map(|v| U::lit(v.to_f64_value())).collect(),
        }
    }

    pub(crate) fn from_parts_unchecked(rows: usize, dim: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * dim);
        Self { rows, dim, data }
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim != expected {
            return Err(Error::DimMismatch {
                expected,
                actual: self.dim,
            });
        }
        Ok(())
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn l2_norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Cosine similarity given precomputed norms, clamped to `[-1, 1]`.
pub(crate) fn cosine_with_norms<T: Scalar>(a: &[T], b: &[T], norm_a: T, norm_b: T) -> T {
    let c = dot(a, b) / (norm_a * norm_b);
    c.max(-T::one()).min(T::one())
}

/// Index of the largest entry, lowest index on exact ties.
pub(crate) fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax, written into `out`.
pub(crate) fn softmax_into<T: Scalar>(logits: &[T], out: &mut [T]) {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |m, v| m.max(v));
    let mut total = T::zero();
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Pairwise (cascade) summation of equal-length rows, accumulated in `T`.
///
/// Blocks of up to 32 rows are summed naively; blocks are then combined as
/// a balanced binary tree, giving O(ε log n) error growth.
pub fn pairwise_row_sum<S: Scalar, T: Scalar>(rows: &[&[S]], dim: usize) -> Vec<T> {
    const BLOCK: usize = 32;
    if rows.len() <= BLOCK {
        let mut acc = vec![T::zero(); dim];
        for r in rows {
            for (a, &x) in acc.iter_mut().zip(r.iter()) {
                *a += T::lit(x.to_f64_value());
            }
        }
        return acc;
    }
    let mid = rows.len() / 2;
    let mut left = pairwise_row_sum::<S, T>(&rows[..mid], dim);
    let right = pairwise_row_sum::<S, T>(&rows[mid..], dim);
    for (l, r) in left.iter_mut().zip(right) {
        *l += r;
    }
    left
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_ragged() {
        assert!(matches!(
            FeatureMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(matches!(
            FeatureMatrix::from_rows(&rows),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }

    #[test]
    fn softmax_closed_form() {
        let mut out = [0.0f64; 2];
        softmax_into(&[0.0, -(3.0f64.ln())], &mut out);
        assert!((out[0] - 0.75).abs() < 1e-12);
        assert!((out[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn softmax_ignores_constant_offsets() {
        let mut a = [0.0f64; 3];
        let mut b = [0.0f64; 3];
        softmax_into(&[-0.3, -1.1, -0.7], &mut a);
        softmax_into(&[-0.7, -1.5, -1.1], &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_integers() {
        let rows: Vec<Vec<f64>> = (0..1000).map(|i| vec![i as f64, 1.0]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        assert_eq!(
            pairwise_row_sum::<f64, f64>(&refs, 2),
            vec![499_500.0, 1000.0]
        );
    }
}
