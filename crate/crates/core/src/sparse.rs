//! Sparse vectors, index masks and Top-Q sparsification.
//!
//! A [`SparseVector`] stores a `d`-dimensional real vector as parallel arrays of
//! strictly increasing indices and nonzero values. Every constructor and every
//! operation returns canonical form: sorted indices, no stored zeros. Values
//! that cancel to exactly `0.0` are dropped; tiny values are kept as-is so that
//! nonzero counts (and therefore transmission costs) are never altered by an
//! epsilon threshold.
//!
//! A [`Mask`] is a sorted index set over `0..d`.

use std::cmp::Ordering;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    dim: usize,
    indices: Vec<usize>,
}

fn check_sorted(dim: usize, indices: &[usize]) -> Result<()> {
    for (pos, &i) in indices.iter().enumerate() {
        if i >= dim {
            return Err(Error::IndexOutOfRange { index: i, dim });
        }
        if pos > 0 && indices[pos - 1] >= i {
            return Err(Error::UnsortedIndices { position: pos });
        }
    }
    Ok(())
}

/// Orders entries by descending magnitude, then ascending index.
fn magnitude_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0))
}

/// Positions (into `entries`) of the `q` largest-magnitude entries, sorted by index.
fn top_positions(entries: &[(usize, f64)], q: usize) -> Vec<usize> {
    if q == 0 {
        return Vec::new();
    }
    let mut order: Vec<(usize, f64)> = entries.to_vec();
    if q < order.len() {
        order.select_nth_unstable_by(q - 1, |a, b| magnitude_order(*a, *b));
        order.truncate(q);
    }
    let mut keep: Vec<usize> = order.into_iter().map(|(i, _)| i).collect();
    keep.sort_unstable();
    keep
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        let (indices, nonzero) = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        Self {
            dim: values.len(),
            indices,
            values: nonzero,
        }
    }

    /// Builds a vector from `(index, value)` pairs given in strictly increasing
    /// index order. Zero values are dropped.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let (indices, values): (Vec<usize>, Vec<f64>) = pairs.into_iter().unzip();
        check_sorted(dim, &indices)?;
        Ok(Self::from_sorted_unchecked(dim, indices, values))
    }

    /// Caller guarantees sorted, in-range indices; zeros are filtered here.
    fn from_sorted_unchecked(dim: usize, indices: Vec<usize>, values: Vec<f64>) -> Self {
        if values.iter().all(|v| *v != 0.0) {
            return Self { dim, indices, values };
        }
        let (indices, values) = indices.into_iter().zip(values).filter(|(_, v)| *v != 0.0).unzip();
        Self { dim, indices, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored (nonzero) entries.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn support(&self) -> Mask {
        Mask {
            dim: self.dim,
            indices: self.indices.clone(),
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn scale(&self, factor: f64) -> Self {
        let values = self.values.iter().map(|v| v * factor).collect();
        Self::from_sorted_unchecked(self.dim, self.indices.clone(), values)
    }

    /// Element-wise sum. Entries cancelling to exactly zero are dropped.
    pub fn add(&self, other: &SparseVector) -> Result<Self> {
        self.merge(other, 1.0)
    }

    /// Element-wise difference `self - other`.
    pub fn sub(&self, other: &SparseVector) -> Result<Self> {
        self.merge(other, -1.0)
    }

    fn merge(&self, other: &SparseVector, sign: f64) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        let (mut a, mut b) = (0, 0);
        while a < self.nnz() || b < other.nnz() {
            let ia = self.indices.get(a).copied().unwrap_or(usize::MAX);
            let ib = other.indices.get(b).copied().unwrap_or(usize::MAX);
            let (idx, v) = match ia.cmp(&ib) {
                Ordering::Less => {
                    a += 1;
                    (ia, self.values[a - 1])
                }
                Ordering::Greater => {
                    b += 1;
                    (ib, sign * other.values[b - 1])
                }
                Ordering::Equal => {
                    a += 1;
                    b += 1;
                    (ia, self.values[a - 1] + sign * other.values[b - 1])
                }
            };
            if v != 0.0 {
                indices.push(idx);
                values.push(v);
            }
        }
        Ok(Self {
            dim: self.dim,
            indices,
            values,
        })
    }

    /// Keeps the `q` largest-magnitude entries. Equal magnitudes are resolved
    /// in favour of the lower index. With `q >= nnz` the vector is returned
    /// unchanged.
    pub fn top_q(&self, q: usize) -> Self {
        if q >= self.nnz() {
            return self.clone();
        }
        if q == 0 {
            return Self::zeros(self.dim);
        }
        let entries: Vec<(usize, f64)> = (0..self.nnz()).map(|p| (p, self.values[p])).collect();
        let keep = top_positions(&entries, q);
        Self {
            dim: self.dim,
            indices: keep.iter().map(|&p| self.indices[p]).collect(),
            values: keep.iter().map(|&p| self.values[p]).collect(),
        }
    }

    /// Support of [`SparseVector::top_q`].
    pub fn top_q_mask(&self, q: usize) -> Mask {
        if q >= self.nnz() {
            return self.support();
        }
        let entries: Vec<(usize, f64)> = self.iter().collect();
        Mask {
            dim: self.dim,
            indices: top_positions(&entries, q),
        }
    }

    /// Hadamard product with the indicator of `mask`.
    pub fn masked(&self, mask: &Mask) -> Result<Self> {
        self.filter_by(mask, true)
    }

    /// Hadamard product with the indicator of the complement of `mask`.
    pub fn masked_complement(&self, mask: &Mask) -> Result<Self> {
        self.filter_by(mask, false)
    }

    fn filter_by(&self, mask: &Mask, keep_members: bool) -> Result<Self> {
        check_dim(self.dim, mask.dim)?;
        let mut m = mask.indices.iter().peekable();
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, v) in self.iter() {
            while m.next_if(|&&j| j < i).is_some() {}
            let member = m.peek().is_some_and(|&&j| j == i);
            if member == keep_members {
                indices.push(i);
                values.push(v);
            }
        }
        Ok(Self {
            dim: self.dim,
            indices,
            values,
        })
    }
}

impl Mask {
    pub fn new(dim: usize, indices: Vec<usize>) -> Result<Self> {
        check_sorted(dim, &indices)?;
        Ok(Self { dim, indices })
    }

    /// Sorts and deduplicates `indices` before validating the range.
    pub fn from_unsorted(dim: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(dim, indices)
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
        }
    }

    pub fn full(dim: usize) -> Self {
        Self {
            dim,
            indices: (0..dim).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// Position of `index` within the ascending mask, if present.
    pub fn rank_of(&self, index: usize) -> Option<usize> {
        self.indices.binary_search(&index).ok()
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        check_dim(self.dim, other.dim)?;
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut a, mut b) = (self.indices.iter().peekable(), other.indices.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&x), Some(&&y)) => match x.cmp(&y) {
                    Ordering::Less => {
                        out.push(x);
                        a.next();
                    }
                    Ordering::Greater => {
                        out.push(y);
                        b.next();
                    }
                    Ordering::Equal => {
                        out.push(x);
                        a.next();
                        b.next();
                    }
                },
                (Some(&&x), None) => {
                    out.push(x);
                    a.next();
                }
                (None, Some(&&y)) => {
                    out.push(y);
                    b.next();
                }
                (None, None) => break,
            }
        }
        Ok(Mask {
            dim: self.dim,
            indices: out,
        })
    }

    /// Set difference `self \ other`.
    pub fn difference(&self, other: &Mask) -> Result<Mask> {
        check_dim(self.dim, other.dim)?;
        let indices = self.indices.iter().copied().filter(|i| !other.contains(*i)).collect();
        Ok(Mask { dim: self.dim, indices })
    }

    pub fn is_disjoint(&self, other: &Mask) -> bool {
        self.indices.iter().all(|i| !other.contains(*i))
    }
}

/// Top-Q mask of a dense vector; only nonzero entries are eligible.
pub fn top_q_mask_dense(values: &[f64], q: usize) -> Mask {
    SparseVector::from_dense(values).top_q_mask(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(values: &[f64]) -> SparseVector {
        SparseVector::from_dense(values)
    }

    fn mask(dim: usize, idx: &[usize]) -> Mask {
        Mask::new(dim, idx.to_vec()).unwrap()
    }

    #[test]
    fn top_q_keeps_largest_magnitudes() {
        assert_eq!(
            sv(&[3.0, -5.0, 1.0, 0.5]).top_q(2).to_dense(),
            vec![3.0, -5.0, 0.0, 0.0]
        );
        assert!(sv(&[3.0, -5.0, 1.0, 0.5]).top_q(0).is_zero());
    }

    #[test]
    fn top_q_ties_prefer_lower_index() {
        assert_eq!(sv(&[2.0, -2.0, 1.0, 0.0]).top_q(1).to_dense(), vec![2.0, 0.0, 0.0, 0.0]);
        assert_eq!(sv(&[0.0, -2.0, 2.0, 2.0]).top_q(2).indices(), &[1, 2]);
    }

    #[test]
    fn top_q_mask_examples() {
        assert_eq!(sv(&[3.0, -5.0, 1.0, 0.5]).top_q_mask(2).indices(), &[0, 1]);
        assert!(SparseVector::zeros(4).top_q_mask(5).is_empty());
        assert_eq!(sv(&[0.0, 0.0, 7.0, 0.0]).top_q_mask(3).indices(), &[2]);
    }

    #[test]
    fn support_examples() {
        assert_eq!(sv(&[0.0, 4.0, 0.0]).support().indices(), &[1]);
        assert!(sv(&[0.0, 0.0]).support().is_empty());
        assert_eq!(sv(&[1.0, 1.0, 1.0]).support().indices(), &[0, 1, 2]);
    }

    #[test]
    fn mask_algebra() {
        assert_eq!(mask(3, &[0, 1]).union(&mask(3, &[1, 2])).unwrap().indices(), &[0, 1, 2]);
        assert_eq!(Mask::empty(3).union(&mask(3, &[2])).unwrap(), mask(3, &[2]));
        assert_eq!(mask(3, &[0]).union(&mask(3, &[0])).unwrap(), mask(3, &[0]));
        assert_eq!(
            mask(3, &[0, 1, 2]).difference(&mask(3, &[1])).unwrap(),
            mask(3, &[0, 2])
        );
        let m = mask(3, &[0, 2]);
        assert_eq!(m.difference(&Mask::empty(3)).unwrap(), m);
        assert!(m.difference(&m).unwrap().is_empty());
        assert!(mask(3, &[0]).union(&Mask::empty(4)).is_err());
    }

    #[test]
    fn apply_mask_and_complement() {
        let v = sv(&[5.0, 6.0, 7.0]);
        assert_eq!(v.masked(&mask(3, &[0, 2])).unwrap().to_dense(), vec![5.0, 0.0, 7.0]);
        assert!(v.masked(&Mask::empty(3)).unwrap().is_zero());
        assert_eq!(v.masked(&Mask::full(3)).unwrap(), v);
        let w = sv(&[5.0, 6.0]);
        assert_eq!(w.masked_complement(&mask(2, &[0])).unwrap().to_dense(), vec![0.0, 6.0]);
        assert!(w.masked_complement(&Mask::full(2)).unwrap().is_zero());
        assert_eq!(w.masked_complement(&Mask::empty(2)).unwrap(), w);
    }

    #[test]
    fn arithmetic() {
        let s = sv(&[1.0, 0.0, 2.0]).add(&sv(&[0.0, 3.0, 1.0])).unwrap();
        assert_eq!(s.to_dense(), vec![1.0, 3.0, 3.0]);
        let z = sv(&[1.0, 0.0]).add(&sv(&[-1.0, 0.0])).unwrap();
        assert_eq!(z.nnz(), 0);
        assert_eq!(sv(&[3.0, 4.0]).sq_norm(), 25.0);
        assert!(sv(&[1.0]).add(&sv(&[1.0, 2.0])).is_err());
        assert!(sv(&[1.0, 2.0]).scale(0.0).is_zero());
    }

    #[test]
    fn near_zero_values_are_kept() {
        let s = sv(&[1.0, 1e-300]).add(&sv(&[0.0, 1e-300])).unwrap();
        assert_eq!(s.nnz(), 2);
    }

    #[test]
    fn constructors_validate() {
        assert!(SparseVector::from_pairs(3, [(2, 1.0), (1, 1.0)]).is_err());
        assert!(SparseVector::from_pairs(3, [(3, 1.0)]).is_err());
        assert_eq!(SparseVector::from_pairs(3, [(0, 0.0), (2, 1.0)]).unwrap().nnz(), 1);
        assert!(Mask::new(3, vec![1, 1]).is_err());
        assert_eq!(Mask::from_unsorted(4, vec![3, 1, 3]).unwrap().indices(), &[1, 3]);
    }
}
