//! Permutations, block-structured weights, and permutation-equivariance
//! checks for trained or random models.

mod check;
mod structured;

pub use check::{check_pe, PeReport, PermKind};
pub use structured::StructuredWeight;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::numkit::{ComplexMatrix, Tensor};
use crate::Scalar;

/// Bijection on `0..n`. Applying it to a sequence gives `out[i] = x[map[i]]`,
/// which is the product with the 0/1 matrix `Π[i][map[i]] = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &m in &map {
            if m >= map.len() || std::mem::replace(&mut seen[m], true) {
                return Err(dim_err(format!("{map:?} is not a permutation")));
            }
        }
        Ok(Self { map })
    }

    pub fn identity(n: usize) -> Self {
        Self { map: (0..n).collect() }
    }

    /// Uniformly random (Fisher-Yates).
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            map.swap(i, rng.random_range(0..=i));
        }
        Self { map }
    }

    pub fn transposition(n: usize, a: usize, b: usize) -> Result<Self> {
        if a >= n || b >= n {
            return Err(dim_err(format!("transposition ({a} {b}) on {n} elements")));
        }
        let mut map: Vec<usize> = (0..n).collect();
        map.swap(a, b);
        Ok(Self { map })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &m) in self.map.iter().enumerate() {
            inv[m] = i;
        }
        Self { map: inv }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(dim_err(format!("compose permutations of {} and {}", self.len(), other.len())));
        }
        Ok(Self {
            map: self.map.iter().map(|&i| other.map[i]).collect(),
        })
    }

    pub fn apply<X: Clone>(&self, x: &[X]) -> Result<Vec<X>> {
        if x.len() != self.len() {
            return Err(dim_err(format!("permutation of {} applied to {} items", self.len(), x.len())));
        }
        Ok(self.map.iter().map(|&i| x[i].clone()).collect())
    }

    /// Applies the permutation to contiguous blocks of `block` items.
    pub fn apply_blocks<X: Clone>(&self, x: &[X], block: usize) -> Result<Vec<X>> {
        if x.len() != self.len() * block {
            return Err(dim_err(format!(
                "permutation of {} blocks of {block} applied to {} items",
                self.len(),
                x.len()
            )));
        }
        Ok(self
            .map
            .iter()
            .flat_map(|&i| x[i * block..(i + 1) * block].iter().cloned())
            .collect())
    }

    pub fn matrix<T: Scalar>(&self) -> Tensor<T> {
        let n = self.len();
        Tensor::from_fn(&[n, n], |k| if self.map[k / n] == k % n { T::one() } else { T::zero() })
    }
}

/// `Π·M`: output row `i` is row `perm[i]` of `m`.
pub fn permute_rows<T: Scalar>(m: &ComplexMatrix<T>, perm: &Permutation) -> Result<ComplexMatrix<T>> {
    if perm.len() != m.rows() {
        return Err(dim_err(format!("row permutation of {} on {} rows", perm.len(), m.rows())));
    }
    let p = perm.as_slice();
    Ok(ComplexMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(p[i], j)))
}

/// `M·Πᵀ`: output column `j` is column `perm[j]` of `m`.
pub fn permute_cols<T: Scalar>(m: &ComplexMatrix<T>, perm: &Permutation) -> Result<ComplexMatrix<T>> {
    if perm.len() != m.cols() {
        return Err(dim_err(format!("column permutation of {} on {} columns", perm.len(), m.cols())));
    }
    let p = perm.as_slice();
    Ok(ComplexMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, p[j])))
}

/// Reorders one axis of a tensor: index `i` of the output along `axis` is
/// index `perm[i]` of the input.
pub fn permute_axis<T: Scalar>(t: &Tensor<T>, axis: usize, perm: &Permutation) -> Result<Tensor<T>> {
    let shape = t.shape();
    if axis >= shape.len() || shape[axis] != perm.len() {
        return Err(dim_err(format!(
            "permutation of {} on axis {axis} of {shape:?}",
            perm.len()
        )));
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let ext = shape[axis];
    let mut out = Vec::with_capacity(t.len());
    for o in 0..outer {
        for &src in perm.as_slice() {
            let s = (o * ext + src) * inner;
            out.extend_from_slice(&t.data()[s..s + inner]);
        }
    }
    Tensor::new(shape, out)
}
