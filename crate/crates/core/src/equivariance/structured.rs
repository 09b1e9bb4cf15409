use rand::Rng;

use crate::error::{dim_err, Result};
use crate::numkit::Tensor;
use crate::Scalar;

/// Block matrix over `blocks × blocks` blocks of size `J_out × J_in`, with
/// every diagonal block equal to `w1` and every off-diagonal block to `w2`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredWeight<T: Scalar> {
    w1: Tensor<T>,
    w2: Tensor<T>,
    blocks: usize,
}

impl<T: Scalar> StructuredWeight<T> {
    /// `w1`, `w2` are `[J_out, J_in]`.
    pub fn new(w1: Tensor<T>, w2: Tensor<T>, blocks: usize) -> Result<Self> {
        if w1.rank() != 2 || w1.shape() != w2.shape() || blocks == 0 {
            return Err(dim_err(format!(
                "structured weight with blocks {:?} / {:?} over {blocks} blocks",
                w1.shape(),
                w2.shape()
            )));
        }
        Ok(Self { w1, w2, blocks })
    }

    pub fn random<R: Rng + ?Sized>(j_out: usize, j_in: usize, blocks: usize, rng: &mut R) -> Self {
        let bound = T::one() / T::of((blocks * j_in) as f64).sqrt();
        Self {
            w1: Tensor::uniform(&[j_out, j_in], bound, rng),
            w2: Tensor::uniform(&[j_out, j_in], bound, rng),
            blocks,
        }
    }

    pub fn w1(&self) -> &Tensor<T> {
        &self.w1
    }

    pub fn w2(&self) -> &Tensor<T> {
        &self.w2
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn j_out(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn j_in(&self) -> usize {
        self.w1.shape()[1]
    }

    /// Same block parameters over a different number of blocks.
    pub fn with_blocks(&self, blocks: usize) -> Result<Self> {
        Self::new(self.w1.clone(), self.w2.clone(), blocks)
    }

    /// Dense `blocks·J_out × blocks·J_in` matrix.
    pub fn materialize(&self) -> Tensor<T> {
        let (jo, ji, n) = (self.j_out(), self.j_in(), self.blocks);
        let cols = n * ji;
        Tensor::from_fn(&[n * jo, cols], |k| {
            let (r, c) = (k / cols, k % cols);
            let w = if r / jo == c / ji { &self.w1 } else { &self.w2 };
            w.data()[(r % jo) * ji + c % ji]
        })
    }

    /// `y_n = (W1 − W2) x_n + W2 Σ_i x_i` for a stacked vector of `blocks`
    /// blocks. The block sum is taken in sorted order per component, so the
    /// result is bit-for-bit equivariant to reordering the blocks.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        let (jo, ji, n) = (self.j_out(), self.j_in(), self.blocks);
        if x.len() != n * ji {
            return Err(dim_err(format!(
                "structured weight over {n} blocks of {ji} applied to length {}",
                x.len()
            )));
        }
        let mut sum = vec![T::zero(); ji];
        let mut column = Vec::with_capacity(n);
        for (j, s) in sum.iter_mut().enumerate() {
            column.clear();
            column.extend((0..n).map(|b| x[b * ji + j]));
            column.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            *s = column.iter().fold(T::zero(), |acc, &v| acc + v);
        }
        let (w1, w2) = (self.w1.data(), self.w2.data());
        let shared: Vec<T> = (0..jo)
            .map(|o| (0..ji).fold(T::zero(), |acc, j| acc + w2[o * ji + j] * sum[j]))
            .collect();
        let mut y = Vec::with_capacity(n * jo);
        for b in 0..n {
            let xb = &x[b * ji..(b + 1) * ji];
            for o in 0..jo {
                let own = (0..ji).fold(T::zero(), |acc, j| acc + (w1[o * ji + j] - w2[o * ji + j]) * xb[j]);
                y.push(own + shared[o]);
            }
        }
        Ok(y)
    }
}
