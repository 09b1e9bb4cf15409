//! Sum spectral efficiency, output normalizations, and classical precoders
//! (WMMSE, the optimal-structure recovery, MRT, zero-forcing, and a
//! random-phase hybrid baseline).
//!
//! Precoders are `N × K` complex matrices whose column `k` serves user `k`.
//! A hybrid precoder `(V_RF, V_BB)` with `V_RF: N_RF × N` and
//! `V_BB: K × N_RF` acts as the effective precoder `V = V_RFᵀ V_BBᵀ`.

mod baselines;
mod batch;
mod metric;
mod structure;
mod wmmse;

pub use baselines::{mrt, random_phase_zf, zero_forcing};
pub use batch::{
    stack_channels, tape_normalize_hybrid, tape_normalize_power, tape_sum_se, unstack_precoders,
    HybridOutput,
};
pub use metric::{normalize_hybrid, normalize_power, se_ratio, sum_se, user_rates};
pub use structure::structure_recover;
pub use wmmse::{wmmse, WmmseOptions, WmmseOutput};

use crate::error::{dim_err, Error, Result};
use crate::numkit::ComplexMatrix;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrecoder<T: Scalar> {
    /// `N_RF × N`, unit-modulus after normalization.
    pub v_rf: ComplexMatrix<T>,
    /// `K × N_RF`.
    pub v_bb: ComplexMatrix<T>,
}

impl<T: Scalar> HybridPrecoder<T> {
    /// Effective `N × K` precoder `V_RFᵀ V_BBᵀ`.
    pub fn effective(&self) -> ComplexMatrix<T> {
        self.v_bb
            .matmul(&self.v_rf)
            .expect("hybrid factors are shape-checked at construction")
            .t()
    }

    pub fn n_rf(&self) -> usize {
        self.v_rf.rows()
    }
}

/// User powers `p` and dual weights `λ` of the optimal-structure precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation<T> {
    p: Vec<T>,
    lambda: Vec<T>,
}

impl<T: Scalar> PowerAllocation<T> {
    /// Both vectors must be positive and sum to `pt` (within 1e-9 relative).
    pub fn new(p: Vec<T>, lambda: Vec<T>, pt: T) -> Result<Self> {
        if p.len() != lambda.len() || p.is_empty() {
            return Err(dim_err(format!("p has {} entries, lambda {}", p.len(), lambda.len())));
        }
        if p.iter().chain(&lambda).any(|&x| !(x > T::zero())) {
            return Err(Error::Domain("powers and dual weights must be positive".into()));
        }
        let tol = T::of(1e-9) * pt.max(T::one());
        for (name, v) in [("p", &p), ("lambda", &lambda)] {
            let s: T = v.iter().copied().sum();
            if (s - pt).abs() > tol {
                return Err(Error::Domain(format!("sum of {name} is {s}, expected {pt}")));
            }
        }
        Ok(Self { p, lambda })
    }

    /// Equal split of `pt` over `k` users for both vectors.
    pub fn uniform(k: usize, pt: T) -> Result<Self> {
        let share = pt / T::of(k as f64);
        Self::new(vec![share; k], vec![share; k], pt)
    }

    pub fn p(&self) -> &[T] {
        &self.p
    }

    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }

    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            p: order.iter().map(|&i| self.p[i]).collect(),
            lambda: order.iter().map(|&i| self.lambda[i]).collect(),
        }
    }
}
