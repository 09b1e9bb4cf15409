use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::metric::{normalize_power, sum_se};
use crate::error::{Error, Result};
use crate::numkit::{inner, sym_eigen, ComplexMatrix};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WmmseOptions {
    pub max_iters: usize,
    /// Stop once the sum SE changes by less than this between iterations.
    pub tol: f64,
}

impl Default for WmmseOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WmmseOutput<T: Scalar> {
    /// Highest-SE iterate.
    pub v: ComplexMatrix<T>,
    pub se: T,
    /// Sum SE of the initial point followed by every iterate.
    pub history: Vec<T>,
}

/// Weighted MMSE sum-rate maximization under a total power constraint,
/// started from power-normalized MRT.
pub fn wmmse<T: Scalar>(h: &ComplexMatrix<T>, pt: T, sigma2: T, opts: &WmmseOptions) -> Result<WmmseOutput<T>> {
    if opts.max_iters == 0 {
        return Err(Error::Config("WMMSE needs max_iters >= 1".into()));
    }
    if !(pt > T::zero()) {
        return Err(Error::Domain(format!("transmit power must be positive, got {pt}")));
    }
    let (n, k) = (h.rows(), h.cols());
    let hcols: Vec<_> = (0..k).map(|i| h.col(i)).collect();
    let mut v = normalize_power(h, pt)?;
    let mut se = sum_se(h, &v, sigma2)?;
    let mut history = vec![se];
    let mut best = (v.clone(), se);
    let tiny = T::of(1e-300);
    for _ in 0..opts.max_iters {
        let vcols: Vec<_> = (0..k).map(|i| v.col(i)).collect();
        let mut a = ComplexMatrix::zeros(n, n);
        let mut b = ComplexMatrix::zeros(n, k);
        for u in 0..k {
            let g: Vec<Complex<T>> = vcols.iter().map(|vi| inner(&hcols[u], vi)).collect();
            let total: T = g.iter().map(|z| z.norm_sqr()).sum::<T>() + sigma2;
            let recv = g[u] / total;
            let mse = (T::one() - g[u].norm_sqr() / total).max(tiny);
            let w = T::one() / mse;
            let c = w * recv.norm_sqr();
            for r in 0..n {
                for s in 0..n {
                    let z = a.get(r, s) + hcols[u][r] * hcols[u][s].conj() * c;
                    a.set(r, s, z);
                }
                b.set(r, u, hcols[u][r] * recv * w);
            }
        }
        let next = match constrained_solve(&a, &b, pt) {
            Some(x) => x,
            None => break,
        };
        let next_se = sum_se(h, &next, sigma2)?;
        if !next_se.is_finite() {
            break;
        }
        history.push(next_se);
        if next_se > best.1 {
            best = (next.clone(), next_se);
        }
        let done = (next_se - se).abs() < T::of(opts.tol);
        v = next;
        se = next_se;
        if done {
            break;
        }
    }
    Ok(WmmseOutput {
        v: best.0,
        se: best.1,
        history,
    })
}

/// `(A + μI)⁻¹ B` with the smallest `μ ≥ 0` such that `‖·‖_F² ≤ pt`, for
/// Hermitian PSD `A`. Uses the eigen-decomposition of the real embedding so
/// the multiplier search costs no further factorizations. Directions in the
/// null space of `A` that `B` does not touch are dropped (pseudo-inverse).
fn constrained_solve<T: Scalar>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>, pt: T) -> Option<ComplexMatrix<T>> {
    let (n, k) = (b.rows(), b.cols());
    let m = 2 * n;
    let emb = a.real_embedding();
    let (lam, q) = sym_eigen(emb.data(), m).ok()?;
    let lam: Vec<T> = lam.into_iter().map(|x| x.max(T::zero())).collect();
    // Real form of B: column u is [Re b_u; Im b_u].
    let br = |r: usize, u: usize| {
        let z = b.get(r % n, u);
        if r < n {
            z.re
        } else {
            z.im
        }
    };
    let mut c = vec![T::zero(); m * k];
    for j in 0..m {
        for u in 0..k {
            c[j * k + u] = (0..m).map(|r| q[r * m + j] * br(r, u)).sum();
        }
    }
    let energy: Vec<T> = (0..m).map(|j| (0..k).map(|u| c[j * k + u] * c[j * k + u]).sum()).collect();
    let total: T = energy.iter().copied().sum();
    if !(total > T::zero()) || !total.is_finite() {
        return None;
    }
    let lmax = lam.iter().copied().fold(T::zero(), T::max);
    let null = |j: usize| lam[j] <= T::of(1e-12) * lmax;
    let power = |mu: T| -> T {
        (0..m)
            .filter(|&j| !(mu == T::zero() && null(j)))
            .map(|j| energy[j] / ((lam[j] + mu) * (lam[j] + mu)))
            .sum()
    };
    let blocked = (0..m).any(|j| null(j) && energy[j] > T::of(1e-24) * total);
    let mu = if !blocked && power(T::zero()) <= pt {
        T::zero()
    } else {
        let (mut lo, mut hi) = (T::zero(), (total / pt).sqrt());
        for _ in 0..200 {
            let mid = (lo + hi) / T::of(2.0);
            if power(mid) > pt {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::epsilon() * hi {
                break;
            }
        }
        hi
    };
    let mut out = ComplexMatrix::zeros(n, k);
    for u in 0..k {
        for r in 0..n {
            let mut re = T::zero();
            let mut im = T::zero();
            for j in 0..m {
                if mu == T::zero() && null(j) {
                    continue;
                }
                let s = c[j * k + u] / (lam[j] + mu);
                re += q[r * m + j] * s;
                im += q[(r + n) * m + j] * s;
            }
            out.set(r, u, Complex::new(re, im));
        }
    }
    if mu > T::zero() {
        let e = out.frobenius_sq();
        if e > T::zero() {
            out = out.scale((pt / e).sqrt());
        }
    }
    Some(out)
}
