use num_complex::Complex;
use rand::Rng;

use super::metric::{normalize_hybrid, normalize_power};
use super::HybridPrecoder;
use crate::error::{dim_err, Result};
use crate::numkit::ComplexMatrix;
use crate::Scalar;

/// Matched filter `V ∝ H`, total power `pt`.
pub fn mrt<T: Scalar>(h: &ComplexMatrix<T>, pt: T) -> Result<ComplexMatrix<T>> {
    normalize_power(h, pt)
}

fn equal_power_columns<T: Scalar>(mut v: ComplexMatrix<T>, pt: T) -> ComplexMatrix<T> {
    let share = pt / T::of(v.cols() as f64);
    for u in 0..v.cols() {
        let s = (share / v.col_norm_sq(u)).sqrt();
        let col: Vec<_> = v.col(u).into_iter().map(|z| z * s).collect();
        v.set_col(u, &col);
    }
    v
}

/// Zero-forcing directions `H (HᴴH)⁻¹` with power split equally over users.
pub fn zero_forcing<T: Scalar>(h: &ComplexMatrix<T>, pt: T) -> Result<ComplexMatrix<T>> {
    if h.cols() > h.rows() {
        return Err(dim_err(format!("zero-forcing needs K <= N, got K={} N={}", h.cols(), h.rows())));
    }
    let gram = h.h().matmul(h)?;
    let dirs = h.matmul(&gram.inverse()?)?;
    Ok(equal_power_columns(dirs, pt))
}

/// Random unit-modulus analog stage followed by zero-forcing on the
/// effective channel `conj(V_RF) H`.
pub fn random_phase_zf<T: Scalar, R: Rng + ?Sized>(
    h: &ComplexMatrix<T>,
    n_rf: usize,
    pt: T,
    rng: &mut R,
) -> Result<HybridPrecoder<T>> {
    let (n, k) = (h.rows(), h.cols());
    if k > n_rf {
        return Err(dim_err(format!("zero-forcing baseband needs K <= N_RF, got K={k} N_RF={n_rf}")));
    }
    let v_rf = ComplexMatrix::from_fn(n_rf, n, |_, _| {
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        Complex::new(T::of(phi.cos()), T::of(phi.sin()))
    });
    let h_eff = v_rf.conj().matmul(h)?;
    let b = zero_forcing(&h_eff, pt)?;
    normalize_hybrid(&v_rf, &b.t(), pt)
}
