use super::PowerAllocation;
use crate::error::{dim_err, Error, Result};
use crate::numkit::ComplexMatrix;
use crate::Scalar;

/// `V = (I + σ⁻² H Λ Hᴴ)⁻¹ H P^{1/2}` where `P` rescales each column to power
/// `p_k`: `P_kk = p_k / ‖(I + σ⁻² H Λ Hᴴ)⁻¹ h_k‖²`.
pub fn structure_recover<T: Scalar>(
    h: &ComplexMatrix<T>,
    alloc: &PowerAllocation<T>,
    sigma2: T,
) -> Result<ComplexMatrix<T>> {
    let (n, k) = (h.rows(), h.cols());
    if alloc.p().len() != k {
        return Err(dim_err(format!("{} users in channel, {} in allocation", k, alloc.p().len())));
    }
    if !(sigma2 > T::zero()) {
        return Err(Error::Domain(format!("noise power must be positive, got {sigma2}")));
    }
    let mut hl = h.clone();
    for (u, &l) in alloc.lambda().iter().enumerate() {
        let col: Vec<_> = h.col(u).into_iter().map(|z| z * (l / sigma2)).collect();
        hl.set_col(u, &col);
    }
    let m = ComplexMatrix::identity(n).add(&hl.matmul(&h.h())?)?;
    let mut x = m.solve(h)?;
    for (u, &p) in alloc.p().iter().enumerate() {
        let s = (p / x.col_norm_sq(u)).sqrt();
        let col: Vec<_> = x.col(u).into_iter().map(|z| z * s).collect();
        x.set_col(u, &col);
    }
    Ok(x)
}
