use num_complex::Complex;

use super::HybridPrecoder;
use crate::error::{dim_err, Error, Result};
use crate::numkit::{inner, ComplexMatrix};
use crate::Scalar;

fn check_pair<T: Scalar>(h: &ComplexMatrix<T>, v: &ComplexMatrix<T>, sigma2: T) -> Result<()> {
    if !(sigma2 > T::zero()) {
        return Err(Error::Domain(format!("noise power must be positive, got {sigma2}")));
    }
    if h.rows() != v.rows() || h.cols() != v.cols() {
        return Err(dim_err(format!(
            "channel {}x{} vs precoder {}x{}",
            h.rows(),
            h.cols(),
            v.rows(),
            v.cols()
        )));
    }
    Ok(())
}

/// Per-user rates `log2(1 + SINR_k)` in bits/s/Hz.
pub fn user_rates<T: Scalar>(h: &ComplexMatrix<T>, v: &ComplexMatrix<T>, sigma2: T) -> Result<Vec<T>> {
    check_pair(h, v, sigma2)?;
    let k = h.cols();
    let vcols: Vec<_> = (0..k).map(|i| v.col(i)).collect();
    Ok((0..k)
        .map(|u| {
            let hu = h.col(u);
            let mut signal = T::zero();
            let mut interference = T::zero();
            for (i, vi) in vcols.iter().enumerate() {
                let g = inner(&hu, vi).norm_sqr();
                if i == u {
                    signal = g;
                } else {
                    interference += g;
                }
            }
            (T::one() + signal / (interference + sigma2)).log2()
        })
        .collect())
}

pub fn sum_se<T: Scalar>(h: &ComplexMatrix<T>, v: &ComplexMatrix<T>, sigma2: T) -> Result<T> {
    Ok(user_rates(h, v, sigma2)?.into_iter().sum())
}

pub fn se_ratio<T: Scalar>(
    h: &ComplexMatrix<T>,
    v_dnn: &ComplexMatrix<T>,
    v_ref: &ComplexMatrix<T>,
    sigma2: T,
) -> Result<T> {
    let r = sum_se(h, v_ref, sigma2)?;
    if !(r > T::zero()) {
        return Err(Error::Domain(format!("reference SE is {r}")));
    }
    Ok(sum_se(h, v_dnn, sigma2)? / r)
}

/// Scales `v` so that `Tr(VᴴV) = pt`.
pub fn normalize_power<T: Scalar>(v: &ComplexMatrix<T>, pt: T) -> Result<ComplexMatrix<T>> {
    let e = v.frobenius_sq();
    if !(e > T::zero()) || !e.is_finite() {
        return Err(Error::Degenerate(format!("cannot normalize a precoder with power {e}")));
    }
    Ok(v.scale((pt / e).sqrt()))
}

/// Projects `V_RF` entries onto the unit circle and rescales `V_BB` so the
/// effective precoder carries power `pt`.
pub fn normalize_hybrid<T: Scalar>(
    v_rf: &ComplexMatrix<T>,
    v_bb: &ComplexMatrix<T>,
    pt: T,
) -> Result<HybridPrecoder<T>> {
    if v_bb.cols() != v_rf.rows() {
        return Err(dim_err(format!(
            "V_BB {}x{} does not chain with V_RF {}x{}",
            v_bb.rows(),
            v_bb.cols(),
            v_rf.rows(),
            v_rf.cols()
        )));
    }
    let mut rf = ComplexMatrix::zeros(v_rf.rows(), v_rf.cols());
    for i in 0..v_rf.rows() {
        for j in 0..v_rf.cols() {
            let z = v_rf.get(i, j);
            let m = z.norm();
            if !(m > T::zero()) || !m.is_finite() {
                return Err(Error::Degenerate(format!("V_RF entry ({i}, {j}) has modulus {m}")));
            }
            rf.set(i, j, Complex::new(z.re / m, z.im / m));
        }
    }
    let eff = v_bb.matmul(&rf)?;
    let e = eff.frobenius_sq();
    if !(e > T::zero()) || !e.is_finite() {
        return Err(Error::Degenerate(format!("effective precoder power is {e}")));
    }
    Ok(HybridPrecoder {
        v_rf: rf,
        v_bb: v_bb.scale((pt / e).sqrt()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix<f64> {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn domain_and_shape_errors() {
        let h = ComplexMatrix::<f64>::identity(2);
        assert!(matches!(sum_se(&h, &h, 0.0), Err(Error::Domain(_))));
        let v = ComplexMatrix::zeros(3, 2);
        assert!(matches!(sum_se(&h, &v, 1.0), Err(Error::Dimension(_))));
        assert!(matches!(normalize_power(&v, 1.0), Err(Error::Degenerate(_))));
        assert!(matches!(se_ratio(&h, &h, &ComplexMatrix::zeros(2, 2), 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn normalize_power_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random(5, 3, &mut rng);
        let a = normalize_power(&v, 2.0).unwrap();
        assert!((a.frobenius_sq() - 2.0).abs() < 1e-12);
        let b = normalize_power(&v.scale(2.0), 2.0).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
        let c = normalize_power(&a, 2.0).unwrap();
        assert!(a.max_abs_diff(&c) < 1e-15);
    }

    #[test]
    fn hybrid_zero_modulus_rejected() {
        let rf = ComplexMatrix::<f64>::zeros(2, 3);
        let bb = ComplexMatrix::identity(2);
        assert!(matches!(normalize_hybrid(&rf, &bb, 1.0), Err(Error::Degenerate(_))));
    }
}
