use crate::error::{dim_err, Result};
use crate::Scalar;

/// Eigen-decomposition of a real symmetric `n × n` matrix (row-major) by
/// cyclic Jacobi rotations. Returns eigenvalues and the eigenvector matrix
/// `Q` (row-major, eigenvectors in columns) with `A = Q diag(λ) Qᵀ`.
pub fn sym_eigen<T: Scalar>(a: &[T], n: usize) -> Result<(Vec<T>, Vec<T>)> {
    if a.len() != n * n {
        return Err(dim_err(format!("eigen of {} entries as {n}x{n}", a.len())));
    }
    let mut m = a.to_vec();
    let mut q = vec![T::zero(); n * n];
    for i in 0..n {
        q[i * n + i] = T::one();
    }
    let total: T = m.iter().map(|&x| x * x).sum();
    let eps = T::epsilon() * T::epsilon() * total;
    for _sweep in 0..64 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off <= eps {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = m[p * n + r];
                if apr == T::zero() {
                    continue;
                }
                let theta = (m[r * n + r] - m[p * n + p]) / (T::of(2.0) * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkr) = (m[k * n + p], m[k * n + r]);
                    m[k * n + p] = c * mkp - s * mkr;
                    m[k * n + r] = s * mkp + c * mkr;
                }
                for k in 0..n {
                    let (mpk, mrk) = (m[p * n + k], m[r * n + k]);
                    m[p * n + k] = c * mpk - s * mrk;
                    m[r * n + k] = s * mpk + c * mrk;
                }
                for k in 0..n {
                    let (qkp, qkr) = (q[k * n + p], q[k * n + r]);
                    q[k * n + p] = c * qkp - s * qkr;
                    q[k * n + r] = s * qkp + c * qkr;
                }
            }
        }
    }
    let vals = (0..n).map(|i| m[i * n + i]).collect();
    Ok((vals, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reconstructs_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 2, 5, 12] {
            let mut a = vec![0.0f64; n * n];
            for i in 0..n {
                for j in i..n {
                    let x: f64 = rng.random_range(-1.0..1.0);
                    a[i * n + j] = x;
                    a[j * n + i] = x;
                }
            }
            let (l, q) = sym_eigen(&a, n).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let rec: f64 = (0..n).map(|k| q[i * n + k] * l[k] * q[j * n + k]).sum();
                    assert!((rec - a[i * n + j]).abs() < 1e-12);
                    let orth: f64 = (0..n).map(|k| q[k * n + i] * q[k * n + j]).sum();
                    assert!((orth - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn diagonal_input() {
        let (l, _) = sym_eigen(&[3.0, 0.0, 0.0, -1.0], 2).unwrap();
        assert_eq!(l, vec![3.0, -1.0]);
    }
}
