use std::f64::consts::PI;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{sigma2_for_snr, ChannelModel, ChannelSample, Dataset, DatasetMeta};
use crate::error::{dim_err, Error, Result};
use crate::numkit::ComplexMatrix;
use crate::Scalar;

/// Independent RNG stream for sample `index` of a dataset seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn check_dims(n: usize, k: usize, count: usize) -> Result<()> {
    if n == 0 || k == 0 {
        return Err(dim_err(format!("need N >= 1 and K >= 1, got N={n}, K={k}")));
    }
    if count == 0 {
        return Err(Error::Config("dataset count must be at least 1".into()));
    }
    Ok(())
}

fn cn01<R: Rng + ?Sized>(rng: &mut R) -> Complex<f64> {
    let half = Normal::new(0.0, 0.5f64.sqrt()).expect("valid normal");
    Complex::new(half.sample(rng), half.sample(rng))
}

/// One `N × K` matrix with i.i.d. CN(0, 1) entries, drawn row by row.
pub fn rayleigh_sample<T: Scalar, R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> ComplexMatrix<T> {
    ComplexMatrix::from_fn(n, k, |_, _| {
        let z = cn01(rng);
        Complex::new(T::of(z.re), T::of(z.im))
    })
}

pub fn gen_rayleigh<T: Scalar>(n: usize, k: usize, count: usize, snr_db: f64, seed: u64) -> Result<Dataset<T>> {
    check_dims(n, k, count)?;
    let pt = 1.0;
    let sigma2 = sigma2_for_snr(pt, snr_db);
    let samples = (0..count)
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            ChannelSample::new(rayleigh_sample(n, k, &mut rng), T::of(pt), T::of(sigma2))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples,
        meta: DatasetMeta {
            channel: ChannelModel::Rayleigh,
            seed,
            n,
            k,
            count,
            snr_db,
            pt,
        },
    })
}

/// Saleh-Valenzuela clustered multipath parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvParams {
    pub clusters: usize,
    pub rays: usize,
    /// Standard deviation of the Laplacian intra-cluster angle spread.
    pub angle_spread_deg: f64,
}

impl SvParams {
    pub fn new(clusters: usize, rays: usize) -> Self {
        Self {
            clusters,
            rays,
            angle_spread_deg: 7.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvRay {
    /// Angle of departure in radians.
    pub angle: f64,
    pub gain: Complex<f64>,
}

/// Angles and gains of every ray, per user.
#[derive(Debug, Clone, PartialEq)]
pub struct SvPaths {
    pub users: Vec<Vec<SvRay>>,
}

impl SvPaths {
    /// `h_k = √(N / (clusters·rays)) Σ α a(θ)` with a half-wavelength ULA
    /// steering vector `a(θ)_n = e^{jπ n sin θ} / √N`.
    pub fn channel<T: Scalar>(&self, n: usize) -> ComplexMatrix<T> {
        let k = self.users.len();
        let mut h = ComplexMatrix::zeros(n, k);
        for (u, rays) in self.users.iter().enumerate() {
            let norm = (n as f64 / rays.len() as f64).sqrt() / (n as f64).sqrt();
            for row in 0..n {
                let mut acc = Complex::new(0.0, 0.0);
                for ray in rays {
                    let phase = PI * row as f64 * ray.angle.sin();
                    acc += ray.gain * Complex::from_polar(1.0, phase);
                }
                let z = acc * norm;
                h.set(row, u, Complex::new(T::of(z.re), T::of(z.im)));
            }
        }
        h
    }
}

fn laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random_range(-0.5..0.5);
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Regenerates the ray parameters of one sample.
pub fn sv_paths(k: usize, params: &SvParams, seed: u64, index: u64) -> SvPaths {
    let mut rng = sample_rng(seed, index);
    let b = params.angle_spread_deg.to_radians() / 2f64.sqrt();
    let users = (0..k)
        .map(|_| {
            let mut rays = Vec::with_capacity(params.clusters * params.rays);
            for _ in 0..params.clusters {
                let center = rng.random_range(0.0..2.0 * PI);
                for _ in 0..params.rays {
                    let angle = center + laplace(b, &mut rng);
                    let gain = cn01(&mut rng);
                    rays.push(SvRay { angle, gain });
                }
            }
            rays
        })
        .collect();
    SvPaths { users }
}

pub fn sv_sample<T: Scalar>(n: usize, k: usize, params: &SvParams, seed: u64, index: u64) -> ComplexMatrix<T> {
    sv_paths(k, params, seed, index).channel(n)
}

pub fn gen_saleh_valenzuela<T: Scalar>(
    n: usize,
    k: usize,
    params: &SvParams,
    count: usize,
    snr_db: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    check_dims(n, k, count)?;
    if params.clusters == 0 || params.rays == 0 {
        return Err(Error::Config(format!(
            "need at least one cluster and one ray, got {} / {}",
            params.clusters, params.rays
        )));
    }
    let pt = 1.0;
    let sigma2 = sigma2_for_snr(pt, snr_db);
    let samples = (0..count)
        .map(|i| ChannelSample::new(sv_sample(n, k, params, seed, i as u64), T::of(pt), T::of(sigma2)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples,
        meta: DatasetMeta {
            channel: ChannelModel::SalehValenzuela(params.clone()),
            seed,
            n,
            k,
            count,
            snr_db,
            pt,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_dims_rejected() {
        assert!(matches!(gen_rayleigh::<f64>(0, 2, 1, 10.0, 0), Err(Error::Dimension(_))));
        assert!(matches!(gen_rayleigh::<f64>(2, 0, 1, 10.0, 0), Err(Error::Dimension(_))));
        let p = SvParams::new(0, 5);
        assert!(gen_saleh_valenzuela::<f64>(4, 2, &p, 1, 10.0, 0).is_err());
    }

    #[test]
    fn rayleigh_second_moment() {
        // 10^5 entries: 2500 samples of 8x5.
        let d = gen_rayleigh::<f64>(8, 5, 2500, 10.0, 42).unwrap();
        let (mut s, mut c) = (0.0, 0usize);
        for smp in &d.samples {
            s += smp.h.frobenius_sq();
            c += 40;
        }
        let m = s / c as f64;
        assert!((m - 1.0).abs() < 0.02, "mean |h|^2 = {m}");
    }

    #[test]
    fn rayleigh_is_deterministic() {
        let a = gen_rayleigh::<f64>(4, 3, 10, 10.0, 7).unwrap();
        let b = gen_rayleigh::<f64>(4, 3, 10, 10.0, 7).unwrap();
        assert_eq!(a, b);
        let c = gen_rayleigh::<f64>(4, 3, 10, 10.0, 8).unwrap();
        assert_ne!(a.samples[0], c.samples[0]);
    }

    #[test]
    fn snr_sets_noise_power() {
        let d = gen_rayleigh::<f64>(16, 8, 1, 10.0, 0).unwrap();
        assert!((d.samples[0].sigma2 - 0.1).abs() < 1e-15);
        assert!((d.samples[0].snr_db() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn sv_energy_matches_array_size() {
        let p = SvParams::new(4, 5);
        let d = gen_saleh_valenzuela::<f64>(16, 3, &p, 3400, 10.0, 1).unwrap();
        let mut e = 0.0;
        for s in &d.samples {
            e += s.h.frobenius_sq();
        }
        let per_user = e / (3400.0 * 3.0);
        assert!((per_user / 16.0 - 1.0).abs() < 0.03, "E|h_k|^2 = {per_user}");
    }

    #[test]
    fn sv_reproducible_from_paths() {
        let p = SvParams::new(4, 5);
        let d = gen_saleh_valenzuela::<f64>(8, 3, &p, 5, 10.0, 99).unwrap();
        for (i, s) in d.samples.iter().enumerate() {
            let paths = sv_paths(3, &p, 99, i as u64);
            assert_eq!(paths.users.len(), 3);
            assert!(paths.users.iter().all(|r| r.len() == 20));
            assert_eq!(paths.channel::<f64>(8), s.h);
        }
    }
}
