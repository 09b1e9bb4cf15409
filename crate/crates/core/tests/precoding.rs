use num_complex::Complex;
use peprec::channels::{gen_rayleigh, ChannelSample};
use peprec::numkit::{ComplexMatrix, Tape};
use peprec::precoding::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C = ComplexMatrix<f64>;

fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> C {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn cosine(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    let ip: Complex<f64> = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    ip.norm() / (na * nb)
}

/// SINR evaluated on (re, im) pairs without the complex type.
fn se_oracle(h: &C, v: &C, sigma2: f64) -> f64 {
    let (n, k) = (h.rows(), h.cols());
    let g = |u: usize, i: usize| {
        let (mut re, mut im) = (0.0, 0.0);
        for a in 0..n {
            let (hr, hi) = (h.re()[a * k + u], -h.im()[a * k + u]);
            let (vr, vi) = (v.re()[a * k + i], v.im()[a * k + i]);
            re += hr * vr - hi * vi;
            im += hr * vi + hi * vr;
        }
        re * re + im * im
    };
    (0..k)
        .map(|u| {
            let interf: f64 = (0..k).filter(|&i| i != u).map(|i| g(u, i)).sum();
            (1.0 + g(u, u) / (interf + sigma2)).log2()
        })
        .sum()
}

#[test]
fn single_user_mrt_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = random(4, 1, &mut rng);
    let pt = 2.0;
    let v = h.scale((pt / h.frobenius_sq()).sqrt());
    let se = sum_se(&h, &v, 0.5).unwrap();
    let expect = (1.0 + pt * h.frobenius_sq() / 0.5).log2();
    assert!((se - expect).abs() < 1e-12);
    assert_eq!(sum_se(&h, &ComplexMatrix::zeros(4, 1), 0.5).unwrap(), 0.0);
}

#[test]
fn sum_se_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let h = random(3, 2, &mut rng);
        let v = random(3, 2, &mut rng);
        let s = sum_se(&h, &v, 0.3).unwrap();
        assert!((s - se_oracle(&h, &v, 0.3)).abs() < 1e-10);
    }
}

#[test]
fn se_ratio_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = random(4, 2, &mut rng);
    let v = wmmse(&h, 1.0, 0.1, &WmmseOptions::default()).unwrap().v;
    assert_eq!(se_ratio(&h, &v, &v, 0.1).unwrap(), 1.0);
    let weak = v.scale(0.9f64.sqrt());
    let r = se_ratio(&h, &weak, &v, 0.1).unwrap();
    let direct = se_oracle(&h, &weak, 0.1) / se_oracle(&h, &v, 0.1);
    assert!(r < 1.0);
    assert!((r - direct).abs() < 1e-12);
}

#[test]
fn hybrid_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n, nrf, k) = (6, 3, 2);
    let rf = random(nrf, n, &mut rng);
    let bb = random(k, nrf, &mut rng);
    let hp = normalize_hybrid(&rf, &bb, 1.5).unwrap();
    for i in 0..nrf {
        for j in 0..n {
            assert!((hp.v_rf.get(i, j).norm() - 1.0).abs() < 1e-9);
        }
    }
    let eff = hp.effective();
    assert_eq!((eff.rows(), eff.cols()), (n, k));
    assert!((eff.frobenius_sq() - 1.5).abs() < 1e-9);

    let unit = hp.v_rf.clone();
    let again = normalize_hybrid(&unit, &hp.v_bb, 1.5).unwrap();
    for i in 0..nrf {
        for j in 0..n {
            let (a, b) = (again.v_rf.get(i, j).arg(), unit.get(i, j).arg());
            assert!((a - b).abs() <= 4.0 * f64::EPSILON, "phase moved at ({i}, {j})");
        }
    }

    // Compose-then-measure: effective precoder built by explicit sums.
    let h = random(n, k, &mut rng);
    let composed = ComplexMatrix::from_fn(n, k, |a, u| {
        (0..nrf).map(|r| hp.v_rf.get(r, a) * hp.v_bb.get(u, r)).sum()
    });
    let s1 = sum_se(&h, &eff, 0.2).unwrap();
    let s2 = se_oracle(&h, &composed, 0.2);
    assert!((s1 - s2).abs() < 1e-10);
}

#[test]
fn wmmse_single_user_is_mrt() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let h = random(5, 1, &mut rng);
        let out = wmmse(&h, 1.0, 0.1, &WmmseOptions::default()).unwrap();
        assert!(cosine(&out.v.col(0), &h.col(0)) >= 1.0 - 1e-6);
        assert!((out.v.frobenius_sq() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn wmmse_monotone_and_beats_zf() {
    let d = gen_rayleigh::<f64>(4, 2, 200, 10.0, 11).unwrap();
    let mut wins = 0;
    for s in &d.samples {
        let out = wmmse(&s.h, s.pt, s.sigma2, &WmmseOptions::default()).unwrap();
        for w in out.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{:?}", out.history);
        }
        assert!((out.v.frobenius_sq() - s.pt).abs() < 1e-9);
        let zf = zero_forcing(&s.h, s.pt).unwrap();
        if out.se >= sum_se(&s.h, &zf, s.sigma2).unwrap() {
            wins += 1;
        }
    }
    assert!(wins >= 198, "wmmse beat ZF on {wins}/200");
}

#[test]
fn wmmse_identical_users() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h1 = random(4, 1, &mut rng);
    let h = ComplexMatrix::from_fn(4, 2, |a, _| h1.get(a, 0));
    let out = wmmse(&h, 1.0, 0.1, &WmmseOptions { max_iters: 50, tol: 1e-6 }).unwrap();
    assert!(out.v.is_finite());
    assert!(out.se.is_finite());
    assert!(out.history.len() <= 51);
}

#[test]
fn wmmse_rejects_zero_iterations() {
    let h = ComplexMatrix::<f64>::identity(2);
    assert!(wmmse(&h, 1.0, 0.1, &WmmseOptions { max_iters: 0, tol: 1e-6 }).is_err());
}

#[test]
fn structure_single_user_is_scaled_mrt() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = random(5, 1, &mut rng);
    let alloc = PowerAllocation::new(vec![2.0], vec![2.0], 2.0).unwrap();
    let v = structure_recover(&h, &alloc, 0.3).unwrap();
    let mrt = h.scale((2.0 / h.frobenius_sq()).sqrt());
    assert!(v.max_abs_diff(&mrt) < 1e-9);
}

#[test]
fn structure_large_noise_tends_to_mrt() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = random(4, 3, &mut rng);
    let alloc = PowerAllocation::new(vec![0.2, 0.3, 0.5], vec![0.5, 0.25, 0.25], 1.0).unwrap();
    let mut prev = 1.0;
    for sigma2 in [1e2, 1e4, 1e6] {
        let v = structure_recover(&h, &alloc, sigma2).unwrap();
        let worst = (0..3).map(|u| 1.0 - cosine(&v.col(u), &h.col(u))).fold(0.0, f64::max);
        assert!(worst < prev);
        prev = worst;
    }
    assert!(prev < 1e-9);
}

#[test]
fn allocation_validation() {
    assert!(PowerAllocation::new(vec![0.5, 0.5], vec![1.0, 0.0], 1.0).is_err());
    assert!(PowerAllocation::new(vec![0.5, 0.6], vec![0.5, 0.5], 1.0).is_err());
    assert!(PowerAllocation::new(vec![0.5], vec![0.5, 0.5], 1.0).is_err());
    assert!(PowerAllocation::<f64>::uniform(4, 1.0).is_ok());
}

#[test]
fn random_phase_zf_is_interference_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = random(8, 2, &mut rng);
    let hp = random_phase_zf(&h, 4, 1.0, &mut rng).unwrap();
    let v = hp.effective();
    assert!((v.frobenius_sq() - 1.0).abs() < 1e-9);
    let g = h.h().matmul(&v).unwrap();
    assert!(g.get(0, 1).norm() < 1e-9 && g.get(1, 0).norm() < 1e-9);
    assert!(random_phase_zf(&random(8, 5, &mut rng), 4, 1.0, &mut rng).is_err());
}

#[test]
fn tape_metric_matches_matrix_metric() {
    let d = gen_rayleigh::<f64>(5, 3, 4, 10.0, 3).unwrap();
    let refs: Vec<&ChannelSample<f64>> = d.samples.iter().collect();
    let (hr, hi) = stack_channels(&refs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let vs: Vec<C> = (0..4).map(|_| random(5, 3, &mut rng)).collect();
    let vr = peprec::numkit::Tensor::from_fn(&[4, 3, 5], |i| vs[i / 15].get(i % 5, (i / 5) % 3).re);
    let vi = peprec::numkit::Tensor::from_fn(&[4, 3, 5], |i| vs[i / 15].get(i % 5, (i / 5) % 3).im);
    let back = unstack_precoders(&vr, &vi).unwrap();
    assert_eq!(back, vs);

    let tape = Tape::new();
    let (hr, hi) = (tape.constant(hr), tape.constant(hi));
    let (nr, ni) = tape_normalize_power(tape.param(vr), tape.param(vi), 1.0).unwrap();
    let se = tape_sum_se(hr, hi, nr, ni, 0.1).unwrap();
    let normed = unstack_precoders(&nr.value(), &ni.value()).unwrap();
    for b in 0..4 {
        let v = normalize_power(&vs[b], 1.0).unwrap();
        assert!(normed[b].max_abs_diff(&v) < 1e-12);
        let s = sum_se(&d.samples[b].h, &v, 0.1).unwrap();
        assert!((se.value().data()[b] - s).abs() < 1e-10);
    }
}

#[test]
fn tape_hybrid_matches_matrix_hybrid() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (n, nrf, k) = (5, 3, 2);
    let rf = random(nrf, n, &mut rng);
    let bb = random(k, nrf, &mut rng);
    let tape = Tape::new();
    let t = |m: &C, im: bool| {
        let (r, c) = (m.rows(), m.cols());
        let data = if im { m.im().to_vec() } else { m.re().to_vec() };
        tape.param(peprec::numkit::Tensor::new(&[1, r, c], data).unwrap())
    };
    let out = tape_normalize_hybrid(t(&rf, false), t(&rf, true), t(&bb, false), t(&bb, true), 1.0).unwrap();
    let hp = normalize_hybrid(&rf, &bb, 1.0).unwrap();
    let eff = hp.effective();
    let v = unstack_precoders(&out.v_re.value(), &out.v_im.value()).unwrap();
    assert!(v[0].max_abs_diff(&eff) < 1e-12);
    for (i, (&a, &b)) in out.rf_re.value().data().iter().zip(hp.v_rf.re()).enumerate() {
        assert!((a - b).abs() < 1e-12, "rf entry {i}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn se_invariant_under_joint_permutations(seed in any::<u64>(), n in 1usize..6, k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random(n, k, &mut rng);
        let v = random(n, k, &mut rng);
        let mut an: Vec<usize> = (0..n).collect();
        let mut ue: Vec<usize> = (0..k).collect();
        for i in (1..n).rev() { an.swap(i, rng.random_range(0..=i)); }
        for i in (1..k).rev() { ue.swap(i, rng.random_range(0..=i)); }
        let perm = |m: &C| ComplexMatrix::from_fn(n, k, |a, u| m.get(an[a], ue[u]));
        let s0 = sum_se(&h, &v, 0.4).unwrap();
        let s1 = sum_se(&perm(&h), &perm(&v), 0.4).unwrap();
        prop_assert!((s0 - s1).abs() <= 1e-12 * s0.max(1.0));
    }

    #[test]
    fn structure_recover_is_user_equivariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, k) = (4, 3);
        let h = random(n, k, &mut rng);
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let lraw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let (sp, sl): (f64, f64) = (raw.iter().sum(), lraw.iter().sum());
        let p: Vec<f64> = raw.iter().map(|x| x / sp).collect();
        let l: Vec<f64> = lraw.iter().map(|x| x / sl).collect();
        let alloc = PowerAllocation::new(p, l, 1.0).unwrap();
        let order = [2usize, 0, 1];
        let an = [1usize, 3, 0, 2];
        let hp = ComplexMatrix::from_fn(n, k, |a, u| h.get(an[a], order[u]));
        let v = structure_recover(&h, &alloc, 0.2).unwrap();
        let vp = structure_recover(&hp, &alloc.permuted(&order), 0.2).unwrap();
        let expect = ComplexMatrix::from_fn(n, k, |a, u| v.get(an[a], order[u]));
        prop_assert!(vp.max_abs_diff(&expect) < 1e-12);
    }
}
