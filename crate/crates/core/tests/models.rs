//! Forward-pass oracles, gradients, equivariance and checkpoints for every
//! architecture.

use num_complex::Complex;
use peprec::channels::{gen_rayleigh, ChannelSample};
use peprec::equivariance::{check_pe, PermKind};
use peprec::models::{attend, decode_model, encode_model, Arch, Model, ModelSpec, RawOutput};
use peprec::numkit::{ComplexMatrix, Tape, Tensor};
use peprec::precoding::stack_channels;
use peprec::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const N: usize = 4;
const K: usize = 3;
const NRF: usize = 3;

fn small(arch: Arch, n: usize, k: usize) -> ModelSpec {
    ModelSpec::with_hidden(arch, &[4, 4], 2, n, k, NRF)
}

fn channels(n: usize, k: usize, count: usize, seed: u64) -> Vec<ChannelSample<f64>> {
    gen_rayleigh::<f64>(n, k, count, 10.0, seed).unwrap().samples
}

fn raw(model: &Model<f64>, samples: &[ChannelSample<f64>], n_rf: usize, a: Option<&[f64]>) -> Vec<Tensor<f64>> {
    let refs: Vec<_> = samples.iter().collect();
    let (hr, hi) = stack_channels(&refs).unwrap();
    let tape = Tape::new();
    let bound = model.bind(&tape, false);
    model
        .forward(&bound, tape.constant(hr), tape.constant(hi), n_rf, a)
        .unwrap()
        .tensors()
}

fn param<'m>(model: &'m Model<f64>, name: &str) -> &'m Tensor<f64> {
    &model.params().iter().find(|p| p.name == name).unwrap().value
}

#[test]
fn every_architecture_produces_expected_shapes() {
    for arch in Arch::ALL {
        for (n, k) in [(N, K), (N, 1), (2, K)] {
            let model = Model::<f64>::new(small(arch, N, K), 1).unwrap();
            let out = raw(&model, &channels(n, k, 2, 3), NRF, None);
            if arch.is_hybrid() {
                assert_eq!(out[0].shape(), &[2, NRF, n], "{arch}");
                assert_eq!(out[2].shape(), &[2, k, NRF], "{arch}");
            } else {
                assert_eq!(out.len(), 2);
                assert_eq!(out[0].shape(), &[2, k, n], "{arch}");
            }
            assert!(out.iter().all(|t| t.all_finite()), "{arch}");
        }
    }
}

#[test]
fn forward_is_deterministic() {
    for arch in Arch::ALL {
        let model = Model::<f64>::new(small(arch, N, K), 4).unwrap();
        let hs = channels(N, K, 2, 5);
        assert_eq!(raw(&model, &hs, NRF, None), raw(&model, &hs, NRF, None), "{arch}");
    }
}

fn se_loss(model: &Model<f64>, hr: &Tensor<f64>, hi: &Tensor<f64>, sigma2: f64) -> f64 {
    let tape = Tape::new();
    let bound = model.bind(&tape, false);
    let se = model
        .sum_se(&bound, tape.constant(hr.clone()), tape.constant(hi.clone()), NRF, 1.0, sigma2)
        .unwrap();
    -se.mean_all().value().item()
}

#[test]
fn se_gradients_match_finite_differences() {
    let hs = channels(N, K, 2, 11);
    let refs: Vec<_> = hs.iter().collect();
    let (hr, hi) = stack_channels(&refs).unwrap();
    let sigma2 = hs[0].sigma2;
    for arch in Arch::ALL {
        let mut model = Model::<f64>::new(small(arch, N, K), 21).unwrap();
        let tape = Tape::new();
        let bound = model.bind(&tape, true);
        let se = model
            .sum_se(&bound, tape.constant(hr.clone()), tape.constant(hi.clone()), NRF, 1.0, sigma2)
            .unwrap();
        let loss = se.mean_all().neg();
        let grads = tape.backward(loss).unwrap();
        let analytic: Vec<f64> = bound
            .vars()
            .iter()
            .flat_map(|v| grads.wrt(*v).data().to_vec())
            .collect();

        let base = model.param_tensors();
        let h = 1e-4;
        let mut numeric = Vec::with_capacity(analytic.len());
        for p in 0..base.len() {
            for i in 0..base[p].len() {
                let mut at = |s: f64| {
                    let mut ts = base.clone();
                    ts[p].data_mut()[i] += s;
                    model.set_param_tensors(ts).unwrap();
                    se_loss(&model, &hr, &hi, sigma2)
                };
                numeric.push((at(h) - at(-h)) / (2.0 * h));
            }
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nf = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = diff / na.max(nf);
        assert!(na > 0.0, "{arch}: zero gradient");
        assert!(rel <= 1e-4, "{arch}: relative gradient error {rel:e}");
    }
}

fn pe(model: &Model<f64>, kind: PermKind, seed: u64) -> f64 {
    let h = channels(N, K, 1, seed).remove(0).h;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    check_pe(model, &h, NRF, kind, 10, 1e-6, &mut rng).unwrap().max_deviation
}

#[test]
fn equivariance_matrix() {
    use PermKind::*;
    for arch in Arch::ALL {
        let (pass, fail): (&[PermKind], &[PermKind]) = match arch {
            Arch::Transformer1d | Arch::Gat => (&[User], &[Antenna]),
            Arch::Transformer1dAn => (&[Antenna], &[User]),
            Arch::Gformer3d | Arch::EdgeGcn3d => (&[Joint, Rf], &[]),
            _ => (&[Joint, User, Antenna], &[]),
        };
        for draw in 0..4 {
            let model = Model::<f64>::new(small(arch, N, K), 100 + draw).unwrap();
            for &kind in pass {
                let d = pe(&model, kind, draw);
                assert!(d <= 1e-6, "{arch} {kind:?}: {d:e}");
            }
            for &kind in fail {
                let d = pe(&model, kind, draw);
                assert!(d > 1e-2, "{arch} {kind:?} should not be equivariant: {d:e}");
            }
        }
    }
}

#[test]
fn positional_encoding_breaks_user_equivariance() {
    let mut spec = small(Arch::Transformer1d, N, K);
    spec.positional_encoding = true;
    for draw in 0..4 {
        let model = Model::<f64>::new(spec.clone(), draw).unwrap();
        assert!(pe(&model, PermKind::User, draw) > 1e-2);
    }
}

#[test]
fn rf_permutation_on_baseband_model_is_rejected() {
    let model = Model::<f64>::new(small(Arch::Gformer2d, N, K), 0).unwrap();
    let h = channels(N, K, 1, 0).remove(0).h;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(
        check_pe(&model, &h, NRF, PermKind::Rf, 3, 1e-6, &mut rng),
        Err(Error::Config(_))
    ));
}

#[test]
fn violation_is_reported_not_raised() {
    let model = Model::<f64>::new(small(Arch::Transformer1d, N, K), 2).unwrap();
    let h = channels(N, K, 1, 2).remove(0).h;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let report = check_pe(&model, &h, 0, PermKind::Antenna, 5, 1e-6, &mut rng).unwrap();
    assert!(!report.pass);
    assert_eq!(report.deviations.len(), 5);
}

fn zero_weights(arch: Arch) -> Model<f64> {
    let mut model = Model::<f64>::new(small(arch, N, K), 0).unwrap();
    let zeros = model.param_tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
    model.set_param_tensors(zeros).unwrap();
    model
}

#[test]
fn zero_weights_give_zero_output() {
    for arch in [Arch::EdgeGcn, Arch::Gat] {
        let out = raw(&zero_weights(arch), &channels(N, K, 2, 1), 0, None);
        assert!(out.iter().all(|t| t.max_abs() == 0.0), "{arch}");
    }
}

type Mat = Vec<Vec<f64>>;

fn tensor_rows(t: &Tensor<f64>) -> Mat {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    (0..r).map(|i| t.data()[i * c..(i + 1) * c].to_vec()).collect()
}

fn matvec(w: &Mat, x: &[f64]) -> Vec<f64> {
    w.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// `y_n = W1 x_n + W2 Σ_{i≠n} x_i` by explicit loops.
fn structured_ref(model: &Model<f64>, name: &str, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let w1 = tensor_rows(param(model, &format!("{name}.w1")));
    let w2 = tensor_rows(param(model, &format!("{name}.w2")));
    (0..x.len())
        .map(|n| {
            let mut y = matvec(&w1, &x[n]);
            for (i, xi) in x.iter().enumerate() {
                if i != n {
                    for (a, b) in y.iter_mut().zip(matvec(&w2, xi)) {
                        *a += b;
                    }
                }
            }
            y
        })
        .collect()
}

fn dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| x * y).sum()
}

/// Single-head graph transformer written per user and per antenna.
fn gformer_ref(model: &Model<f64>, h: &ComplexMatrix<f64>, softmax: bool) -> Vec<Vec<Vec<f64>>> {
    let (n, k) = (h.rows(), h.cols());
    let mut d: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|u| (0..n).map(|a| vec![h.get(a, u).re, h.get(a, u).im]).collect())
        .collect();
    let layers = model.spec().layers();
    for l in 0..layers {
        let q: Vec<_> = if softmax {
            d.iter().map(|x| structured_ref(model, &format!("l{l}.uq"), x)).collect()
        } else {
            d.clone()
        };
        let keys: Vec<_> = d.iter().map(|x| structured_ref(model, &format!("l{l}.uk"), x)).collect();
        let vals: Vec<_> = d.iter().map(|x| structured_ref(model, &format!("l{l}.uv"), x)).collect();
        d = (0..k)
            .map(|u| {
                // Scores are scaled by the contraction length N·J (its root under softmax).
                let c = (n * d[u][0].len()) as f64;
                let scale = if softmax { 1.0 / c.sqrt() } else { 1.0 / c };
                let mut s: Vec<f64> = (0..k).map(|i| scale * dot(&q[u], &keys[i])).collect();
                if softmax {
                    let m = s.iter().cloned().fold(f64::MIN, f64::max);
                    let z: f64 = s.iter().map(|x| (x - m).exp()).sum();
                    s = s.iter().map(|x| (x - m).exp() / z).collect();
                }
                let mut x = d[u].clone();
                for (i, si) in s.iter().enumerate() {
                    for (xa, va) in x.iter_mut().zip(&vals[i]) {
                        for (xj, vj) in xa.iter_mut().zip(va) {
                            *xj += si * vj;
                        }
                    }
                }
                let y = structured_ref(model, &format!("l{l}.uf"), &x);
                if l + 1 < layers {
                    y.into_iter().map(|r| r.into_iter().map(f64::tanh).collect()).collect()
                } else {
                    y
                }
            })
            .collect();
    }
    d
}

#[test]
fn single_head_graph_transformers_match_loop_reference() {
    for (arch, softmax) in [(Arch::Gformer2d, false), (Arch::F2dGformer, true)] {
        let spec = ModelSpec::with_hidden(arch, &[4, 6], 1, N, K, 0);
        let model = Model::<f64>::new(spec, 8).unwrap();
        let hs = channels(N, K, 1, 9);
        let out = raw(&model, &hs, 0, None);
        let want = gformer_ref(&model, &hs[0].h, softmax);
        for u in 0..K {
            for a in 0..N {
                let (re, im) = (out[0].get(&[0, u, a]), out[1].get(&[0, u, a]));
                assert!((re - want[u][a][0]).abs() <= 1e-12 * (1.0 + re.abs()), "{arch}");
                assert!((im - want[u][a][1]).abs() <= 1e-12 * (1.0 + im.abs()), "{arch}");
            }
        }
    }
}

#[test]
fn heads_split_the_feature_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = Tensor::<f64>::uniform(&[2, 3, 4, 6], 1.0, &mut rng);
    let k = Tensor::<f64>::uniform(&[2, 3, 4, 6], 1.0, &mut rng);
    let v = Tensor::<f64>::uniform(&[2, 3, 4, 6], 1.0, &mut rng);
    for softmax in [false, true] {
        for heads in [2, 3, 4] {
            let tape = Tape::new();
            let (qv, kv, vv) = (tape.constant(q.clone()), tape.constant(k.clone()), tape.constant(v.clone()));
            let got = attend(qv, kv, vv, heads, softmax).unwrap().value();
            for m in 0..heads {
                let (a, b) = (m * 6 / heads, (m + 1) * 6 / heads);
                let one = attend(qv.slice(3, a, b).unwrap(), kv.slice(3, a, b).unwrap(), vv.slice(3, a, b).unwrap(), 1, softmax)
                    .unwrap()
                    .value();
                for g in 0..2 {
                    for t in 0..3 {
                        for n in 0..4 {
                            for j in a..b {
                                let diff = got.get(&[g, t, n, j]) - one.get(&[g, t, n, j - a]);
                                assert!(diff.abs() < 1e-12, "heads={heads} softmax={softmax}");
                            }
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn single_token_transformer_reduces_to_residual_value_path() {
    let spec = ModelSpec::with_hidden(Arch::Transformer1d, &[], 1, 3, 1, 0);
    let model = Model::<f64>::new(spec, 5).unwrap();
    let hs = channels(3, 1, 1, 6);
    let out = raw(&model, &hs, 0, None);
    let x: Vec<f64> = (0..3).flat_map(|a| [hs[0].h.get(a, 0).re, hs[0].h.get(a, 0).im]).collect();
    let wv = tensor_rows(param(&model, "l0.wv"));
    let wf = tensor_rows(param(&model, "l0.wf"));
    let inner: Vec<f64> = x.iter().zip(matvec(&wv, &x)).map(|(a, b)| a + b).collect();
    let y = matvec(&wf, &inner);
    for a in 0..3 {
        assert!((out[0].get(&[0, 0, a]) - y[2 * a]).abs() < 1e-12);
        assert!((out[1].get(&[0, 0, a]) - y[2 * a + 1]).abs() < 1e-12);
    }
}

#[test]
fn model_gnn_orthogonal_users_do_not_interact_in_first_layer() {
    let spec = ModelSpec::with_hidden(Arch::ModelGnn, &[], 1, N, 2, 0);
    let model = Model::<f64>::new(spec, 12).unwrap();
    let h = ComplexMatrix::from_fn(N, 2, |a, u| match (a, u) {
        (0, 0) => Complex::new(0.7, -0.2),
        (1, 0) => Complex::new(-0.1, 0.4),
        (2, 1) => Complex::new(1.1, 0.3),
        (3, 1) => Complex::new(0.2, -0.9),
        _ => Complex::new(0.0, 0.0),
    });
    let both = ChannelSample::new(h.clone(), 1.0, 0.1).unwrap();
    let joint = raw(&model, &[both], 0, None);
    for u in 0..2 {
        let alone = ChannelSample::new(ComplexMatrix::from_fn(N, 1, |a, _| h.get(a, u)), 1.0, 0.1).unwrap();
        let single = raw(&model, &[alone], 0, None);
        for a in 0..N {
            assert!((joint[0].get(&[0, u, a]) - single[0].get(&[0, 0, a])).abs() < 1e-12);
            assert!((joint[1].get(&[0, u, a]) - single[1].get(&[0, 0, a])).abs() < 1e-12);
        }
    }
}

#[test]
fn rgnn_single_user_runs_on_self_term() {
    let model = Model::<f64>::new(small(Arch::Rgnn, N, 1), 3).unwrap();
    let out = raw(&model, &channels(N, 1, 2, 4), 0, None);
    assert!(out[0].max_abs() > 0.0 && out[0].all_finite());
}

#[test]
fn zero_virtual_vector_makes_rf_rows_identical() {
    for arch in [Arch::Gformer3d, Arch::EdgeGcn3d] {
        let model = Model::<f64>::new(small(arch, N, K), 6).unwrap();
        let out = raw(&model, &channels(N, K, 1, 7), NRF, Some(&[0.0; NRF]));
        let (re, im) = (&out[0], &out[1]);
        for r in 1..NRF {
            for a in 0..N {
                assert_eq!(re.get(&[0, r, a]), re.get(&[0, 0, a]), "{arch}");
                assert_eq!(im.get(&[0, r, a]), im.get(&[0, 0, a]), "{arch}");
            }
        }
        let random = raw(&model, &channels(N, K, 1, 7), NRF, None);
        assert_ne!(random[0].get(&[0, 1, 0]), random[0].get(&[0, 0, 0]), "{arch}");
    }
}

#[test]
fn hybrid_precoders_are_normalized() {
    let model = Model::<f64>::new(small(Arch::Gformer3d, N, K), 2).unwrap();
    let hs = channels(N, K, 3, 8);
    let refs: Vec<_> = hs.iter().collect();
    let (v, hybrid) = model.infer_full(&refs, 2).unwrap();
    let hybrid = hybrid.unwrap();
    for (v, hp) in v.iter().zip(&hybrid) {
        assert_eq!(hp.n_rf(), 2);
        assert!((v.frobenius_sq() - 1.0).abs() < 1e-9);
        for r in 0..2 {
            for a in 0..N {
                assert!((hp.v_rf.get(r, a).norm() - 1.0).abs() < 1e-9);
            }
        }
        assert!(v.max_abs_diff(&hp.effective()) < 1e-12);
    }
}

#[test]
fn padded_models_reject_oversized_inputs() {
    let model = Model::<f64>::new(small(Arch::Transformer1d, N, K), 0).unwrap();
    assert!(matches!(model.check_dims(N + 1, K, 0), Err(Error::Config(_))));
    assert!(model.check_dims(N - 1, K + 5, 0).is_ok());
    let an = Model::<f64>::new(small(Arch::Transformer1dAn, N, K), 0).unwrap();
    assert!(matches!(an.check_dims(N, K + 1, 0), Err(Error::Config(_))));
    let hybrid = Model::<f64>::new(small(Arch::Gformer3d, N, K), 0).unwrap();
    assert!(hybrid.check_dims(20, 9, NRF).is_ok());
    assert!(matches!(hybrid.check_dims(N, K, NRF + 1), Err(Error::Config(_))));
    assert!(matches!(hybrid.check_dims(N, K, 0), Err(Error::Config(_))));
}

#[test]
fn graph_models_accept_any_size() {
    for arch in [Arch::Gformer2d, Arch::EdgeGcn, Arch::Rgnn, Arch::ModelGnn, Arch::F2dGformer] {
        let model = Model::<f64>::new(small(arch, 8, 4), 0).unwrap();
        for (n, k) in [(2, 1), (5, 7), (12, 3)] {
            let out = raw(&model, &channels(n, k, 1, 1), 0, None);
            assert_eq!(out[0].shape(), &[1, k, n]);
        }
    }
}

#[test]
fn reference_specs_follow_the_hyperparameter_table() {
    let e = ModelSpec::reference(Arch::EdgeGcn, 16, 8, 0);
    assert_eq!(e.widths, vec![2, 128, 128, 128, 128, 2]);
    assert_eq!(ModelSpec::reference_lr(Arch::EdgeGcn), 0.002);
    let g = ModelSpec::reference(Arch::Gformer2d, 16, 8, 0);
    assert_eq!(g.widths, vec![2, 32, 32, 32, 2]);
    assert_eq!(g.heads, 32);
    assert_eq!(ModelSpec::reference_lr(Arch::Gformer2d), 0.002);
    assert_eq!(ModelSpec::reference_lr(Arch::Transformer1d), 0.0005);
    let h = ModelSpec::reference(Arch::Gformer3d, 16, 3, 8);
    assert_eq!(h.widths, vec![2, 128, 128, 128, 128, 2]);
    assert_eq!(ModelSpec::reference_lr(Arch::Gformer3d), 0.005);
    assert_eq!(ModelSpec::reference(Arch::Rgnn, 16, 8, 0).widths, vec![2, 32, 32, 32, 2]);
    assert_eq!(ModelSpec::reference(Arch::ModelGnn, 16, 8, 0).heads, 1);
}

#[test]
fn invalid_specs_are_config_errors() {
    let mut s = small(Arch::ModelGnn, N, K);
    s.widths = vec![2, 3, 2];
    assert!(matches!(Model::<f64>::new(s, 0), Err(Error::Config(_))));
    let mut s = small(Arch::Gformer2d, N, K);
    s.positional_encoding = true;
    assert!(matches!(Model::<f64>::new(s, 0), Err(Error::Config(_))));
    let mut s = small(Arch::Gformer2d, N, K);
    s.widths = vec![3, 4, 2];
    assert!(matches!(Model::<f64>::new(s, 0), Err(Error::Config(_))));
    let mut s = small(Arch::Gformer3d, N, K);
    s.n_rf = 0;
    assert!(matches!(Model::<f64>::new(s, 0), Err(Error::Config(_))));
    assert!(matches!("gformer_4d".parse::<Arch>(), Err(Error::Config(_))));
    for a in Arch::ALL {
        assert_eq!(a.id().parse::<Arch>().unwrap(), a);
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    for arch in Arch::ALL {
        let model = Model::<f64>::new(small(arch, N, K), 31).unwrap();
        let bytes = encode_model(&model).unwrap();
        assert_eq!(&bytes[..4], b"PEPW");
        let back: Model<f64> = decode_model(&bytes).unwrap();
        assert_eq!(back, model, "{arch}");
        assert_eq!(back.virtual_vec().len(), if arch.is_hybrid() { NRF } else { 0 });
        let single: Model<f32> = decode_model(&bytes).unwrap();
        assert_eq!(single.num_params(), model.num_params());
    }
}

#[test]
fn checkpoint_corruption_is_detected() {
    let model = Model::<f64>::new(small(Arch::Gformer3d, N, K), 1).unwrap();
    let bytes = encode_model(&model).unwrap();
    for cut in [2, 10, bytes.len() / 2, bytes.len() - 3] {
        assert!(matches!(decode_model::<f64>(&bytes[..cut]), Err(Error::Format { .. })), "cut at {cut}");
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_model::<f64>(&bad), Err(Error::Format { offset: 0, .. })));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(decode_model::<f64>(&bad), Err(Error::UnsupportedVersion { found: 9, .. })));
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(decode_model::<f64>(&long), Err(Error::Format { .. })));
}

#[test]
fn raw_output_kinds_match_architecture() {
    let model = Model::<f64>::new(small(Arch::Gformer3d, N, K), 1).unwrap();
    let hs = channels(N, K, 1, 1);
    let refs: Vec<_> = hs.iter().collect();
    let (hr, hi) = stack_channels(&refs).unwrap();
    let tape = Tape::new();
    let bound = model.bind(&tape, false);
    let out = model.forward(&bound, tape.constant(hr), tape.constant(hi), 2, None).unwrap();
    assert!(matches!(out, RawOutput::Hybrid { .. }));
}
