use num_complex::Complex;
use peprec::equivariance::{permute_axis, permute_cols, permute_rows, Permutation, StructuredWeight};
use peprec::numkit::{ComplexMatrix, Tensor};
use peprec::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn real_matrix(t: &Tensor<f64>) -> ComplexMatrix<f64> {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    ComplexMatrix::from_fn(r, c, |i, j| Complex::new(t.get(&[i, j]), 0.0))
}

fn random_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix<f64> {
    let re = Tensor::<f64>::uniform(&[r, c], 1.0, rng);
    let im = Tensor::<f64>::uniform(&[r, c], 1.0, rng);
    ComplexMatrix::from_parts(r, c, re.into_data(), im.into_data()).unwrap()
}

#[test]
fn identity_leaves_matrix_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let m = random_matrix(4, 3, &mut rng);
    assert_eq!(permute_rows(&m, &Permutation::identity(4)).unwrap(), m);
    assert_eq!(permute_cols(&m, &Permutation::identity(3)).unwrap(), m);
}

#[test]
fn transposition_is_an_involution() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = random_matrix(5, 4, &mut rng);
    let t = Permutation::transposition(5, 1, 3).unwrap();
    assert_eq!(permute_rows(&permute_rows(&m, &t).unwrap(), &t).unwrap(), m);
    let t = Permutation::transposition(4, 0, 2).unwrap();
    assert_eq!(permute_cols(&permute_cols(&m, &t).unwrap(), &t).unwrap(), m);
}

#[test]
fn size_mismatch_is_a_dimension_error() {
    let m = ComplexMatrix::<f64>::zeros(3, 2);
    assert!(matches!(permute_rows(&m, &Permutation::identity(2)), Err(Error::Dimension(_))));
    assert!(matches!(permute_cols(&m, &Permutation::identity(3)), Err(Error::Dimension(_))));
    assert!(matches!(Permutation::new(vec![0, 0, 1]), Err(Error::Dimension(_))));
    assert!(matches!(Permutation::new(vec![0, 3, 1]), Err(Error::Dimension(_))));
    let w = StructuredWeight::<f64>::random(2, 3, 4, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(matches!(w.apply(&[0.0; 11]), Err(Error::Dimension(_))));
}

#[test]
fn permutation_matrix_is_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = Permutation::random(6, &mut rng).matrix::<f64>();
    let ppt = p.matmul(&p.t().unwrap()).unwrap();
    assert_eq!(ppt, Tensor::eye(6));
}

#[test]
fn structured_weight_blocks_are_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = StructuredWeight::<f64>::random(3, 2, 4, &mut rng);
    let m = w.materialize();
    assert_eq!(m.shape(), &[12, 8]);
    for bi in 0..4 {
        for bj in 0..4 {
            let blk = if bi == bj { w.w1() } else { w.w2() };
            for o in 0..3 {
                for i in 0..2 {
                    assert_eq!(m.get(&[bi * 3 + o, bj * 2 + i]), blk.get(&[o, i]));
                }
            }
        }
    }
}

#[test]
fn structured_apply_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (jo, ji, n) in [(3, 2, 5), (1, 4, 1), (6, 6, 8)] {
        let w = StructuredWeight::<f64>::random(jo, ji, n, &mut rng);
        let x = Tensor::<f64>::uniform(&[n * ji, 1], 1.0, &mut rng);
        let dense = w.materialize().matmul(&x).unwrap();
        let fast = w.apply(x.data()).unwrap();
        for (a, b) in fast.iter().zip(dense.data()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn zero_off_diagonal_applies_blocks_independently() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w1 = Tensor::<f64>::uniform(&[3, 2], 1.0, &mut rng);
    let w = StructuredWeight::new(w1.clone(), Tensor::zeros(&[3, 2]), 4).unwrap();
    let x = Tensor::<f64>::uniform(&[8], 1.0, &mut rng);
    let y = w.apply(x.data()).unwrap();
    for n in 0..4 {
        let xn = Tensor::new(&[2, 1], x.data()[2 * n..2 * n + 2].to_vec()).unwrap();
        let yn = w1.matmul(&xn).unwrap();
        assert_eq!(&y[3 * n..3 * n + 3], yn.data());
    }
}

#[test]
fn structured_apply_commutes_with_block_permutations_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let w = StructuredWeight::<f64>::random(3, 4, 7, &mut rng);
    let x = Tensor::<f64>::uniform(&[28], 10.0, &mut rng);
    let y = w.apply(x.data()).unwrap();
    for _ in 0..100 {
        let p = Permutation::random(7, &mut rng);
        let lhs = w.apply(&p.apply_blocks(x.data(), 4).unwrap()).unwrap();
        let rhs = p.apply_blocks(&y, 3).unwrap();
        assert_eq!(lhs, rhs);
    }
}

#[test]
fn materialized_matrix_commutes_with_block_permutation_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w = StructuredWeight::<f64>::random(2, 2, 5, &mut rng);
    let p = Permutation::random(5, &mut rng);
    // Blockwise permutation on 2-vectors: Π ⊗ I_2.
    let small = p.matrix::<f64>();
    let big = Tensor::from_fn(&[10, 10], |idx| {
        let (r, c) = (idx / 10, idx % 10);
        if r % 2 == c % 2 {
            small.get(&[r / 2, c / 2])
        } else {
            0.0
        }
    });
    let m = w.materialize();
    let lhs = big.matmul(&m).unwrap();
    let rhs = m.matmul(&big).unwrap();
    for (a, b) in lhs.data().iter().zip(rhs.data()) {
        assert!((a - b).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn inverse_composes_to_identity(seed in 0u64..10_000, n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Permutation::random(n, &mut rng);
        prop_assert_eq!(p.inverse().compose(&p).unwrap(), Permutation::identity(n));
        prop_assert_eq!(p.compose(&p.inverse()).unwrap(), Permutation::identity(n));
    }

    #[test]
    fn row_and_column_permutations_match_matrix_products(seed in 0u64..10_000, r in 1usize..6, c in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(r, c, &mut rng);
        let pr = Permutation::random(r, &mut rng);
        let pc = Permutation::random(c, &mut rng);
        let rows = real_matrix(&pr.matrix()).matmul(&m).unwrap();
        prop_assert!(permute_rows(&m, &pr).unwrap().max_abs_diff(&rows) == 0.0);
        let cols = m.matmul(&real_matrix(&pc.matrix::<f64>().t().unwrap())).unwrap();
        prop_assert!(permute_cols(&m, &pc).unwrap().max_abs_diff(&cols) == 0.0);
    }

    #[test]
    fn axis_permutation_matches_rows(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = Tensor::<f64>::uniform(&[2, 5, 3], 1.0, &mut rng);
        let p = Permutation::random(5, &mut rng);
        let out = permute_axis(&t, 1, &p).unwrap();
        for b in 0..2 {
            for i in 0..5 {
                for j in 0..3 {
                    prop_assert_eq!(out.get(&[b, i, j]), t.get(&[b, p.as_slice()[i], j]));
                }
            }
        }
    }
}
