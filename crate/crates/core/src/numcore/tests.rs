use super::*;
use crate::error::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn row(v: &[f64]) -> Tensor {
    Tensor::row(v.to_vec())
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn logsumexp_of_zeros_is_ln2() {
    let mut t = Tape::new();
    let x = t.constant(row(&[0.0, 0.0]));
    let y = t.logsumexp(x).unwrap();
    assert!((t.value(y).item() - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn dilated_causal_conv_hand_example() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::matrix(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let w = t.constant(Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap());
    let y = t.conv1d(x, w, None, ConvGeom::causal(2, 2)).unwrap();
    assert_eq!(t.value(y).data(), &[1.0, 2.0, 4.0, 6.0]);
}

#[test]
fn identity_matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&[3, 5], &mut rng);
    let mut t = Tape::new();
    let i = t.constant(Tensor::eye(3));
    let av = t.constant(a.clone());
    let y = t.matmul(i, av).unwrap();
    assert_eq!(t.value(y), &a);
}

#[test]
fn backward_examples() {
    let mut t = Tape::new();
    let x = t.leaf(row(&[1.0, 2.0]), true);
    let sq = t.mul(x, x).unwrap();
    let s = t.sum(sq).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[2.0, 4.0]);

    let mut t = Tape::new();
    let x = t.leaf(row(&[0.0, 0.0]), true);
    let l = t.logsumexp(x).unwrap();
    t.backward(l).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[0.5, 0.5]);

    let mut t = Tape::new();
    let z = t.constant(Tensor::scalar(0.0));
    let w = t.leaf(Tensor::scalar(1.0), true);
    let s = t.sigmoid(z).unwrap();
    let y = t.scalar_mul(w, s).unwrap();
    t.backward(y).unwrap();
    assert_eq!(t.grad(w).unwrap(), &[0.5]);
}

#[test]
fn repeated_backward_accumulates_until_zeroed() {
    let mut t = Tape::new();
    let x = t.leaf(row(&[3.0]), true);
    let y = t.scale(x, 2.0).unwrap();
    let s = t.sum(y).unwrap();
    t.backward(s).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[4.0]);
    t.zero_grads();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[2.0]);
}

#[test]
fn non_scalar_root_is_rejected() {
    let mut t = Tape::new();
    let x = t.leaf(row(&[1.0, 2.0]), true);
    assert!(matches!(t.backward(x), Err(Error::Contract(_))));
}

#[test]
fn shape_mismatch_is_contract_violation() {
    let mut t = Tape::new();
    let a = t.constant(row(&[1.0, 2.0]));
    let b = t.constant(row(&[1.0, 2.0, 3.0]));
    assert!(matches!(t.add(a, b), Err(Error::Contract(_))));
    assert!(matches!(t.matmul(a, b), Err(Error::Contract(_))));
}

#[test]
fn non_finite_output_names_the_op() {
    let mut t = Tape::new();
    let a = t.constant(row(&[-1.0]));
    match t.log(a) {
        Err(Error::Numeric { op, .. }) => assert_eq!(op, "log"),
        other => panic!("expected numeric fault, got {other:?}"),
    }
}

#[test]
fn grad_check_sum_of_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[1, 8], &mut rng);
    let err = grad_check(
        |t, x| {
            let sq = t.mul(x, x)?;
            t.sum(sq)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "err {err}");
}

#[test]
fn grad_check_constant_function_is_exact() {
    let x = row(&[0.3, -0.2]);
    let err = grad_check(|t, _x| Ok(t.constant(Tensor::scalar(4.0))), &x, 1e-5).unwrap();
    assert_eq!(err, 0.0);
}

/// Every primitive, wrapped so the output is a scalar via a fixed random
/// projection (so that each output coordinate contributes differently).
fn primitive_cases() -> Vec<(&'static str, Vec<usize>, Box<dyn Fn(&mut Tape, Var) -> crate::Result<Var>>)> {
    fn project(t: &mut Tape, y: Var) -> crate::Result<Var> {
        let n = t.value(y).numel();
        let shape = t.shape(y).to_vec();
        let weights: Vec<f64> = (0..n).map(|i| 0.3 + ((i * 7919) % 13) as f64 / 10.0).collect();
        let w = t.constant(Tensor::new(shape, weights).unwrap());
        let p = t.mul(y, w)?;
        t.sum(p)
    }
    let other = |shape: &[usize], seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random(shape, &mut rng)
    };
    let o34 = other(&[3, 4], 11);
    let o42 = other(&[4, 2], 12);
    let o23 = other(&[2, 3], 13);
    let w_conv = other(&[2, 3, 2], 14);
    let b_conv = other(&[1, 2], 15);
    let w_ct = other(&[3, 2, 4], 16);
    vec![
        ("add", vec![3, 4], Box::new(move |t, x| {
            let c = t.constant(o34.clone());
            let y = t.add(x, c)?;
            project(t, y)
        })),
        ("sub", vec![3, 4], Box::new(|t, x| {
            let y = t.sub(x, x)?;
            let z = t.sub(y, x)?;
            project(t, z)
        })),
        ("mul", vec![3, 4], Box::new(|t, x| {
            let y = t.mul(x, x)?;
            project(t, y)
        })),
        ("scale", vec![3, 4], Box::new(|t, x| {
            let y = t.scale(x, -1.7)?;
            project(t, y)
        })),
        ("scalar_mul", vec![1], Box::new(|t, s| {
            let c = t.constant(Tensor::matrix(2, 2, vec![0.1, 0.2, -0.3, 0.4]).unwrap());
            let y = t.scalar_mul(s, c)?;
            let y = t.scalar_add(s, y)?;
            project(t, y)
        })),
        ("matmul", vec![3, 4], Box::new(move |t, x| {
            let b = t.constant(o42.clone());
            let y = t.matmul(x, b)?;
            let y2 = t.matmul(x, b)?;
            let z = t.add(y, y2)?;
            project(t, z)
        })),
        ("matmul_rhs", vec![3, 4], Box::new(move |t, x| {
            let a = t.constant(o23.clone());
            let y = t.matmul(a, x)?;
            project(t, y)
        })),
        ("transpose", vec![3, 4], Box::new(|t, x| {
            let y = t.transpose(x)?;
            project(t, y)
        })),
        ("concat", vec![3, 4], Box::new(|t, x| {
            let a = t.concat(&[x, x], 0)?;
            let b = t.concat(&[x, x], 1)?;
            let pa = project(t, a)?;
            let pb = project(t, b)?;
            t.add(pa, pb)
        })),
        ("slice", vec![3, 4], Box::new(|t, x| {
            let a = t.slice(x, 0, 1, 2)?;
            let b = t.slice(x, 1, 1, 3)?;
            let pa = project(t, a)?;
            let pb = project(t, b)?;
            t.add(pa, pb)
        })),
        ("expand_rows", vec![1, 4], Box::new(|t, x| {
            let y = t.expand_rows(x, 3)?;
            project(t, y)
        })),
        ("tanh", vec![3, 4], Box::new(|t, x| {
            let y = t.tanh(x)?;
            project(t, y)
        })),
        ("sigmoid", vec![3, 4], Box::new(|t, x| {
            let y = t.sigmoid(x)?;
            project(t, y)
        })),
        ("softplus", vec![3, 4], Box::new(|t, x| {
            let y = t.softplus(x)?;
            project(t, y)
        })),
        ("exp", vec![3, 4], Box::new(|t, x| {
            let y = t.exp(x)?;
            project(t, y)
        })),
        ("log", vec![3, 4], Box::new(|t, x| {
            let e = t.exp(x)?;
            let e = t.add_const(e, 0.5)?;
            let y = t.log(e)?;
            project(t, y)
        })),
        ("logsumexp", vec![3, 4], Box::new(|t, x| {
            let y = t.logsumexp(x)?;
            project(t, y)
        })),
        ("sum_axis", vec![3, 4], Box::new(|t, x| {
            let a = t.sum_axis(x, 0)?;
            let b = t.mean_axis(x, 1)?;
            let pa = project(t, a)?;
            let pb = project(t, b)?;
            let m = t.mean(x)?;
            let s = t.add(pa, pb)?;
            t.add(s, m)
        })),
        ("conv1d_dilated_causal", vec![3, 7], Box::new(move |t, x| {
            let w = t.constant(w_conv.clone());
            let b = t.constant(b_conv.clone());
            let y = t.conv1d(x, w, Some(b), ConvGeom::causal(2, 3))?;
            project(t, y)
        })),
        ("conv1d_weight", vec![2, 3, 2], Box::new(|t, w| {
            let x = t.constant(Tensor::matrix(3, 8, (0..24).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap());
            let y = t.conv1d(x, w, None, ConvGeom::strided(2))?;
            project(t, y)
        })),
        ("conv_transpose1d", vec![3, 5], Box::new(move |t, x| {
            let w = t.constant(w_ct.clone());
            let y = t.conv_transpose1d(x, w, None, 4)?;
            project(t, y)
        })),
        ("conv_transpose1d_weight", vec![3, 2, 4], Box::new(|t, w| {
            let x = t.constant(Tensor::matrix(3, 5, (0..15).map(|i| (i as f64 * 0.53).cos()).collect()).unwrap());
            let b = t.constant(Tensor::row(vec![0.1, -0.2]));
            let y = t.conv_transpose1d(x, w, Some(b), 2)?;
            project(t, y)
        })),
    ]
}

#[test]
fn every_primitive_passes_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (name, shape, f) in primitive_cases() {
        for _ in 0..10 {
            let x = random(&shape, &mut rng);
            let err = grad_check(&f, &x, 1e-5).unwrap();
            assert!(err < 1e-4, "{name}: relative error {err}");
        }
    }
}

#[test]
fn clamp_min_blocks_gradient_below_floor() {
    let mut t = Tape::new();
    let x = t.leaf(row(&[-10.0, 0.5]), true);
    let y = t.clamp_min(x, -7.0).unwrap();
    let s = t.sum(y).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.value(y).data(), &[-7.0, 0.5]);
    assert_eq!(t.grad(x).unwrap(), &[0.0, 1.0]);
}

#[test]
fn causal_conv_ignores_future_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random(&[2, 12], &mut rng);
    let w = random(&[3, 2, 2], &mut rng);
    let run = |x: &Tensor| {
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let wv = t.constant(w.clone());
        let y = t.conv1d(xv, wv, None, ConvGeom::causal(2, 4)).unwrap();
        t.value(y).clone()
    };
    let base = run(&x);
    for cut in 0..12 {
        let mut perturbed = x.clone();
        for c in 0..2 {
            for s in cut + 1..12 {
                perturbed.data_mut()[c * 12 + s] += 5.0;
            }
        }
        let out = run(&perturbed);
        for co in 0..3 {
            for s in 0..=cut {
                assert_eq!(out.data()[co * 12 + s], base.data()[co * 12 + s]);
            }
        }
    }
}

proptest! {
    #[test]
    fn logsumexp_shift_invariance(xs in prop::collection::vec(-50.0f64..50.0, 1..20), c in -100.0f64..100.0) {
        let lse = ops::logsumexp(&xs);
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        prop_assert!((ops::logsumexp(&shifted) - (lse + c)).abs() < 1e-12);
    }

    #[test]
    fn log_sigmoid_diff_matches_direct(a in -20.0f64..20.0, gap in 1e-3f64..5.0) {
        let b = a - gap;
        // in the upper tail the complements avoid cancelling two values near 1
        let diff = if a + b > 0.0 { ops::sigmoid(-b) - ops::sigmoid(-a) } else { ops::sigmoid(a) - ops::sigmoid(b) };
        let direct = diff.ln();
        prop_assert!((ops::log_sigmoid_diff(a, b) - direct).abs() < 1e-9 * (1.0 + direct.abs()));
    }
}
