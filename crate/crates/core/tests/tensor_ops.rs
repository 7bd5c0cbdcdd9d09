use gbdl::rng;
use gbdl::tensor::gradcheck;
use gbdl::tensor::{ElementwiseOp, LinalgOp, Resample, Tape, Tensor, TensorError, Var};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const H: f64 = 1e-5;

fn randn(shape: &[usize], r: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(r)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn random_spd(n: usize, r: &mut impl Rng) -> Tensor {
    let a = randn(&[n, n], r);
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            s[i * n + j] = (0..n).map(|k| a.at2(i, k) * a.at2(j, k)).sum::<f64>();
        }
        s[i * n + i] += n as f64;
    }
    Tensor::new(vec![n, n], s).unwrap()
}

/// Scalar reduction with fixed random weights so every output entry
/// contributes a distinct adjoint.
fn weighted_sum(tape: &mut Tape, v: Var, seed: u64) -> gbdl::tensor::Result<Var> {
    let mut r = rng::stream(seed, 99);
    let w = randn(tape.shape(v), &mut r);
    let w = tape.constant(w);
    let p = tape.mul(v, w)?;
    Ok(tape.sum(p))
}

#[test]
fn elementwise_examples() {
    let mut t = Tape::new();
    let a = t.constant(Tensor::from_vec(vec![1.0, 2.0]));
    let b = t.constant(Tensor::from_vec(vec![3.0, 4.0]));
    let s = t.elementwise(ElementwiseOp::Add, a, Some(b)).unwrap();
    assert_eq!(t.value(s).data(), &[4.0, 6.0]);

    let x = t.constant(Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
    let r = t.elementwise(ElementwiseOp::Relu, x, None).unwrap();
    assert_eq!(t.value(r).data(), &[0.0, 0.0, 2.0]);

    let c = t.constant(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
    assert!(matches!(
        t.add(a, c),
        Err(TensorError::ShapeMismatch { .. })
    ));
    let z = t.constant(Tensor::from_vec(vec![1.0, 0.0]));
    assert!(matches!(t.log(z), Err(TensorError::Domain { .. })));
}

#[test]
fn softplus_gradient_at_zero() {
    let mut t = Tape::new();
    let x = t.param(Tensor::scalar(0.0));
    let y = t.softplus(x);
    t.backward(y).unwrap();
    let g = t.grad(x).unwrap().item();
    assert!((g - 0.5).abs() < 1e-15);
    let f = |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p();
    let fd = (f(H) - f(-H)) / (2.0 * H);
    assert!((g - fd).abs() < 1e-6);
}

#[test]
fn elementwise_gradients_match_finite_differences() {
    let ops = [
        ElementwiseOp::Add,
        ElementwiseOp::Sub,
        ElementwiseOp::Mul,
        ElementwiseOp::Neg,
        ElementwiseOp::Exp,
        ElementwiseOp::Log,
        ElementwiseOp::Relu,
        ElementwiseOp::Softplus,
        ElementwiseOp::Sigmoid,
    ];
    for (oi, op) in ops.into_iter().enumerate() {
        for trial in 0..20 {
            let mut r = rng::stream(trial, oi as u64);
            let mut a = randn(&[7], &mut r);
            if op == ElementwiseOp::Log {
                a = a.map(|v| v.abs() + 0.2);
            }
            if op == ElementwiseOp::Relu {
                // keep clear of the kink
                a = a.map(|v| if v.abs() < 0.05 { v + 0.2 } else { v });
            }
            let b = randn(&[7], &mut r);
            let rep = gradcheck::check(
                &[a, b],
                |t, v| {
                    let y = t.elementwise(op, v[0], Some(v[1]))?;
                    weighted_sum(t, y, trial)
                },
                H,
            )
            .unwrap();
            assert!(rep.max_rel_error() < 1e-6, "{op:?}: {rep:?}");
        }
    }
}

#[test]
fn scalar_broadcast_gradient() {
    for trial in 0..20 {
        let mut r = rng::stream(trial, 5);
        let a = randn(&[4, 3], &mut r);
        let s = randn(&[1], &mut r);
        let rep = gradcheck::check(
            &[a, s],
            |t, v| {
                let m = t.mul(v[0], v[1])?;
                let d = t.sub(v[1], m)?;
                weighted_sum(t, d, trial)
            },
            H,
        )
        .unwrap();
        assert!(rep.max_rel_error() < 1e-6, "{rep:?}");
    }
}

#[test]
fn matmul_examples_and_gradient() {
    let mut t = Tape::new();
    let i2 = t.constant(Tensor::eye(2));
    let m = t.constant(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
    let p = t.matmul(i2, m).unwrap();
    assert_eq!(t.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);
    let a = t.constant(Tensor::from_rows(&[&[1.0, 0.0]]));
    let b = t.constant(Tensor::from_rows(&[&[2.0], &[3.0]]));
    let ab = t.matmul(a, b).unwrap();
    assert_eq!(t.value(ab).data(), &[2.0]);
    assert!(t.matmul(a, m).is_ok());
    assert!(t.matmul(b, b).is_err());

    for trial in 0..20 {
        let mut r = rng::stream(trial, 7);
        let x = randn(&[3, 3], &mut r);
        let y = randn(&[3, 3], &mut r);
        let rep = gradcheck::check(
            &[x, y],
            |t, v| {
                let p = t.matmul(v[0], v[1])?;
                weighted_sum(t, p, trial)
            },
            H,
        )
        .unwrap();
        assert!(rep.max_rel_error() < 1e-5, "{rep:?}");
    }
}

#[test]
fn conv3d_identity_and_zero() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::full(&[1, 3, 3, 3], 1.0));
    let mut k = Tensor::zeros(&[1, 1, 3, 3, 3]);
    k.data_mut()[13] = 1.0;
    let k = t.constant(k);
    let y = t.conv3d(x, k, 1).unwrap();
    assert_eq!(t.value(y), t.value(x));

    let z = t.constant(Tensor::zeros(&[2, 4, 6, 6]));
    let mut r = rng::stream(1, 1);
    let k2 = t.constant(randn(&[3, 2, 3, 3, 3], &mut r));
    let y = t.conv3d(z, k2, 1).unwrap();
    assert_eq!(t.shape(y), &[3, 4, 6, 6]);
    assert!(t.value(y).data().iter().all(|&v| v == 0.0));

    let bad = t.constant(Tensor::zeros(&[3, 2, 1, 3, 3]));
    assert!(t.conv3d(z, bad, 1).is_err());
}

#[test]
fn conv3d_gradient_check() {
    for (trial, stride) in (0..20).zip([1, 1, 2].into_iter().cycle()) {
        let mut r = rng::stream(trial, 11);
        let x = randn(&[2, 4, 6, 6], &mut r);
        let k = randn(&[2, 2, 3, 3, 3], &mut r);
        let rep = gradcheck::check(
            &[x, k],
            |t, v| {
                let y = t.conv3d(v[0], v[1], stride)?;
                weighted_sum(t, y, trial)
            },
            H,
        )
        .unwrap();
        assert!(rep.max_rel_error() < 1e-4, "stride {stride}: {rep:?}");
    }
}

#[test]
fn conv3d_matches_direct_definition() {
    let mut r = rng::stream(3, 3);
    let x = randn(&[2, 3, 4, 4], &mut r);
    let k = randn(&[2, 2, 3, 3, 3], &mut r);
    let mut t = Tape::new();
    let (xv, kv) = (t.constant(x.clone()), t.constant(k.clone()));
    let y = t.conv3d(xv, kv, 1).unwrap();
    let at = |c: usize, d: isize, h: isize, w: isize| {
        if d < 0 || h < 0 || w < 0 || d >= 3 || h >= 4 || w >= 4 {
            0.0
        } else {
            x.data()[((c * 3 + d as usize) * 4 + h as usize) * 4 + w as usize]
        }
    };
    for co in 0..2 {
        for d in 0..3isize {
            for h in 0..4isize {
                for w in 0..4isize {
                    let mut s = 0.0;
                    for ci in 0..2 {
                        for kd in 0..3 {
                            for kh in 0..3 {
                                for kw in 0..3 {
                                    s += k.data()[(((co * 2 + ci) * 3 + kd) * 3 + kh) * 3 + kw]
                                        * at(ci, d + kd as isize - 1, h + kh as isize - 1, w + kw as isize - 1);
                                }
                            }
                        }
                    }
                    let got = t.value(y).data()[((co * 3 + d as usize) * 4 + h as usize) * 4 + w as usize];
                    assert!((got - s).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn resample_examples_and_gradient() {
    let mut t = Tape::new();
    let ones = t.constant(Tensor::full(&[2, 2], 1.0));
    let d = t.resample_spatial(ones, Resample::DownAvg2).unwrap();
    assert_eq!(t.value(d).data(), &[1.0]);

    let mut r = rng::stream(2, 2);
    let x = t.constant(randn(&[3, 2, 3, 5], &mut r));
    let up = t.resample_spatial(x, Resample::UpNearest2).unwrap();
    assert_eq!(t.shape(up), &[3, 2, 6, 10]);
    let back = t.resample_spatial(up, Resample::DownAvg2).unwrap();
    assert!(t.value(back).max_abs_diff(t.value(x)) < 1e-15);

    let odd = t.constant(Tensor::zeros(&[1, 3, 4]));
    assert!(t.resample_spatial(odd, Resample::DownAvg2).is_err());

    for trial in 0..20 {
        let mut r = rng::stream(trial, 13);
        let x = randn(&[2, 3, 4, 6], &mut r);
        for mode in [Resample::DownAvg2, Resample::UpNearest2] {
            let rep = gradcheck::check(
                &[x.clone()],
                |t, v| {
                    let y = t.resample_spatial(v[0], mode)?;
                    weighted_sum(t, y, trial)
                },
                H,
            )
            .unwrap();
            assert!(rep.max_rel_error() < 1e-5, "{mode:?} {rep:?}");
        }
    }
}

#[test]
fn dropout_contract() {
    let mut r = rng::stream(0, 0);
    let x = randn(&[50], &mut r);
    let mut t = Tape::new();
    let xv = t.constant(x.clone());
    let id = t.dropout(xv, 0.0, true, &mut r).unwrap();
    assert_eq!(t.value(id), &x);
    let off = t.dropout(xv, 0.5, false, &mut r).unwrap();
    assert_eq!(t.value(off), &x);
    assert!(t.dropout(xv, 1.0, true, &mut r).is_err());

    let run = || {
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let mut r = rng::stream(42, 1);
        let y = t.dropout(xv, 0.5, true, &mut r).unwrap();
        t.value(y).clone()
    };
    assert_eq!(run(), run());

    let n = 100_000;
    let mut t = Tape::new();
    let ones = t.constant(Tensor::full(&[n], 1.0));
    let mut r = rng::stream(7, 7);
    let y = t.dropout(ones, 0.3, true, &mut r).unwrap();
    let zeros = t.value(y).data().iter().filter(|&&v| v == 0.0).count();
    let frac = zeros as f64 / n as f64;
    assert!((frac - 0.3).abs() < 0.01, "{frac}");
    assert!(t
        .value(y)
        .data()
        .iter()
        .all(|&v| v == 0.0 || (v - 1.0 / 0.7).abs() < 1e-15));
}

#[test]
fn linalg_examples() {
    let mut t = Tape::new();
    let i4 = t.constant(Tensor::eye(4));
    let ld = t.linalg(LinalgOp::LogDet, i4).unwrap();
    assert_eq!(t.value(ld).item(), 0.0);
    let d = t.constant(Tensor::from_rows(&[&[2.0, 0.0], &[0.0, 4.0]]));
    let inv = t.linalg(LinalgOp::MatInv, d).unwrap();
    assert_eq!(t.value(inv).data(), &[0.5, 0.0, 0.0, 0.25]);
    let ns = t.constant(Tensor::from_rows(&[&[1.0, 3.0], &[3.0, 1.0]]));
    match t.linalg(LinalgOp::Cholesky, ns) {
        Err(TensorError::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
        other => panic!("{other:?}"),
    }
    let err = t.linalg(LinalgOp::LogDet, ns).unwrap_err();
    assert!(err.to_string().contains("pivot 1"), "{err}");
}

#[test]
fn linalg_gradients() {
    for trial in 0..20 {
        let mut r = rng::stream(trial, 17);
        let a = random_spd(5, &mut r);
        let rep = gradcheck::check(&[a.clone()], |t, v| t.logdet(v[0]), H).unwrap();
        assert!(rep.max_rel_error() < 1e-4, "logdet {rep:?}");
        let rep = gradcheck::check(
            &[a.clone()],
            |t, v| {
                let y = t.matinv(v[0])?;
                weighted_sum(t, y, trial)
            },
            H,
        )
        .unwrap();
        assert!(rep.max_rel_error() < 1e-4, "matinv {rep:?}");
        let rep = gradcheck::check(
            &[a.clone()],
            |t, v| {
                let y = t.cholesky(v[0])?;
                weighted_sum(t, y, trial)
            },
            H,
        )
        .unwrap();
        assert!(rep.max_rel_error() < 1e-4, "cholesky {rep:?}");

        let l = {
            let mut t = Tape::new();
            let av = t.constant(a);
            let l = t.cholesky(av).unwrap();
            t.value(l).clone()
        };
        let b = randn(&[5, 2], &mut r);
        for transpose in [false, true] {
            let rep = gradcheck::check(
                &[l.clone(), b.clone()],
                |t, v| {
                    let x = t.tri_solve(v[0], v[1], transpose)?;
                    weighted_sum(t, x, trial)
                },
                H,
            )
            .unwrap();
            // upper-triangle entries of L are never read: both sides are zero there
            assert!(rep.max_rel_error() < 1e-4, "tri_solve {transpose} {rep:?}");
        }
    }
}

#[test]
fn log_softmax_is_stable_and_matches_softmax() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::from_vec(vec![1000.0, 0.0, -1000.0]));
    let l = t.log_softmax(x, 0).unwrap();
    let v = t.value(l).data().to_vec();
    assert!(v.iter().all(|x| x.is_finite()));
    assert!(v[0].abs() < 1e-12 && (v[1] + 1000.0).abs() < 1e-9);

    let mut r = rng::stream(5, 5);
    let y = t.constant(randn(&[2, 3, 4], &mut r));
    let (sm, lsm) = (t.softmax(y, 1).unwrap(), t.log_softmax(y, 1).unwrap());
    for (p, lp) in t.value(sm).data().iter().zip(t.value(lsm).data()) {
        assert!((p.ln() - lp).abs() < 1e-12);
    }
}

#[test]
fn reduce_examples_and_gradients() {
    let mut t = Tape::new();
    let z = t.constant(Tensor::from_vec(vec![0.0, 0.0]));
    let s = t.softmax_lastdim(z).unwrap();
    assert_eq!(t.value(s).data(), &[0.5, 0.5]);

    let mut r = rng::stream(4, 4);
    let x = t.constant(randn(&[3, 4, 5], &mut r));
    let rs = t.reshape(x, &[12, 5]).unwrap();
    let (s1, s2) = (t.sum(x), t.sum(rs));
    assert_eq!(t.value(s1).item(), t.value(s2).item());
    assert!(t.reshape(x, &[7, 5]).is_err());

    let sm = t.softmax(x, 1).unwrap();
    for o in 0..3 {
        for i in 0..5 {
            let tot: f64 = (0..4).map(|c| t.value(sm).data()[(o * 4 + c) * 5 + i]).sum();
            assert!((tot - 1.0).abs() < 1e-12);
        }
    }

    for trial in 0..20 {
        let mut r = rng::stream(trial, 19);
        let a = randn(&[3, 4, 5], &mut r);
        let b = randn(&[3, 2, 5], &mut r);
        let rep = gradcheck::check(
            &[a.clone()],
            |t, v| {
                let y = t.softmax_lastdim(v[0])?;
                weighted_sum(t, y, trial)
            },
            H,
        )
        .unwrap();
        assert!(rep.max_rel_error() < 1e-5, "softmax {rep:?}");
        let rep = gradcheck::check(
            &[a.clone()],
            |t, v| {
                let y = t.log_softmax(v[0], 1)?;
                weighted_sum(t, y, trial)
            },
            H,
        )
        .unwrap();
        assert!(rep.max_rel_error() < 1e-5, "log_softmax {rep:?}");
        let rep = gradcheck::check(
            &[a, b],
            |t, v| {
                let c = t.concat(&[v[0], v[1]], 1)?;
                let s = t.slice_index(c, 1, 2, 3)?;
                let r = t.reshape(s, &[9, 5])?;
                let m = t.mean(r);
                let w = weighted_sum(t, c, trial)?;
                t.add(m, w)
            },
            H,
        )
        .unwrap();
        assert!(rep.max_rel_error() < 1e-5, "rearrange {rep:?}");
    }
}

#[test]
fn spatial_helpers_gradients() {
    for trial in 0..20 {
        let mut r = rng::stream(trial, 23);
        let x = randn(&[3, 2, 4, 4], &mut r);
        let b = randn(&[3], &mut r);
        let z = randn(&[3, 2], &mut r);
        let rep = gradcheck::check(
            &[x, b, z],
            |t, v| {
                let y = t.channel_bias(v[0], v[1])?;
                let m = t.mean_spatial(y)?;
                let bz = t.broadcast_spatial(v[2], 4, 4)?;
                let p = t.mul(y, bz)?;
                let s1 = weighted_sum(t, p, trial)?;
                let s2 = weighted_sum(t, m, trial + 1)?;
                t.add(s1, s2)
            },
            H,
        )
        .unwrap();
        assert!(rep.max_rel_error() < 1e-5, "{rep:?}");
    }
}

#[test]
fn backward_twice_is_rejected_and_reset_allows_rerun() {
    let mut t = Tape::new();
    let x = t.param(Tensor::from_vec(vec![1.0, 2.0]));
    let y = t.mul(x, x).unwrap();
    let s = t.sum(y);
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap().data(), &[2.0, 4.0]);
    assert_eq!(t.backward(s), Err(TensorError::BackwardTwice));
    t.reset_grads();
    assert!(t.grad(x).is_none());
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap().data(), &[2.0, 4.0]);

    assert!(matches!(t.backward(y), Err(TensorError::BackwardTwice)));
    t.reset_grads();
    assert!(matches!(t.backward(y), Err(TensorError::NonScalarRoot(_))));
}

#[test]
fn every_reachable_param_gets_same_shape_grad() {
    let mut t = Tape::new();
    let a = t.param(Tensor::zeros(&[2, 3]));
    let b = t.param(Tensor::zeros(&[4]));
    let c = t.constant(Tensor::zeros(&[2, 3]));
    let y = t.add(a, c).unwrap();
    let s = t.sum(y);
    t.backward(s).unwrap();
    assert_eq!(t.grad(a).unwrap().shape(), &[2, 3]);
    assert_eq!(t.grad(b).unwrap().shape(), &[4]);
    assert!(t.grad(c).is_none());
}

#[test]
fn adjoint_is_linear() {
    let mut r = rng::stream(9, 9);
    let x0 = randn(&[4, 4], &mut r);
    let f = |t: &mut Tape, x: Var| -> gbdl::tensor::Result<Var> {
        let e = t.exp(x);
        t.sum(e);
        let s = t.softmax(x, 0)?;
        weighted_sum(t, s, 1)
    };
    let g = |t: &mut Tape, x: Var| -> gbdl::tensor::Result<Var> {
        let m = t.matmul(x, x)?;
        weighted_sum(t, m, 2)
    };
    let grad_of = |which: u8| {
        let mut t = Tape::new();
        let x = t.param(x0.clone());
        let root = match which {
            0 => f(&mut t, x).unwrap(),
            1 => g(&mut t, x).unwrap(),
            _ => {
                let a = f(&mut t, x).unwrap();
                let b = g(&mut t, x).unwrap();
                t.add(a, b).unwrap()
            }
        };
        t.backward(root).unwrap();
        t.grad(x).unwrap()
    };
    let (gf, gg, gs) = (grad_of(0), grad_of(1), grad_of(2));
    for k in 0..16 {
        assert!((gf.data()[k] + gg.data()[k] - gs.data()[k]).abs() < 1e-12);
    }
}

#[test]
fn forward_backward_is_bit_identical() {
    let run = || {
        let mut r = rng::stream(5, 5);
        let x = randn(&[2, 3, 4, 4], &mut r);
        let k = randn(&[3, 2, 3, 3, 3], &mut r);
        let mut t = Tape::new();
        let (xv, kv) = (t.param(x), t.param(k));
        let y = t.conv3d(xv, kv, 1).unwrap();
        let y = t.dropout(y, 0.3, true, &mut r).unwrap();
        let s = weighted_sum(&mut t, y, 3).unwrap();
        t.backward(s).unwrap();
        (t.value(s).item().to_bits(), t.grad(kv).unwrap())
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    assert!(a.1.data().iter().zip(b.1.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
}
