use gbdl::losses::{self, ElboParts, LossError, LossWeights};
use gbdl::metrics;
use gbdl::rng;
use gbdl::tensor::{gradcheck, Tape, Tensor, TensorError, Var};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn randn(shape: &[usize], r: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| StandardNormal.sample(r)).collect()).unwrap()
}

fn labels(n: usize, classes: u8, r: &mut impl Rng) -> Vec<u8> {
    (0..n).map(|_| r.random_range(0..classes)).collect()
}

fn te(e: LossError) -> TensorError {
    TensorError::Invalid(e.to_string())
}

fn value(f: impl FnOnce(&mut Tape) -> Var) -> f64 {
    let mut t = Tape::new();
    let v = f(&mut t);
    t.value(v).item()
}

/// Strongly peaked logits for the given labels.
fn confident(target: &[u8], classes: usize, margin: f64) -> Tensor {
    let n = target.len();
    let mut d = vec![0.0; classes * n];
    for (i, &l) in target.iter().enumerate() {
        d[l as usize * n + i] = margin;
    }
    Tensor::new(vec![classes, 1, 1, n], d).unwrap()
}

#[test]
fn cross_entropy_examples() {
    let target = vec![0, 1, 1, 0, 1];
    let ce = value(|t| {
        let l = t.constant(Tensor::zeros(&[2, 1, 1, 5]));
        losses::cross_entropy(t, l, &target).unwrap()
    });
    assert!((ce - 2f64.ln()).abs() < 1e-12);
    assert!((ce - 0.6931).abs() < 1e-4);
    let ce = value(|t| {
        let l = t.constant(confident(&target, 2, 50.0));
        losses::cross_entropy(t, l, &target).unwrap()
    });
    assert!(ce >= 0.0 && ce < 1e-20);

    let mut t = Tape::new();
    let l = t.constant(Tensor::zeros(&[2, 1, 1, 2]));
    assert!(matches!(losses::cross_entropy(&mut t, l, &[0, 2]), Err(LossError::ClassOutOfRange { label: 2, .. })));
    assert!(matches!(losses::cross_entropy(&mut t, l, &[0]), Err(LossError::ShapeMismatch { .. })));
}

#[test]
fn dice_examples() {
    let target = vec![0, 1, 1, 0, 2, 2];
    let oh = losses::one_hot(&target, 3, &[1, 2, 3]).unwrap();
    let loss = value(|t| {
        let p = t.constant(oh.clone());
        losses::dice_loss(t, p, &target).unwrap()
    });
    assert!(loss.abs() < 1e-5);
    let shifted: Vec<u8> = target.iter().map(|&l| if l == 0 { 1 } else { 0 }).collect();
    let disjoint = losses::one_hot(&shifted, 3, &[1, 2, 3]).unwrap();
    let loss = value(|t| {
        let p = t.constant(disjoint);
        losses::dice_loss(t, p, &target).unwrap()
    });
    assert!((loss - 1.0).abs() < 1e-5);
}

#[test]
fn mse_examples() {
    let mut r = rng::stream(1, 0);
    let x = randn(&[1, 2, 3, 3], &mut r);
    let same = value(|t| {
        let (a, b) = (t.constant(x.clone()), t.constant(x.clone()));
        losses::mse(t, a, b).unwrap()
    });
    assert_eq!(same, 0.0);
    let off = value(|t| {
        let a = t.constant(x.map(|v| v + 1.0));
        let b = t.constant(x.clone());
        losses::mse(t, a, b).unwrap()
    });
    assert!((off - 1.0).abs() < 1e-12);
    let mut t = Tape::new();
    let (a, b) = (t.constant(Tensor::zeros(&[2])), t.constant(Tensor::zeros(&[3])));
    assert!(losses::mse(&mut t, a, b).is_err());
}

#[test]
fn loss_gradients_match_finite_differences() {
    for trial in 0..20 {
        let mut r = rng::stream(trial, 1);
        let logits = randn(&[3, 2, 2, 3], &mut r);
        let target = labels(12, 3, &mut r);
        let x = randn(&[1, 2, 2, 3], &mut r);
        let recon = randn(&[1, 2, 2, 3], &mut r);

        let ce = gradcheck::check(&[logits.clone()], |t, v| losses::cross_entropy(t, v[0], &target).map_err(te), 1e-5).unwrap();
        assert!(ce.max_rel_error() < 1e-5, "ce {ce:?}");

        let dice = gradcheck::check(
            &[logits.clone()],
            |t, v| {
                let p = t.softmax(v[0], 0)?;
                losses::dice_loss(t, p, &target).map_err(te)
            },
            1e-5,
        )
        .unwrap();
        assert!(dice.max_rel_error() < 1e-4, "dice {dice:?}");

        let mse = gradcheck::check(&[recon, x], |t, v| losses::mse(t, v[0], v[1]).map_err(te), 1e-5).unwrap();
        assert!(mse.max_rel_error() < 1e-6, "mse {mse:?}");

        let w = LossWeights::default();
        let seg = gradcheck::check(&[logits.clone()], |t, v| Ok(losses::seg_loss(t, v[0], &target, &w).map_err(te)?.total), 1e-5).unwrap();
        assert!(seg.max_rel_error() < 1e-4, "seg {seg:?}");

        let parts = [randn(&[], &mut r).map(f64::abs), randn(&[], &mut r).map(f64::abs)];
        let elbo = gradcheck::check(
            &[logits.clone(), parts[0].clone(), parts[1].clone()],
            |t, v| {
                let ce = losses::cross_entropy(t, v[0], &target).map_err(te)?;
                let p = t.softmax(v[0], 0)?;
                let dice = losses::dice_loss(t, p, &target).map_err(te)?;
                let parts = ElboParts { ce: Some(ce), dice: Some(dice), mse: v[1], kl: v[2] };
                losses::elbo_loss(t, parts, &w).map_err(te)
            },
            1e-5,
        )
        .unwrap();
        assert!(elbo.max_rel_error() < 1e-4, "elbo {elbo:?}");
    }
}

#[test]
fn elbo_examples() {
    let w = LossWeights::default();
    assert_eq!((w.lambda_ce, w.lambda_dice, w.lambda_mse, w.lambda_kl), (1.0, 2.0, 1.0, 0.005));
    assert_eq!((w.beta_ce, w.beta_dice), (1.0, 2.0));
    let v = losses::elbo_value(ElboParts { ce: Some(0.7), dice: Some(0.5), mse: 0.2, kl: 10.0 }, &w).unwrap();
    assert!((v - 1.95).abs() < 1e-12);
    let zero = losses::elbo_value(ElboParts { ce: Some(0.0), dice: Some(0.0), mse: 0.0, kl: 0.0 }, &w).unwrap();
    assert_eq!(zero, 0.0);

    let on_tape = |parts: ElboParts<f64>| {
        value(|t| {
            let c = |t: &mut Tape, x: f64| t.constant(Tensor::scalar(x));
            let p = ElboParts {
                ce: parts.ce.map(|x| c(t, x)),
                dice: parts.dice.map(|x| c(t, x)),
                mse: c(t, parts.mse),
                kl: c(t, parts.kl),
            };
            losses::elbo_loss(t, p, &w).unwrap()
        })
    };
    let unlabeled = on_tape(ElboParts { ce: None, dice: None, mse: 0.2, kl: 10.0 });
    assert!((unlabeled - (0.2 + 0.05)).abs() < 1e-12);

    let mut r = rng::stream(2, 0);
    for _ in 0..100 {
        let p: Vec<f64> = (0..4).map(|_| r.random_range(0.0..5.0)).collect();
        let ww = LossWeights {
            lambda_ce: r.random_range(0.0..3.0),
            lambda_dice: r.random_range(0.0..3.0),
            lambda_mse: r.random_range(0.0..3.0),
            lambda_kl: r.random_range(0.0..0.1),
            ..w
        };
        let parts = ElboParts { ce: Some(p[0]), dice: Some(p[1]), mse: p[2], kl: p[3] };
        let independent = ww.lambda_ce * p[0] + ww.lambda_dice * p[1] + ww.lambda_mse * p[2] + ww.lambda_kl * p[3];
        assert!((losses::elbo_value(parts, &ww).unwrap() - independent).abs() < 1e-12);
    }

    let neg = LossWeights { lambda_kl: -0.1, ..w };
    assert!(matches!(losses::elbo_value(ElboParts { ce: None, dice: None, mse: 0.0, kl: 0.0 }, &neg), Err(LossError::NegativeWeight { name: "lambda_kl", .. })));
}

#[test]
fn seg_loss_examples() {
    let w = LossWeights::default();
    assert!((losses::seg_value(0.6931, 0.5, &w).unwrap() - 1.6931).abs() < 1e-12);
    let target = vec![0, 1, 1, 0, 1, 0, 0, 0];
    let perfect = value(|t| {
        let l = t.constant(confident(&target, 2, 60.0));
        losses::seg_loss(t, l, &target, &w).unwrap().total
    });
    assert!(perfect >= 0.0 && perfect < 1e-5);
}

#[test]
fn dice_loss_and_dice_score_are_complementary_on_one_hot_input() {
    let mut r = rng::stream(3, 0);
    for _ in 0..20 {
        let target = labels(64, 2, &mut r);
        let pred = labels(64, 2, &mut r);
        let probs = losses::one_hot(&pred, 2, &[4, 4, 4]).unwrap();
        let loss = value(|t| {
            let p = t.constant(probs);
            losses::dice_loss(t, p, &target).unwrap()
        });
        let score = metrics::overlap_scores(&pred, &target).unwrap().dice;
        assert!((loss + score - 1.0).abs() < 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn losses_are_nonnegative_and_linear_in_weights(seed in any::<u64>(), k in 0.0f64..10.0) {
        let mut r = rng::stream(seed, 0);
        let logits = randn(&[2, 2, 2, 2], &mut r).map(|v| 3.0 * v);
        let target = labels(8, 2, &mut r);
        let w = LossWeights::default();
        let (total, ce, dice) = {
            let mut t = Tape::new();
            let l = t.constant(logits.clone());
            let s = losses::seg_loss(&mut t, l, &target, &w).unwrap();
            (t.value(s.total).item(), t.value(s.ce).item(), t.value(s.dice).item())
        };
        prop_assert!(total >= 0.0 && ce >= 0.0 && dice >= 0.0);
        let scaled = losses::seg_value(ce, dice, &w.scaled(k)).unwrap();
        prop_assert!((scaled - k * total).abs() <= 1e-12 * (1.0 + scaled.abs()));
        let parts = ElboParts { ce: Some(ce), dice: Some(dice), mse: r.random_range(0.0..1.0), kl: r.random_range(0.0..5.0) };
        let e = losses::elbo_value(parts, &w).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert!((losses::elbo_value(parts, &w.scaled(k)).unwrap() - k * e).abs() <= 1e-12 * (1.0 + k * e));
    }
}
