use gbdl::losses;
use gbdl::model::{self, KlVariant, LrlModel, LrlPass, ModelConfig, SegNet};
use gbdl::rng;
use gbdl::tensor::{gradcheck, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::Rng;

fn tiny(variant: KlVariant) -> ModelConfig {
    ModelConfig {
        channels: [2, 3],
        latent_dim: 2,
        latent_channels: 2,
        kl_variant: variant,
        ..Default::default()
    }
}

fn volume(shape: [usize; 4], seed: u64) -> Tensor {
    let mut r = rng::stream(seed, 99);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random::<f64>()).collect()).unwrap()
}

#[test]
fn lrl_shapes_follow_the_input_depth() {
    for variant in [KlVariant::Fused, KlVariant::Volume, KlVariant::Ic] {
        let m = LrlModel::new(ModelConfig { kl_variant: variant, ..Default::default() }, &mut rng::stream(1, 0)).unwrap();
        for depth in [4, 7] {
            let mut t = Tape::new();
            let b = m.params.bind(&mut t, false);
            let x = t.constant(volume([1, depth, 8, 8], 2));
            let noise = m.draw_noise(depth, &mut rng::stream(1, 1));
            let out = m.forward(&mut t, &b, x, &noise, LrlPass::FULL).unwrap();
            let expected_gaussians = if variant == KlVariant::Volume { 1 } else { depth };
            assert_eq!(out.gaussians.len(), expected_gaussians);
            assert_eq!(t.shape(out.z), &[depth, 8]);
            assert_eq!(t.shape(out.recon.unwrap()), &[1, depth, 8, 8]);
            assert_eq!(t.shape(out.seg_logits.unwrap()), &[2, depth, 8, 8]);
            assert!(t.value(out.kl).item() >= 0.0);
        }
    }
}

#[test]
fn every_layer_preserves_depth() {
    let net = SegNet::new(ModelConfig::default(), &mut rng::stream(3, 0)).unwrap();
    let mut t = Tape::new();
    let b = net.params.bind(&mut t, false);
    let x = t.constant(volume([1, 5, 8, 8], 3));
    let (skip, bott) = net.encoder.forward(&mut t, &b, x).unwrap();
    assert_eq!(t.shape(skip)[1], 5);
    assert_eq!(t.shape(bott)[1], 5);
    for conv in net.encoder.convs() {
        let cin = net.params.get(conv.weight).shape()[1];
        let probe = t.constant(Tensor::zeros(&[cin, 5, 4, 4]));
        let y = conv.apply(&mut t, &b, probe).unwrap();
        assert_eq!(t.shape(y)[1], 5);
    }
    let logits = net.forward(&mut t, &b, x, false, &mut rng::stream(0, 0)).unwrap();
    assert_eq!(t.shape(logits), &[2, 5, 8, 8]);
}

#[test]
fn zero_head_weights_give_the_softplus_bias_path() {
    let mut m = LrlModel::new(ModelConfig::default(), &mut rng::stream(4, 0)).unwrap();
    for i in m.head_params() {
        m.params.values_mut()[i].data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let mut t = Tape::new();
    let b = m.params.bind(&mut t, false);
    let x = t.constant(volume([1, 6, 8, 8], 4));
    let out = m.forward(&mut t, &b, x, &m.zero_noise(6), LrlPass::UNLABELED).unwrap();
    // softplus(0) plus the diagonal floor
    let sp0 = 2f64.ln() + 1e-3;
    for g in &out.gaussians {
        assert!(t.value(g.mean).data().iter().all(|&v| v == 0.0));
        let l = t.value(g.prec_chol);
        let d = l.shape()[0];
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { sp0 } else { 0.0 };
                assert!((l.at2(i, j) - want).abs() < 1e-15);
            }
        }
        let prec = gbdl::gaussian::SliceGaussian::new(vec![0.0; d], l.clone()).unwrap().precision();
        assert!((prec.at2(0, 0) - (sp0 * sp0 + gbdl::gaussian::PRECISION_JITTER)).abs() < 1e-15);
    }
}

#[test]
fn receptive_field_bounds_slice_dependence() {
    for k in [1, 2] {
        let cfg = ModelConfig { convs_per_stage: k, ..Default::default() };
        let m = LrlModel::new(cfg, &mut rng::stream(5, 0)).unwrap();
        let n_rf = m.receptive_field();
        assert!(n_rf % 2 == 1 && n_rf >= 3);
        let half = (n_rf - 1) / 2;
        let depth = 12;
        let base = volume([1, depth, 8, 8], 5);
        let gaussians = |x: &Tensor| {
            let mut t = Tape::new();
            let b = m.params.bind(&mut t, false);
            let xv = t.constant(x.clone());
            let out = m.forward(&mut t, &b, xv, &m.zero_noise(depth), LrlPass::UNLABELED).unwrap();
            out.gaussians
                .iter()
                .map(|g| {
                    let mut v = t.value(g.mean).data().to_vec();
                    v.extend_from_slice(t.value(g.prec_chol).data());
                    v
                })
                .collect::<Vec<_>>()
        };
        let reference = gaussians(&base);
        for j in [0, 5, 11] {
            let mut x = base.clone();
            for v in &mut x.data_mut()[j * 64..(j + 1) * 64] {
                *v += 0.5;
            }
            let changed = gaussians(&x);
            for i in 0..depth {
                let differs = changed[i] != reference[i];
                if i.abs_diff(j) > half {
                    assert!(!differs, "slice {i} reacted to slice {j} with n_rf {n_rf}");
                }
            }
            assert!(changed[j] != reference[j]);
        }
    }
}

#[test]
fn shared_encoders_are_the_same_tensors() {
    let shared = LrlModel::new(ModelConfig { share_encoders: true, ..Default::default() }, &mut rng::stream(6, 0)).unwrap();
    let separate = LrlModel::new(ModelConfig::default(), &mut rng::stream(6, 0)).unwrap();
    assert_eq!(shared.encoder_rec, shared.encoder_seg);
    for (a, b) in shared.encoder_rec.convs().zip(shared.encoder_seg.convs()) {
        assert!(std::ptr::eq(shared.params.get(a.weight), shared.params.get(b.weight)));
        assert!(std::ptr::eq(shared.params.get(a.bias), shared.params.get(b.bias)));
    }
    for (a, b) in separate.encoder_rec.convs().zip(separate.encoder_seg.convs()) {
        assert!(!std::ptr::eq(separate.params.get(a.weight), separate.params.get(b.weight)));
    }
    assert!(shared.params.count() < separate.params.count());
}

fn param_grad_check(inputs: Vec<Tensor>, f: impl Fn(&mut Tape, &[Var]) -> gbdl::tensor::Result<Var>) -> f64 {
    gradcheck::check(&inputs, f, 1e-5).unwrap().max_rel_error()
}

fn loss_err(e: impl std::fmt::Display) -> gbdl::tensor::TensorError {
    gbdl::tensor::TensorError::Invalid(e.to_string())
}

#[test]
fn mse_gradient_through_reconstruction_path() {
    for variant in [KlVariant::Fused, KlVariant::Volume, KlVariant::Ic] {
        let m = LrlModel::new(tiny(variant), &mut rng::stream(7, 0)).unwrap();
        let x = volume([1, 4, 6, 6], 7);
        let noise = m.draw_noise(4, &mut rng::stream(7, 1));
        let err = param_grad_check(m.params.values().to_vec(), |t, vars| {
            let b = bind_vars(vars);
            let xv = t.constant(x.clone());
            let out = m.forward(t, &b, xv, &noise, LrlPass::UNLABELED).map_err(loss_err)?;
            let mse = losses::mse(t, out.recon.unwrap(), xv).map_err(loss_err)?;
            let kl = t.scale(out.kl, 0.01);
            t.add(mse, kl)
        });
        assert!(err < 1e-4, "{variant:?}: {err}");
    }
}

#[test]
fn seg_gradient_through_both_paths() {
    let m = LrlModel::new(tiny(KlVariant::Fused), &mut rng::stream(8, 0)).unwrap();
    let x = volume([1, 4, 6, 6], 8);
    let target: Vec<u8> = (0..144).map(|i| (i % 5 == 0) as u8).collect();
    let noise = m.draw_noise(4, &mut rng::stream(8, 1));
    let err = param_grad_check(m.params.values().to_vec(), |t, vars| {
        let b = bind_vars(vars);
        let xv = t.constant(x.clone());
        let out = m.forward(t, &b, xv, &noise, LrlPass::SEGMENT).map_err(loss_err)?;
        let w = losses::LossWeights::default();
        Ok(losses::seg_loss(t, out.seg_logits.unwrap(), &target, &w).map_err(loss_err)?.total)
    });
    assert!(err < 1e-4, "{err}");
}

#[test]
fn segnet_determinism_stochasticity_and_gradient() {
    let net = SegNet::new(tiny(KlVariant::Fused), &mut rng::stream(9, 0)).unwrap();
    let x = volume([1, 4, 6, 6], 9);
    let run = |stochastic: bool, seed: u64| {
        let mut t = Tape::new();
        let b = net.params.bind(&mut t, false);
        let xv = t.constant(x.clone());
        let l = net.forward(&mut t, &b, xv, stochastic, &mut rng::stream(seed, 0)).unwrap();
        t.value(l).clone()
    };
    assert_eq!(run(false, 1), run(false, 2));
    assert_eq!(run(true, 1), run(true, 1));
    assert_ne!(run(true, 1), run(true, 2));

    let target: Vec<u8> = (0..144).map(|i| (i % 3 == 0) as u8).collect();
    let err = param_grad_check(net.params.values().to_vec(), |t, vars| {
        let b = bind_vars(vars);
        let xv = t.constant(x.clone());
        let l = net.forward(t, &b, xv, true, &mut rng::stream(3, 3)).map_err(loss_err)?;
        Ok(losses::seg_loss(t, l, &target, &Default::default()).map_err(loss_err)?.total)
    });
    assert!(err < 1e-4, "{err}");
}

// Gradcheck places its inputs as leaves in order, matching a bound store.
fn bind_vars(vars: &[Var]) -> model::Bound {
    model::Bound::from_vars(vars.to_vec())
}

#[test]
fn init_is_seeded_and_counted() {
    let configs = [
        ModelConfig::default(),
        ModelConfig { share_encoders: true, ..Default::default() },
        ModelConfig { kl_variant: KlVariant::Ic, convs_per_stage: 2, ..Default::default() },
        ModelConfig { kl_variant: KlVariant::Volume, classes: 3, latent_dim: 5, ..Default::default() },
    ];
    for cfg in configs {
        let a = LrlModel::new(cfg.clone(), &mut rng::stream(10, 0)).unwrap();
        let b = LrlModel::new(cfg.clone(), &mut rng::stream(10, 0)).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.params.count(), cfg.lrl_param_count());
        let s = model::summary(&a.params);
        assert!(s.ends_with(&format!("total parameters: {}\n", cfg.lrl_param_count())));
        let n = SegNet::new(cfg.clone(), &mut rng::stream(10, 1)).unwrap();
        assert_eq!(n.params.count(), cfg.segnet_param_count());
    }
    let c = LrlModel::new(ModelConfig::default(), &mut rng::stream(11, 0)).unwrap();
    let d = LrlModel::new(ModelConfig::default(), &mut rng::stream(12, 0)).unwrap();
    assert_ne!(c.params.checksum(), d.params.checksum());
}

#[test]
fn init_weight_spread_matches_fan_in() {
    let cfg = ModelConfig { channels: [16, 32], ..Default::default() };
    let net = SegNet::new(cfg, &mut rng::stream(13, 0)).unwrap();
    let conv = net.encoder.stage2[0];
    let w = net.params.get(conv.weight);
    assert!(w.len() >= 10_000);
    let mean = w.data().iter().sum::<f64>() / w.len() as f64;
    let std = (w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
    let want = (2.0f64 / (16.0 * 27.0)).sqrt();
    assert!((std / want - 1.0).abs() < 0.1, "{std} vs {want}");
    assert!(net.params.get(conv.bias).data().iter().all(|&b| b == 0.0));
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        ModelConfig { classes: 1, ..Default::default() },
        ModelConfig { latent_dim: 1, ..Default::default() },
        ModelConfig { dropout: 1.0, ..Default::default() },
        ModelConfig { channels: [0, 4], ..Default::default() },
    ];
    for cfg in bad {
        assert!(SegNet::new(cfg, &mut rng::stream(0, 0)).is_err());
    }
    let m = LrlModel::new(ModelConfig::default(), &mut rng::stream(0, 0)).unwrap();
    let mut t = Tape::new();
    let b = m.params.bind(&mut t, false);
    let x = t.constant(volume([1, 4, 7, 8], 0));
    assert!(m.forward(&mut t, &b, x, &m.zero_noise(4), LrlPass::FULL).is_err());
}

#[test]
fn checkpoints_round_trip_and_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let lrl = LrlModel::new(ModelConfig { share_encoders: true, kl_variant: KlVariant::Ic, ..Default::default() }, &mut rng::stream(14, 0)).unwrap();
    let net = SegNet::new(ModelConfig { dropout: 0.3, ..Default::default() }, &mut rng::stream(14, 1)).unwrap();
    let (pl, ps) = (dir.path().join("lrl.ckpt"), dir.path().join("seg.ckpt"));
    model::save_checkpoint(&pl, &lrl).unwrap();
    model::save_checkpoint(&ps, &net).unwrap();
    assert_eq!(model::load_lrl(&pl).unwrap(), lrl);
    assert_eq!(model::load_segnet(&ps).unwrap(), net);

    let bytes = std::fs::read(&ps).unwrap();
    assert_eq!(&bytes[..8], b"GBDLCKPT");
    assert_eq!(u16::from_le_bytes([bytes[8], bytes[9]]), 1);

    assert!(matches!(model::load_lrl(&ps), Err(model::ModelError::Checkpoint { .. })));
    let missing = model::load_segnet(&dir.path().join("nope.ckpt")).unwrap_err();
    assert!(missing.to_string().contains("checkpoint not found"));
    std::fs::write(&ps, &bytes[..bytes.len() - 5]).unwrap();
    assert!(model::load_segnet(&ps).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corrupted_checkpoints_never_panic(cut in 0usize..400, flip in 0usize..400, byte in any::<u8>()) {
        let net = SegNet::new(tiny(KlVariant::Fused), &mut rng::stream(15, 0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ckpt");
        model::save_checkpoint(&p, &net).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        let f = flip % bytes.len();
        bytes[f] ^= byte;
        bytes.truncate(bytes.len() - cut.min(bytes.len()));
        std::fs::write(&p, &bytes).unwrap();
        let _ = model::load_segnet(&p);
        let _ = model::read_checkpoint(&bytes);
    }
}
