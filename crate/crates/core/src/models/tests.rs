use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::audio::{codec, stack};
use crate::numcore::grad_check;

const B: u32 = 8;

fn tiny(kind: ModelKind) -> ModelConfig {
    let mut c = ModelConfig::desk(kind, 4);
    c.bit_depth = B;
    c.dz = 3;
    c.dd = 5;
    c.dc = 6;
    c.components = 2;
    c.wavenet_layers = 3;
    c.decoder_layers = 1;
    match kind {
        ModelKind::Stcn => {
            c.layers = 2;
            c.dz = 1;
            c.wavenet_layers = 2;
            c.wavenet_blocks = 2;
        }
        ModelKind::Cwvae => {
            c.layers = 2;
            c.factor = 2;
        }
        _ => {}
    }
    c
}

fn frames(n: usize, phase: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64;
            codec::quantize(0.6 * (0.3 * t + phase).sin() + 0.1 * (1.7 * t).cos(), B)
        })
        .collect()
}

/// Same as `x` but with every frame from step `from` on replaced.
fn perturbed_from(x: &[f64], s: usize, from: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    for v in y.iter_mut().skip(from * s) {
        *v = codec::quantize(-0.5 * *v + 0.2, B);
    }
    y
}

fn close(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(r, q)| r.iter().zip(q).all(|(u, v)| (u - v).abs() <= tol))
}

#[test]
fn objective_equals_recon_minus_kl() {
    let x = stack(&frames(37, 0.0), 4).unwrap();
    for kind in ModelKind::ALL {
        let model = build_model(&tiny(kind), 3).unwrap();
        let mut tape = Tape::new();
        let p = model.params().bind(&mut tape, false);
        let (g, _) = model
            .forward(&mut tape, &p, &Window::full(&x), &Carry::default(), &Noise::seeded(5), None)
            .unwrap();
        let obj = g.objective(&mut tape, 1.0).unwrap();
        let terms = g.terms(&tape);
        assert_eq!(terms.frames, 37, "{kind}");
        assert!(terms.recon.is_finite() && terms.recon < 0.0, "{kind}");
        assert!(terms.kl.iter().all(|&k| k >= 0.0), "{kind}: {:?}", terms.kl);
        assert!((tape.value(obj).item() - terms.elbo()).abs() < 1e-10, "{kind}");
        assert_eq!(terms.kl.len(), if kind.has_latents() { model.config().latent_layers() } else { 0 }, "{kind}");
    }
}

#[test]
fn tied_posterior_has_zero_kl() {
    let x = stack(&frames(37, 0.4), 4).unwrap();
    for kind in ModelKind::ALL.into_iter().filter(|k| k.has_latents()) {
        let mut cfg = tiny(kind);
        cfg.tie_posterior = true;
        let model = build_model(&cfg, 1).unwrap();
        let t = elbo(model.as_ref(), &x, &Noise::seeded(2)).unwrap();
        assert!(t.kl_total().abs() < 1e-12, "{kind}: {:?}", t.kl);
    }
}

#[test]
fn deterministic_models_are_causal() {
    let x = frames(37, 0.0);
    for kind in [ModelKind::Lstm, ModelKind::Wavenet] {
        let model = build_model(&tiny(kind), 7).unwrap();
        let base = infer(model.as_ref(), &stack(&x, 4).unwrap(), &Noise::zero()).unwrap();
        for t in 1..9 {
            let y = stack(&perturbed_from(&x, 4, t), 4).unwrap();
            let other = infer(model.as_ref(), &y, &Noise::zero()).unwrap();
            assert!(close(&base.outputs[..=t], &other.outputs[..=t], 0.0), "{kind} at {t}");
            assert!(!close(&base.outputs[t + 1..], &other.outputs[t + 1..], 1e-12), "{kind} at {t}");
        }
    }
}

#[test]
fn vrnn_outputs_ignore_the_future() {
    let x = frames(37, 0.2);
    let model = build_model(&tiny(ModelKind::Vrnn), 4).unwrap();
    let noise = Noise::seeded(11);
    let base = infer(model.as_ref(), &stack(&x, 4).unwrap(), &noise).unwrap();
    for t in 0..8 {
        let y = stack(&perturbed_from(&x, 4, t + 1), 4).unwrap();
        let other = infer(model.as_ref(), &y, &noise).unwrap();
        assert!(close(&base.outputs[..=t], &other.outputs[..=t], 0.0), "at {t}");
        let (a, b) = (base.layer("z").unwrap(), other.layer("z").unwrap());
        assert!(close(&a.prior_means[..=t + 1], &b.prior_means[..=t + 1], 0.0), "prior at {t}");
    }
}

#[test]
fn generative_paths_are_causal() {
    let x = frames(37, 0.9);
    for kind in [ModelKind::Srnn, ModelKind::Stcn] {
        let mut cfg = tiny(kind);
        cfg.tie_posterior = true;
        let model = build_model(&cfg, 9).unwrap();
        let noise = Noise::seeded(3);
        let base = infer(model.as_ref(), &stack(&x, 4).unwrap(), &noise).unwrap();
        for t in 1..9 {
            let y = stack(&perturbed_from(&x, 4, t), 4).unwrap();
            let other = infer(model.as_ref(), &y, &noise).unwrap();
            assert!(close(&base.outputs[..=t], &other.outputs[..=t], 0.0), "{kind} at {t}");
            for (a, b) in base.layers.iter().zip(&other.layers) {
                assert!(close(&a.prior_means[..=t], &b.prior_means[..=t], 0.0), "{kind} {} at {t}", a.name);
            }
        }
    }
}

#[test]
fn stcn_top_prior_is_causal_untied() {
    let x = frames(37, 0.1);
    let model = build_model(&tiny(ModelKind::Stcn), 2).unwrap();
    let noise = Noise::seeded(8);
    let base = infer(model.as_ref(), &stack(&x, 4).unwrap(), &noise).unwrap();
    for t in 1..9 {
        let y = stack(&perturbed_from(&x, 4, t), 4).unwrap();
        let other = infer(model.as_ref(), &y, &noise).unwrap();
        let (a, b) = (base.layer("z2").unwrap(), other.layer("z2").unwrap());
        assert!(close(&a.prior_means[..=t], &b.prior_means[..=t], 0.0), "at {t}");
    }
}

#[test]
fn srnn_posterior_sees_the_future() {
    let x = frames(37, 0.3);
    let model = build_model(&tiny(ModelKind::Srnn), 5).unwrap();
    let noise = Noise::seeded(1);
    let a = infer(model.as_ref(), &stack(&x, 4).unwrap(), &noise).unwrap();
    let b = infer(model.as_ref(), &stack(&perturbed_from(&x, 4, 9), 4).unwrap(), &noise).unwrap();
    let (za, zb) = (&a.layer("z").unwrap().means[0], &b.layer("z").unwrap().means[0]);
    assert!(za.iter().zip(zb).any(|(u, v)| (u - v).abs() > 1e-12));
}

#[test]
fn stcn_latents_have_no_temporal_links() {
    let x = stack(&frames(37, 0.5), 4).unwrap();
    let model = build_model(&tiny(ModelKind::Stcn), 6).unwrap();
    let base = infer(model.as_ref(), &x, &Noise::seeded(4)).unwrap();
    for t in 1..x.num_steps() {
        let other = infer(model.as_ref(), &x, &Noise::seeded(4).with_resampled(t - 1, 77)).unwrap();
        for (a, b) in base.layers.iter().zip(&other.layers) {
            for u in (0..x.num_steps()).filter(|&u| u != t - 1) {
                assert_eq!(a.means[u], b.means[u], "{} step {u} after resampling {}", a.name, t - 1);
            }
        }
        assert_ne!(base.layers[0].means[t - 1], other.layers[0].means[t - 1]);
    }

    // a model with transitions does propagate the change
    let vrnn = build_model(&tiny(ModelKind::Vrnn), 6).unwrap();
    let a = infer(vrnn.as_ref(), &x, &Noise::seeded(4)).unwrap();
    let b = infer(vrnn.as_ref(), &x, &Noise::seeded(4).with_resampled(2, 77)).unwrap();
    assert_ne!(a.layers[0].means[3], b.layers[0].means[3]);
}

#[test]
fn cwvae_decoder_reads_only_latents() {
    let model = CwVae::new(tiny(ModelKind::Cwvae), 12).unwrap();
    let noise = Noise::seeded(6);
    let x = stack(&frames(36, 0.0), 4).unwrap();
    let y = stack(&frames(36, 1.3), 4).unwrap();
    let tx = infer(&model, &x, &noise).unwrap();
    let ty = infer(&model, &y, &noise).unwrap();
    for traj in [&tx, &ty] {
        let dec = model.decode_latents(traj).unwrap();
        let rows: Vec<Vec<f64>> = (0..traj.outputs.len()).map(|i| dec.row_slice(i).to_vec()).collect();
        assert!(close(&rows, &traj.outputs, 1e-12));
    }
    // swapping in y's latents reproduces y's outputs even though x is observed
    let mut mixed = tx.clone();
    mixed.layers = ty.layers.clone();
    let dec = model.decode_latents(&mixed).unwrap();
    assert_eq!(dec.row_slice(0), ty.outputs[0].as_slice());
}

#[test]
fn cwvae_schedule_example() {
    let sched = cwvae_schedule(1025, 64, 8, 2).unwrap();
    assert_eq!(sched[1], vec![1, 513, 1025]);
    assert_eq!(sched[0].len(), 17);
    let strides = [64, 512];
    assert_eq!(update_layers(1, &strides), vec![1, 2]);
    assert_eq!(update_layers(65, &strides), vec![1]);
    assert_eq!(update_layers(513, &strides), vec![1, 2]);
    assert!(update_layers(2, &strides).is_empty());
    assert!(cwvae_schedule(10, 1, 1, 2).is_err());
}

#[test]
fn cwvae_strides_follow_factor() {
    let mut cfg = tiny(ModelKind::Cwvae);
    cfg.stride = 3;
    cfg.layers = 3;
    cfg.factor = 4;
    let m = CwVae::new(cfg, 0).unwrap();
    assert_eq!(m.strides(), &[3, 12, 48]);
    assert_eq!(m.step_multiple(), 48);
}

#[test]
fn receptive_fields() {
    assert_eq!(wavenet_receptive_field(5, 10), 5116);
    let mut cfg = ModelConfig::new(ModelKind::Wavenet);
    cfg.dc = 2;
    cfg.components = 1;
    let m = build_model(&cfg, 0).unwrap();
    assert_eq!(m.receptive_field(), Some(5116));
    let t = build_model(&tiny(ModelKind::Stcn), 0).unwrap();
    // two encoder blocks of dilations 1, 2 plus a one-layer decoder
    assert_eq!(t.receptive_field(), Some(1 + 2 * 3 + 2));
}

#[test]
fn stcn_hierarchy_widths() {
    assert_eq!(stcn_latent_dims(1, 16).unwrap(), vec![256]);
    assert_eq!(stcn_latent_dims(5, 16).unwrap(), vec![256, 128, 64, 32, 16]);
    assert!(stcn_latent_dims(6, 16).is_err());
    let m = Stcn::new(tiny(ModelKind::Stcn), 0).unwrap();
    assert_eq!(m.latent_dims(), &[16, 8]);
}

#[test]
fn samples_have_requested_length() {
    for kind in ModelKind::ALL {
        let model = build_model(&tiny(kind), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = sample(model.as_ref(), 37, &mut rng).unwrap();
        assert_eq!(xs.len(), 37, "{kind}");
        assert!(xs.iter().all(|&v| codec::on_grid(v, B)), "{kind}");
    }
}

#[test]
fn carry_splits_stateful_passes() {
    let x = stack(&frames(37, 0.7), 4).unwrap();
    let noise = Noise::seeded(9);
    for kind in [ModelKind::Lstm, ModelKind::Vrnn] {
        let model = build_model(&tiny(kind), 1).unwrap();
        let whole = elbo(model.as_ref(), &x, &noise).unwrap();
        let mut tape = Tape::new();
        let p = model.params().bind(&mut tape, false);
        let w1 = Window::new(&x, 0, 0, 4).unwrap();
        let (g1, c) = model.forward(&mut tape, &p, &w1, &Carry::default(), &noise, None).unwrap();
        let w2 = Window::new(&x, 4, 4, 10).unwrap();
        let (g2, _) = model.forward(&mut tape, &p, &w2, &c, &noise, None).unwrap();
        let mut parts = g1.terms(&tape);
        parts.accumulate(&g2.terms(&tape));
        assert_eq!(parts.frames, whole.frames);
        assert!((parts.elbo() - whole.elbo()).abs() < 1e-9, "{kind}");
    }
}

#[test]
fn elbo_gradients_match_finite_differences() {
    let x = stack(&frames(22, 0.6), 4).unwrap();
    let noise = Noise::seeded(13);
    for kind in ModelKind::ALL {
        let model = build_model(&tiny(kind), 21).unwrap();
        let store = model.params();
        let mut worst: f64 = 0.0;
        for (i, value) in store.values().iter().enumerate() {
            let id = crate::numcore::ParamId(i);
            let err = grad_check(
                |tape, v| {
                    let p = store.bind(tape, false).with_var(id, v);
                    let (g, _) = model.forward(tape, &p, &Window::full(&x), &Carry::default(), &noise, None)?;
                    g.objective(tape, 1.0)
                },
                value,
                1e-4,
            )
            .unwrap();
            assert!(err < 1e-4, "{kind}: {} has relative error {err:e}", store.name(id));
            worst = worst.max(err);
        }
        assert!(worst.is_finite());
    }
}

