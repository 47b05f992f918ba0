use super::run::plan_epoch;
use super::*;
use crate::audio::{stack, EncodedSequence, Encoding};
use crate::error::Result;
use crate::models::{build_model, ModelConfig, ModelKind, Noise, Window};

fn tiny(kind: ModelKind, s: usize) -> ModelConfig {
    let mut c = ModelConfig::desk(kind, s);
    c.bit_depth = 8;
    c.dz = 3;
    c.dd = 6;
    c.dc = 6;
    c.components = 2;
    c.wavenet_layers = 3;
    c
}

fn corpus() -> Vec<EncodedSequence> {
    (0..3)
        .map(|k| {
            let lin: Vec<f64> = (0..60 + 13 * k).map(|i| 0.6 * (0.17 * (i + k) as f64).sin()).collect();
            EncodedSequence::from_linear(format!("s{k}"), &lin, Encoding::MuLaw, 8, 16000, None).unwrap()
        })
        .collect()
}

fn run(model: &mut dyn crate::models::SequenceModel, cfg: &TrainConfig, state: Option<TrainState>) -> (Vec<String>, TrainState) {
    let data = corpus();
    let mut rows = Vec::new();
    let st = train(model, &data, &data[..1], cfg, state, &mut |r: &MetricRow| -> Result<()> {
        rows.push(r.to_csv());
        Ok(())
    })
    .unwrap();
    (rows, st)
}

#[test]
fn resume_is_bit_identical() {
    let mcfg = tiny(ModelKind::Vrnn, 4);
    let cfg = TrainConfig {
        batch_size: 2,
        max_steps: 8,
        val_every: 3,
        kl_warmup_steps: 5,
        seed: 4,
        lr: 1e-2,
        ..TrainConfig::default()
    };
    let mut whole = build_model(&mcfg, 1).unwrap();
    let (all_rows, end) = run(whole.as_mut(), &cfg, None);

    let mut half = build_model(&mcfg, 1).unwrap();
    let first = TrainConfig { max_steps: 5, ..cfg.clone() };
    let (mut rows, mid) = run(half.as_mut(), &first, None);
    let bytes = Checkpoint {
        model: mcfg.clone(),
        train: cfg.clone(),
        params: half.params().clone(),
        state: mid,
    }
    .to_bytes()
    .unwrap();
    let ck = Checkpoint::from_bytes(&bytes).unwrap();
    let mut resumed = ck.restore().unwrap();
    let (more, end2) = run(resumed.as_mut(), &ck.train, Some(ck.state));
    rows.extend(more);

    assert_eq!(rows, all_rows);
    assert_eq!(end2, end);
    assert_eq!(resumed.params(), whole.params());
}

#[test]
fn same_seed_same_log() {
    let cfg = TrainConfig {
        max_steps: 6,
        seed: 2,
        ..TrainConfig::default()
    };
    let mcfg = tiny(ModelKind::Srnn, 4);
    let mut a = build_model(&mcfg, 0).unwrap();
    let mut b = build_model(&mcfg, 0).unwrap();
    let (ra, _) = run(a.as_mut(), &cfg, None);
    let (rb, _) = run(b.as_mut(), &cfg, None);
    assert_eq!(ra, rb);
    assert_eq!(a.params(), b.params());
    let mut c = build_model(&mcfg, 0).unwrap();
    let (rc, _) = run(c.as_mut(), &TrainConfig { seed: 3, ..cfg }, None);
    assert_ne!(ra, rc);
}

#[test]
fn log_rows_have_documented_columns() {
    let mcfg = tiny(ModelKind::Cwvae, 2);
    let mut m = build_model(&mcfg, 0).unwrap();
    let cfg = TrainConfig {
        max_steps: 2,
        val_every: 2,
        ..TrainConfig::default()
    };
    let (rows, _) = run(m.as_mut(), &cfg, None);
    let header = MetricRow::csv_header(2);
    assert_eq!(header, "step,split,nats,frames,bpf,recon_bpf,kl_bpf_total,kl_bpf_l1,kl_bpf_l2");
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r.split(',').count(), header.split(',').count());
    }
    assert!(rows[2].starts_with("2,val,"));
}

#[test]
fn subsegments_resampled_each_epoch() {
    let m = build_model(&tiny(ModelKind::Wavenet, 1), 0).unwrap();
    let cfg = TrainConfig {
        segment_length: 20,
        ..TrainConfig::default()
    };
    let regime = cfg.regime(m.as_ref());
    assert_eq!(regime, Regime::Subsegment(20));
    let lens = [400, 500, 600];
    let e0 = plan_epoch(&cfg, regime, &lens, 0).unwrap();
    let e1 = plan_epoch(&cfg, regime, &lens, 1).unwrap();
    assert_ne!(e0.offsets, e1.offsets);
    assert!(e0.offsets.iter().zip(lens).all(|(&o, n)| o + 20 <= n));
    let other = plan_epoch(&TrainConfig { seed: 9, ..cfg.clone() }, regime, &lens, 0).unwrap();
    assert_ne!(e0.offsets, other.offsets);
    assert_eq!(plan_epoch(&cfg, regime, &lens, 0).unwrap().offsets, e0.offsets);
}

#[test]
fn regimes_follow_model_kind() {
    let cfg = TrainConfig::default();
    for kind in ModelKind::ALL {
        for s in [1, 64] {
            let m = build_model(&tiny(kind, s), 0).unwrap();
            let sub = matches!(cfg.regime(m.as_ref()), Regime::Subsegment(_));
            assert_eq!(sub, !kind.is_stateful() && s == 1, "{kind} s={s}");
        }
    }
    let m = build_model(&tiny(ModelKind::Wavenet, 1), 0).unwrap();
    let short = TrainConfig {
        segment_length: 3,
        ..cfg
    };
    assert!(short.validate(m.as_ref()).is_err());
    assert!(TrainConfig { lr: 0.0, ..TrainConfig::default() }.validate(m.as_ref()).is_err());
}

#[test]
fn padding_changes_no_gradient() {
    let frames: Vec<f64> = (0..37).map(|i| ((i * 7 % 23) as f64 - 11.0) / 128.0).collect();
    let clean = stack(&frames, 4).unwrap();
    let mut junk = clean.clone();
    let n = junk.steps.numel();
    junk.steps.data_mut()[n - 3..].copy_from_slice(&[0.5, -0.25, 0.75]);
    for kind in ModelKind::ALL {
        let m = build_model(&tiny(kind, 4), 2).unwrap();
        let noise = Noise::seeded(3);
        let (ga, ta) = window_gradients(m.as_ref(), &Window::full(&clean), &noise, 1.0).unwrap();
        let (gb, tb) = window_gradients(m.as_ref(), &Window::full(&junk), &noise, 1.0).unwrap();
        assert_eq!(ta.frames, 37);
        assert!((ta.elbo() - tb.elbo()).abs() < 1e-12, "{kind}");
        for (a, b) in ga.iter().zip(&gb) {
            for (u, v) in a.data().iter().zip(b.data()) {
                assert!((u - v).abs() < 1e-12, "{kind}");
            }
        }
    }
}

#[test]
fn warmup_scales_only_kl() {
    let cfg = TrainConfig {
        kl_warmup_steps: 4,
        ..TrainConfig::default()
    };
    assert_eq!(kl_weight(&cfg, 1), 0.25);
    assert_eq!(kl_weight(&cfg, 4), 1.0);
    assert_eq!(kl_weight(&cfg, 40), 1.0);
    assert_eq!(kl_weight(&TrainConfig::default(), 1), 1.0);

    let frames: Vec<f64> = (0..24).map(|i| ((i % 5) as f64 - 2.0) / 64.0).collect();
    let x = stack(&frames, 4).unwrap();
    let m = build_model(&tiny(ModelKind::Vrnn, 4), 5).unwrap();
    let mut tape = crate::numcore::Tape::new();
    let p = m.params().bind(&mut tape, false);
    let (g, _) = m
        .forward(&mut tape, &p, &Window::full(&x), &Default::default(), &Noise::seeded(1), None)
        .unwrap();
    let half = g.objective(&mut tape, 0.5).unwrap();
    let t = g.terms(&tape);
    assert!((tape.value(half).item() - (t.recon - 0.5 * t.kl_total())).abs() < 1e-12);
}

#[test]
fn divergence_is_flagged_and_run_continues() {
    let mcfg = tiny(ModelKind::Lstm, 4);
    let mut m = build_model(&mcfg, 0).unwrap();
    // a huge step size pushes the model far above the uniform cost
    let cfg = TrainConfig {
        lr: 5.0,
        max_steps: 12,
        divergence_patience: 3,
        ..TrainConfig::default()
    };
    let (rows, st) = run(m.as_mut(), &cfg, None);
    assert_eq!(rows.len(), 12);
    let bpf: Vec<f64> = rows.iter().map(|r| r.split(',').nth(4).unwrap().parse().unwrap()).collect();
    let mut streak = 0;
    let mut expect = None;
    for (i, b) in bpf.iter().enumerate() {
        streak = if *b > 9.0 { streak + 1 } else { 0 };
        if streak >= 3 && expect.is_none() {
            expect = Some(i as u64 + 1);
        }
    }
    assert!(expect.is_some(), "run never exceeded the threshold: {bpf:?}");
    assert_eq!(st.diverged_at, expect);
}
