//! Probe what a representation knows about the regime labels: span means
//! through LDA and leave-one-out KNN, then a CTC-trained BiLSTM recognizer
//! at each data budget. Runs on the VRNN latents and on a Mel front end.
//!
//! cargo run --release --example probes

use slvm::audio::synth::label_spans;
use slvm::audio::{synth_dataset, EncodedSequence, GeneratorConfig};
use slvm::models::{build_model, ModelConfig, ModelKind, SequenceModel};
use slvm::probe::{
    asr_probe_train, knn_loo, lda_fit, mel_frontend, resample_representation, segment_average, Budget, MelConfig,
    ProbeConfig, RepSequence, Utterance,
};
use slvm::train::{train, TrainConfig};
use slvm::Result;

fn draws(model: Option<&dyn SequenceModel>, seq: &EncodedSequence) -> Result<Vec<RepSequence>> {
    match model {
        Some(m) => resample_representation(m, &seq.stack(m.config().stack)?, "z", 4, 0),
        None => {
            let mel = MelConfig { n_mels: 20, ..MelConfig::default() };
            Ok(vec![RepSequence { rows: mel_frontend(seq, &mel)?, frames_per_row: mel.hop }])
        }
    }
}

fn main() -> Result<()> {
    let gen = GeneratorConfig { count: 60, bit_depth: 8, ..GeneratorConfig::two_timescale() };
    let corpus = synth_dataset(&gen, 7)?;
    let (train_set, test_set) = corpus.split_at(50);

    let mcfg = ModelConfig { bit_depth: 8, ..ModelConfig::desk(ModelKind::Vrnn, 16) };
    let mut vrnn = build_model(&mcfg, 0)?;
    let tcfg = TrainConfig { lr: 3e-3, max_steps: 100, ..TrainConfig::default() };
    train(vrnn.as_mut(), &train_set[..4], &[], &tcfg, None, &mut |_| Ok(()))?;

    let pcfg = ProbeConfig { width: 16, layers: 2, steps: 1500, lr: 1e-2, ..ProbeConfig::default() };
    for (name, model) in [("vrnn z", Some(vrnn.as_ref())), ("mel", None)] {
        let mut means = Vec::new();
        let mut utts = |set: &[EncodedSequence]| -> Result<Vec<Utterance>> {
            let mut out = Vec::new();
            for seq in set {
                let d = draws(model, seq)?;
                let covered = d[0].frames();
                let spans: Vec<_> = label_spans(seq.labels.as_deref().unwrap_or_default())
                    .into_iter()
                    .map(|(a, b, k)| (a, b.min(covered), k))
                    .filter(|s| s.0 < s.1)
                    .collect();
                means.extend(segment_average(&d, &spans)?);
                out.push(Utterance::from_spans(&seq.id, &d[0], &spans));
            }
            Ok(out)
        };
        let train_u = utts(train_set)?;
        let test_u = utts(test_set)?;

        let vecs: Vec<Vec<f64>> = means.iter().map(|m| m.mean.clone()).collect();
        let labels: Vec<u32> = means.iter().map(|m| m.class).collect();
        let lda = lda_fit(&vecs, &labels, 1)?;
        let acc = knn_loo(&lda.project_all(&vecs), &labels, 5)?;
        println!("{name}: {} spans, dim {}, LDA(1) + 5-NN accuracy {acc:.3}", vecs.len(), vecs[0].len());

        for budget in [Budget::TenMinutes, Budget::OneHour, Budget::Full] {
            let r = asr_probe_train(&train_u, &test_u, &pcfg, budget)?;
            println!("  {budget:>4}: {} train utterances, error rate {:.3}", r.train_utterances, r.per);
        }
    }
    Ok(())
}
