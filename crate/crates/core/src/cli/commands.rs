use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Baseline, RunConfig};
use crate::audio::synth::label_spans;
use crate::audio::{decode, read_corpus, synth_clips, write_corpus, write_wav, EncodedSequence, Wav};
use crate::dists::{baseline_fit_dmol, dmol_log_prob, FitOptions};
use crate::error::{ensure, Error, Result};
use crate::eval::{evaluate, flac_references, format_report, parse_report, ExampleMetrics, MetricsRecord, ReportRow, SegmentConfig};
use crate::models::{build_model, infer, Model, Noise};
use crate::probe::{
    asr_probe_train, best_per_budget, format_per_csv, knn_loo, lda_fit, mel_frontend, resample_representation, segment_average,
    write_dump, PerRow, RepRecord, RepSequence, Utterance,
};
use crate::train::{train, Checkpoint, MetricRow};

pub const CHECKPOINT_NAME: &str = "checkpoint.slvm";

/// Contract violations found while checking a configuration are reported
/// as configuration errors.
pub(crate) fn as_config(e: Error) -> Error {
    match e {
        Error::Contract(m) => Error::Config(m),
        other => other,
    }
}

fn need(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.clone().ok_or_else(|| Error::Config(format!("missing {what}")))
}

fn load_corpus(cfg: &RunConfig, dir: &Path) -> Result<Vec<EncodedSequence>> {
    let data = read_corpus(dir, cfg.data.encoding, cfg.model.bit_depth)?;
    ensure!(!data.is_empty(), "corpus {} is empty", dir.display());
    Ok(data)
}

/// Restores a checkpoint and adopts its model configuration.
fn load_model(cfg: &mut RunConfig, path: &Path) -> Result<Model> {
    let ck = Checkpoint::load(path)?;
    cfg.model = ck.model.clone();
    ck.restore()
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let clips = synth_clips(&cfg.synth, cfg.seed).map_err(as_config)?;
    write_corpus(&cfg.out, &clips)?;
    println!("wrote {} clips to {}", clips.len(), cfg.out.display());
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig) -> Result<()> {
    cfg.model.validate().map_err(as_config)?;
    let data = load_corpus(cfg, &need(&cfg.data.train, "data.train (pass --data)")?)?;
    let val = match &cfg.data.val {
        Some(dir) => load_corpus(cfg, dir)?,
        None => Vec::new(),
    };
    let mut model = build_model(&cfg.model, cfg.seed).map_err(as_config)?;
    cfg.train.validate(model.as_ref()).map_err(as_config)?;

    fs::create_dir_all(&cfg.out)?;
    let mut log = fs::File::create(cfg.out.join("metrics.csv"))?;
    writeln!(log, "{}", MetricRow::csv_header(cfg.model.latent_layers()))?;
    let mut last_val = None;
    let state = train(model.as_mut(), &data, &val, &cfg.train, None, &mut |row: &MetricRow| -> Result<()> {
        writeln!(log, "{}", row.to_csv())?;
        if row.split == "val" {
            last_val = Some(row.bpf);
        }
        Ok(())
    })?;
    if let Some(step) = state.diverged_at {
        eprintln!("warning: run flagged as diverged at step {step}");
    }
    Checkpoint {
        model: cfg.model.clone(),
        train: cfg.train.clone(),
        params: model.params().clone(),
        state,
    }
    .save(cfg.out.join(CHECKPOINT_NAME))?;
    match last_val {
        Some(b) => println!("trained {} steps; last validation bpf {b:.4}", cfg.train.max_steps),
        None => println!("trained {} steps", cfg.train.max_steps),
    }
    Ok(())
}

fn baseline_record(kind: Baseline, data: &[EncodedSequence], fit_on: &[EncodedSequence], b: u32) -> Result<MetricsRecord> {
    let per_frame: Box<dyn Fn(f64) -> Result<f64>> = match kind {
        Baseline::Uniform => Box::new(|_| unreachable!("uniform rate is computed per example")),
        Baseline::Dmol => {
            let frames: Vec<f64> = fit_on.iter().flat_map(|s| s.values.iter().copied()).collect();
            let fit = baseline_fit_dmol(&frames, b, &FitOptions::default())?;
            Box::new(move |x| dmol_log_prob(&fit.params, x))
        }
    };
    let examples = data
        .iter()
        .map(|s| {
            let recon = match kind {
                // a product, not a sum, so the uniform rate comes out exact
                Baseline::Uniform => -(b as f64) * std::f64::consts::LN_2 * s.len() as f64,
                Baseline::Dmol => s.values.iter().map(|&x| per_frame(x)).sum::<Result<f64>>()?,
            };
            Ok(ExampleMetrics {
                id: s.id.clone(),
                frames: s.len(),
                recon,
                kl: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsRecord { examples })
}

pub fn eval_cmd(cfg: &mut RunConfig) -> Result<()> {
    let dir = need(&cfg.data.test, "data.test (pass --data)")?;
    let model = match (cfg.eval.baseline, &cfg.eval.checkpoint) {
        (None, Some(path)) => Some(load_model(cfg, &path.clone())?),
        (None, None) => return Err(Error::Config("missing eval.checkpoint (pass --checkpoint or --model uniform)".into())),
        _ => None,
    };
    let data = load_corpus(cfg, &dir)?;
    let (record, name, s) = match cfg.eval.baseline {
        Some(kind) => {
            let fit_on = match (&cfg.data.train, kind) {
                (Some(d), Baseline::Dmol) => load_corpus(cfg, d)?,
                _ => data.clone(),
            };
            let name = match kind {
                Baseline::Uniform => "Uniform",
                Baseline::Dmol => "DMoL fit",
            };
            (baseline_record(kind, &data, &fit_on, cfg.model.bit_depth)?, name.to_string(), None)
        }
        None => {
            let model = model.expect("loaded above");
            let seg = cfg.eval.segment_steps.map_or(SegmentConfig::whole(), SegmentConfig::steps);
            let rec = evaluate(model.as_ref(), &data, seg, cfg.seed)?;
            (rec, cfg.model.kind.to_string(), Some(cfg.model.stack))
        }
    };
    let bpf = record.bpf()?;
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("eval.csv"), record.to_csv()?)?;
    let row = ReportRow {
        s,
        model: name,
        config: format!("{} b={} [{}]", cfg.data.encoding.as_str(), cfg.model.bit_depth, dir.display()),
        bpf,
    };
    fs::write(cfg.out.join("table.csv"), format_report(&[row]))?;
    println!("bpf {bpf:.2} over {} frames", record.frames());
    Ok(())
}

pub fn sample_cmd(cfg: &mut RunConfig) -> Result<()> {
    let path = need(&cfg.sample.checkpoint, "sample.checkpoint (pass --checkpoint)")?;
    let model = load_model(cfg, &path)?;
    ensure!(cfg.sample.count >= 1 && cfg.sample.frames >= 1, "sample count and frames must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    fs::create_dir_all(&cfg.out)?;
    for i in 0..cfg.sample.count {
        let values = crate::models::sample(model.as_ref(), cfg.sample.frames, &mut rng)?;
        let linear = values.iter().map(|&y| decode(y, cfg.data.encoding)).collect::<Result<Vec<_>>>()?;
        write_wav(cfg.out.join(format!("sample_{i:03}.wav")), &Wav::from_unit(cfg.sample.sample_rate, &linear))?;
    }
    println!("wrote {} samples to {}", cfg.sample.count, cfg.out.display());
    Ok(())
}

pub fn report_cmd(cfg: &RunConfig) -> Result<String> {
    let mut rows = Vec::new();
    for p in &cfg.report.inputs {
        let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
        rows.extend(parse_report(&text)?);
    }
    if cfg.report.include_flac {
        rows.extend(flac_references().iter().map(|f| f.row()));
    }
    let table = format_report(&rows);
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("report.csv"), &table)?;
    Ok(table)
}

/// One representation of one utterance: all draws plus clipped spans.
struct Prepared {
    draws: Vec<RepSequence>,
    spans: Vec<(usize, usize, u32)>,
}

fn prepare(model: Option<&Model>, layer: &str, seq: &EncodedSequence, cfg: &RunConfig, index: usize) -> Result<Prepared> {
    let labels = seq
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config(format!("utterance {} has no labels", seq.id)))?;
    let draws = match model {
        Some(m) => {
            let x = seq.stack(cfg.model.stack)?;
            let seed = cfg.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            resample_representation(m.as_ref(), &x, layer, cfg.probe.asr.n_resample, seed)?
        }
        None => vec![RepSequence {
            rows: mel_frontend(seq, &cfg.probe.mel)?,
            frames_per_row: cfg.probe.mel.hop,
        }],
    };
    let covered = draws[0].frames();
    let spans = label_spans(labels)
        .into_iter()
        .map(|(a, b, c)| (a, b.min(covered), c))
        .filter(|&(a, b, _)| a < b)
        .collect();
    Ok(Prepared { draws, spans })
}

struct ProbeOutcome {
    knn: String,
    scatter: String,
    per: Vec<PerRow>,
}

fn probe_representation(name: &str, prepared: &[Prepared], ids: &[String], n_test: usize, cfg: &RunConfig) -> Result<ProbeOutcome> {
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    let mut owners = Vec::new();
    for (i, p) in prepared.iter().enumerate() {
        for m in segment_average(&p.draws, &p.spans)? {
            vectors.push(m.mean);
            labels.push(m.class);
            owners.push((i, m.start, m.end));
        }
    }
    let classes = labels.iter().collect::<BTreeSet<_>>().len();
    let dim = vectors.first().map_or(0, Vec::len);
    let mut knn = String::new();
    let mut scatter = String::new();
    if classes >= 2 && vectors.len() > cfg.probe.asr.knn_k && dim >= 1 {
        let dims = cfg.probe.asr.lda_dims.min(classes - 1).min(dim);
        let k = cfg.probe.asr.knn_k;
        let acc = knn_loo(&lda_fit(&vectors, &labels, dims)?.project_all(&vectors), &labels, k)?;
        let mut shuffled = labels.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
        let null = knn_loo(&lda_fit(&vectors, &shuffled, dims)?.project_all(&vectors), &shuffled, k)?;
        writeln!(knn, "{name},{dims},{k},{acc:.6},{null:.6}").expect("string write");
        println!("{name}: LDA({dims}) + {k}-NN accuracy {acc:.4} (shuffled labels {null:.4})");

        let lda2 = lda_fit(&vectors, &labels, 2.min(classes - 1).min(dim))?;
        for ((v, c), (i, a, b)) in vectors.iter().zip(&labels).zip(&owners) {
            let p = lda2.project(v);
            let y = p.get(1).copied().unwrap_or(0.0);
            writeln!(scatter, "{name},{},{a},{b},{c},{:.6},{y:.6}", ids[*i], p[0]).expect("string write");
        }
    } else {
        eprintln!("warning: {name}: too few classes or spans for LDA/KNN");
    }

    let utts: Vec<Utterance> = prepared
        .iter()
        .zip(ids)
        .map(|(p, id)| Utterance {
            id: id.clone(),
            rows: p.draws[0].rows.clone(),
            labels: p.spans.iter().map(|s| s.2).collect(),
            resamples: p.draws[1..].iter().map(|d| d.rows.clone()).collect(),
        })
        .collect();
    let (train_set, test_set) = utts.split_at(utts.len() - n_test);
    let mut per = Vec::new();
    for &budget in &cfg.probe.budgets {
        let r = asr_probe_train(train_set, test_set, &cfg.probe.asr, budget)?;
        per.push(PerRow {
            budget,
            representation: name.to_string(),
            per: r.per,
        });
    }
    Ok(ProbeOutcome { knn, scatter, per })
}

pub fn probe_cmd(cfg: &mut RunConfig) -> Result<()> {
    let data = load_corpus(cfg, &need(&cfg.data.train, "data.train (pass --data)")?)?;
    let model = match &cfg.probe.checkpoint {
        Some(p) => Some(load_model(cfg, &p.clone())?),
        None => None,
    };
    ensure!(
        cfg.probe.test_fraction > 0.0 && cfg.probe.test_fraction < 1.0,
        "probe.test_fraction must lie in (0, 1)"
    );
    let n_test = ((data.len() as f64 * cfg.probe.test_fraction).ceil() as usize).min(data.len() - 1);
    ensure!(n_test >= 1, "need at least two labeled utterances to probe");

    let mut reps: Vec<(String, Option<&Model>)> = Vec::new();
    if let Some(m) = &model {
        let first = data[0].stack(cfg.model.stack)?;
        for layer in infer(m.as_ref(), &first, &Noise::zero())?.layers {
            reps.push((layer.name, Some(m)));
        }
    }
    if cfg.probe.include_mel {
        reps.push(("mel".into(), None));
    }
    ensure!(!reps.is_empty(), "nothing to probe: give a checkpoint or enable include_mel");

    let ids: Vec<String> = data.iter().map(|s| s.id.clone()).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(crate::eval::worker_threads()?)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    fs::create_dir_all(&cfg.out)?;
    let mut knn = String::from("representation,dims,k,accuracy,null_accuracy\n");
    let mut scatter = String::from("representation,id,start,end,class,x,y\n");
    let mut per = Vec::new();
    for (name, m) in &reps {
        let prepared = pool.install(|| {
            data.par_iter()
                .enumerate()
                .map(|(i, seq)| prepare(*m, name, seq, cfg, i))
                .collect::<Result<Vec<_>>>()
        })?;
        let records: Vec<RepRecord> = prepared
            .iter()
            .zip(&ids)
            .map(|(p, id)| RepRecord {
                id: id.clone(),
                rows: p.draws[0].rows.clone(),
            })
            .collect();
        let spans: Vec<_> = prepared.iter().zip(&ids).map(|(p, id)| (id.clone(), p.spans.clone())).collect();
        write_dump(cfg.out.join("reps").join(name), &records, &spans)?;
        let o = probe_representation(name, &prepared, &ids, n_test, cfg)?;
        knn.push_str(&o.knn);
        scatter.push_str(&o.scatter);
        per.extend(o.per);
    }
    fs::write(cfg.out.join("knn.csv"), knn)?;
    fs::write(cfg.out.join("lda_scatter.csv"), scatter)?;
    fs::write(cfg.out.join("per.csv"), format_per_csv(&per))?;

    let best = best_per_budget(&per);
    for r in &per {
        let mark = if best.iter().any(|b| std::ptr::eq(*b, r)) { "  <- best" } else { "" };
        println!("{:>5} {:<8} PER {:.4}{mark}", r.budget.as_str(), r.representation, r.per);
    }
    Ok(())
}
