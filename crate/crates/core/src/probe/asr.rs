//! CTC-trained bidirectional LSTM phoneme probe.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::average::RepSequence;
use super::ctc::{ctc_loss_var, ctc_min_frames, greedy_decode, phoneme_error_rate};
use crate::error::{ensure, Error, Result};
use crate::models::layers::{Init, Linear, Lstm};
use crate::numcore::{Bound, ParamStore, Tape, Tensor, Var};
use crate::train::{adam_step, clip_grad_norm, AdamConfig, AdamState};

/// Labeled-data tiers. Each keeps a fraction of the training utterances
/// proportional to its duration and sets its own dropout rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Budget {
    #[serde(rename = "10m")]
    TenMinutes,
    #[serde(rename = "1h")]
    OneHour,
    #[serde(rename = "3.7h")]
    Full,
}

impl Budget {
    pub const ALL: [Budget; 3] = [Self::TenMinutes, Self::OneHour, Self::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::TenMinutes => "10m",
            Self::OneHour => "1h",
            Self::Full => "3.7h",
        }
    }

    pub fn dropout(self) -> f64 {
        match self {
            Self::TenMinutes => 0.4,
            Self::OneHour => 0.35,
            Self::Full => 0.3,
        }
    }

    pub fn hours(self) -> f64 {
        match self {
            Self::TenMinutes => 1.0 / 6.0,
            Self::OneHour => 1.0,
            Self::Full => 3.7,
        }
    }

    /// Training utterances kept out of `n` (at least one).
    pub fn subset_len(self, n: usize) -> usize {
        ((n as f64 * self.hours() / 3.7).ceil() as usize).clamp(1.min(n), n)
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown budget `{s}` (expected 10m, 1h or 3.7h)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub width: usize,
    pub layers: usize,
    pub lr: f64,
    /// Optimizer steps, one utterance each. Fixed across budgets.
    pub steps: usize,
    pub clip_norm: f64,
    pub seed: u64,
    /// Posterior draws averaged per span for LDA/KNN.
    pub n_resample: usize,
    pub lda_dims: usize,
    pub knn_k: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            width: 64,
            layers: 3,
            lr: 1e-3,
            steps: 2000,
            clip_norm: 10.0,
            seed: 0,
            n_resample: 100,
            lda_dims: 5,
            knn_k: 5,
        }
    }
}

/// One probe input: representation rows and the reference label sequence.
/// Stochastic representations may carry further posterior draws; training
/// epoch `e` reads draw `e mod (1 + resamples.len())`, draw 0 being `rows`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
    pub resamples: Vec<Vec<Vec<f64>>>,
}

impl Utterance {
    /// Reference sequence from frame spans, in order, empty spans dropped.
    pub fn from_spans(id: impl Into<String>, rep: &RepSequence, spans: &[(usize, usize, u32)]) -> Self {
        Self {
            id: id.into(),
            rows: rep.rows.clone(),
            labels: spans.iter().filter(|s| s.0 < s.1).map(|s| s.2).collect(),
            resamples: Vec::new(),
        }
    }

    /// Rows for training epoch `epoch`.
    pub fn draw(&self, epoch: usize) -> &[Vec<f64>] {
        match epoch % (1 + self.resamples.len()) {
            0 => &self.rows,
            k => &self.resamples[k - 1],
        }
    }
}

/// One coordinate mask per sequence: zero with probability `p`, otherwise
/// `1 / (1 - p)`.
pub fn dropout_mask(width: usize, p: f64, rng: &mut impl Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..width).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect()
}

/// `[T, W]` multiplier: the mask on every row but the first.
fn temporal_mask(t: usize, mask: &[f64]) -> Tensor {
    let w = mask.len();
    let mut data = vec![1.0; t * w];
    for row in data.chunks_mut(w).skip(1) {
        row.copy_from_slice(mask);
    }
    Tensor::matrix(t, w, data).expect("sized above")
}

#[derive(Clone, Debug)]
pub struct AsrProbe {
    pub params: ParamStore,
    cells: Vec<(Lstm, Lstm)>,
    out: Linear,
    /// Output index to label.
    pub classes: Vec<u32>,
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl AsrProbe {
    fn new(dim: usize, classes: Vec<u32>, cfg: &ProbeConfig, shift: Vec<f64>, scale: Vec<f64>) -> Self {
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut init = Init {
            store: &mut params,
            rng: &mut rng,
        };
        let cells = (0..cfg.layers)
            .map(|l| {
                let input = if l == 0 { dim } else { 2 * cfg.width };
                (init.lstm(&format!("l{l}.fwd"), input, cfg.width), init.lstm(&format!("l{l}.bwd"), input, cfg.width))
            })
            .collect();
        let out = init.linear("out", 2 * cfg.width, classes.len() + 1);
        Self {
            params,
            cells,
            out,
            classes,
            shift,
            scale,
        }
    }

    fn run_direction(tape: &mut Tape, p: &Bound, cell: &Lstm, x: Var, reverse: bool) -> Result<Var> {
        let t_len = tape.shape(x)[0];
        let gx = cell.project(tape, p, x)?;
        let mut h = tape.constant(Tensor::zeros(&[1, cell.hidden]));
        let mut c = h;
        let mut rows = vec![h; t_len];
        let order: Vec<usize> = if reverse { (0..t_len).rev().collect() } else { (0..t_len).collect() };
        for t in order {
            let g = tape.slice(gx, 0, t, 1)?;
            (h, c) = cell.step(tape, p, g, h, c)?;
            rows[t] = h;
        }
        tape.concat(&rows, 0)
    }

    /// `[T, C+1]` logits. With `dropout` set, one mask per layer output.
    fn logits(&self, tape: &mut Tape, p: &Bound, rows: &[Vec<f64>], dropout: Option<(f64, &mut ChaCha8Rng)>) -> Result<Var> {
        let d = self.shift.len();
        ensure!(!rows.is_empty(), "empty utterance");
        ensure!(rows.iter().all(|r| r.len() == d), "representation rows must have width {d}");
        let data = rows
            .iter()
            .flat_map(|r| r.iter().zip(&self.shift).zip(&self.scale).map(|((v, m), s)| (v - m) / s))
            .collect();
        let mut x = tape.constant(Tensor::matrix(rows.len(), d, data)?);
        let mut dropout = dropout;
        for (fwd, bwd) in &self.cells {
            let a = Self::run_direction(tape, p, fwd, x, false)?;
            let b = Self::run_direction(tape, p, bwd, x, true)?;
            x = tape.concat(&[a, b], 1)?;
            if let Some((rate, rng)) = dropout.as_mut() {
                if *rate > 0.0 {
                    let mask = dropout_mask(2 * fwd.hidden, *rate, *rng);
                    let m = tape.constant(temporal_mask(rows.len(), &mask));
                    x = tape.mul(x, m)?;
                }
            }
        }
        self.out.forward(tape, p, x)
    }

    /// Eval-mode logits.
    pub fn forward(&self, rows: &[Vec<f64>]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let y = self.logits(&mut tape, &p, rows, None)?;
        Ok(tape.value(y).clone())
    }

    /// Training-mode logits at dropout rate `p`, masks drawn from `rng`.
    pub fn forward_train(&self, rows: &[Vec<f64>], p: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape, false);
        let y = self.logits(&mut tape, &b, rows, Some((p, rng)))?;
        Ok(tape.value(y).clone())
    }

    pub fn decode(&self, rows: &[Vec<f64>]) -> Result<Vec<u32>> {
        Ok(greedy_decode(&self.forward(rows)?).into_iter().map(|i| self.classes[i]).collect())
    }

    /// Corpus error rate. Labels never seen in training cannot be emitted
    /// and so count as errors.
    pub fn error_rate(&self, test: &[Utterance]) -> Result<f64> {
        let index: BTreeMap<u32, usize> = self.classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let unseen = usize::MAX;
        let pairs = test
            .iter()
            .map(|u| {
                let hyp = greedy_decode(&self.forward(&u.rows)?);
                let reference = u.labels.iter().map(|l| index.get(l).copied().unwrap_or(unseen)).collect();
                Ok((reference, hyp))
            })
            .collect::<Result<Vec<_>>>()?;
        phoneme_error_rate(&pairs)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub budget: Budget,
    pub per: f64,
    pub train_utterances: usize,
    /// Utterances too short to align their labels.
    pub skipped: usize,
    pub final_loss: f64,
}

/// Trains on the budget's share of `train` with its dropout rate.
pub fn train_probe(train: &[Utterance], cfg: &ProbeConfig, budget: Budget) -> Result<(AsrProbe, ProbeReport)> {
    ensure!(cfg.width >= 1 && cfg.layers >= 1, "probe needs width and layers >= 1");
    ensure!(cfg.lr > 0.0 && cfg.steps >= 1, "probe needs lr > 0 and steps >= 1");
    let subset = &train[..budget.subset_len(train.len())];
    let usable: Vec<&Utterance> = subset
        .iter()
        .filter(|u| !u.rows.is_empty() && ctc_min_frames(&u.labels) <= u.rows.len())
        .collect();
    let skipped = subset.len() - usable.len();
    for u in subset.iter().filter(|u| ctc_min_frames(&u.labels) > u.rows.len()) {
        eprintln!("warning: skipping utterance {} ({} labels, {} rows)", u.id, u.labels.len(), u.rows.len());
    }
    ensure!(!usable.is_empty(), "no trainable utterances in the {budget} subset");
    let d = usable[0].rows[0].len();

    let classes: Vec<u32> = usable
        .iter()
        .flat_map(|u| u.labels.iter().copied())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<u32, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();

    // per-feature standardization from the training rows
    let n = usable.iter().map(|u| u.rows.len()).sum::<usize>() as f64;
    let mut shift = vec![0.0; d];
    for r in usable.iter().flat_map(|u| &u.rows) {
        ensure!(r.len() == d, "representation rows must share width {d}");
        shift.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
    }
    let mut scale = vec![0.0; d];
    for r in usable.iter().flat_map(|u| &u.rows) {
        scale.iter_mut().zip(r.iter().zip(&shift)).for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n);
    }
    scale.iter_mut().for_each(|s| *s = s.sqrt().max(1e-6));

    let mut probe = AsrProbe::new(d, classes, cfg, shift, scale);
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(&probe.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut order: Vec<usize> = Vec::new();
    let mut epoch = 0;
    let mut recent = Vec::new();
    for step in 0..cfg.steps {
        if order.is_empty() {
            if step > 0 {
                epoch += 1;
            }
            order = (0..usable.len()).collect();
            order.shuffle(&mut rng);
        }
        let u = usable[order.pop().expect("refilled above")];
        let labels: Vec<usize> = u.labels.iter().map(|l| index[l]).collect();
        let mut tape = Tape::new();
        let p = probe.params.bind(&mut tape, true);
        let rows = u.draw(epoch);
        ensure!(rows.len() == u.rows.len(), "draws of {} differ in length", u.id);
        let y = probe.logits(&mut tape, &p, rows, Some((budget.dropout(), &mut rng)))?;
        let loss = ctc_loss_var(&mut tape, y, &labels)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Numeric {
                op: "asr_probe",
                detail: format!("non-finite CTC loss at step {step}"),
            });
        }
        tape.backward(loss)?;
        let mut grads = p.grads(&tape, &probe.params);
        clip_grad_norm(&mut grads, cfg.clip_norm);
        adam_step(&mut probe.params, &grads, &mut state, &adam)?;
        recent.push(value / labels.len().max(1) as f64);
        if recent.len() > usable.len().max(10) {
            recent.remove(0);
        }
    }
    let report = ProbeReport {
        budget,
        per: f64::NAN,
        train_utterances: usable.len(),
        skipped,
        final_loss: recent.iter().sum::<f64>() / recent.len() as f64,
    };
    Ok((probe, report))
}

/// Trains at `budget` and scores on `test`.
pub fn asr_probe_train(train: &[Utterance], test: &[Utterance], cfg: &ProbeConfig, budget: Budget) -> Result<ProbeReport> {
    let (probe, mut report) = train_probe(train, cfg, budget)?;
    report.per = probe.error_rate(test)?;
    Ok(report)
}
