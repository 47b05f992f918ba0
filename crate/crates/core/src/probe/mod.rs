//! Representation probes: span-averaged latents with LDA and KNN, a log
//! Mel frontend, and a CTC phoneme recognizer.

pub mod asr;
pub mod average;
pub mod ctc;
pub mod dump;
pub mod lda;
pub mod mel;

pub use asr::{asr_probe_train, dropout_mask, train_probe, AsrProbe, Budget, ProbeConfig, ProbeReport, Utterance};
pub use average::{layer_representation, resample_representation, segment_average, RepSequence, SpanMean};
pub use ctc::{ctc_loss, ctc_loss_var, ctc_min_frames, edit_distance, greedy_decode, log_softmax_rows, phoneme_error_rate};
pub use dump::{
    best_per_budget, decode_records, encode_records, format_per_csv, format_span_manifest, parse_per_csv, parse_span_manifest,
    write_dump, PerRow, RepRecord,
};
pub use lda::{knn_loo, lda_fit, Lda};
pub use mel::{mel_frontend, mel_spectrogram, MelConfig};
