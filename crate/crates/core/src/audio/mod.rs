//! Waveform data path: encodings, WAV files, stacking, synthetic corpora and
//! length-bucketed batching.

mod batch;
pub mod codec;
mod sequence;
pub mod synth;
pub mod wav;

pub use batch::{make_batches, shuffled_batches, Batch};
pub use codec::{
    decode, encode, grid_gap, grid_index, grid_size, grid_value, mulaw_decode, mulaw_encode, on_grid, quantize,
    Encoding, DEFAULT_MU,
};
pub use sequence::{stack, EncodedSequence, StackedSequence};
pub use synth::{read_corpus, synth_clips, synth_dataset, write_corpus, Clip, GeneratorConfig, Regime};
pub use wav::{read_wav, write_wav, Wav};
