//! Labeled synthetic corpus: generate, write to disk, read back.
//!
//! cargo run --example synth_corpus

use slvm::audio::codec::Encoding;
use slvm::audio::synth::label_spans;
use slvm::audio::{read_corpus, synth_clips, write_corpus, GeneratorConfig};
use slvm::Result;

fn main() -> Result<()> {
    let cfg = GeneratorConfig { count: 3, ..GeneratorConfig::two_timescale() };
    let clips = synth_clips(&cfg, 42)?;
    for c in &clips {
        let spans = label_spans(c.labels.as_deref().unwrap_or_default());
        let shown: Vec<String> = spans.iter().take(4).map(|(a, b, k)| format!("{k}@{a}..{b}")).collect();
        println!("{}: {} frames, {} regime spans, first {}", c.id, c.wav.samples.len(), spans.len(), shown.join(" "));
    }

    let dir = tempfile::tempdir()?;
    write_corpus(dir.path(), &clips)?;
    let mut names: Vec<String> = std::fs::read_dir(dir.path())?.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    println!("on disk: {}", names.join(", "));

    let seqs = read_corpus(dir.path(), Encoding::MuLaw, 8)?;
    assert_eq!(seqs.len(), clips.len());
    assert!(seqs.iter().zip(&clips).all(|(s, c)| s.labels == c.labels));
    println!("read back {} sequences at {} bits, labels intact", seqs.len(), seqs[0].bit_depth);
    Ok(())
}
