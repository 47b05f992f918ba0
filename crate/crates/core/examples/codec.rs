//! Mu-law companding, grid quantization, WAV I/O and frame stacking.
//!
//! cargo run --example codec

use slvm::audio::codec::{self, Encoding};
use slvm::audio::{read_wav, write_wav, EncodedSequence, Wav};
use slvm::Result;

fn main() -> Result<()> {
    for x in [-1.0, -0.1, 0.0, 0.01, 0.5, 1.0] {
        let y = codec::encode(x, Encoding::MuLaw, 8)?;
        let back = codec::decode(y, Encoding::MuLaw)?;
        println!("x {x:+.3}  mu-law@8 {y:+.5} (index {:3})  decoded {back:+.5}", codec::grid_index(y, 8));
    }
    println!("grid at 8 bits: {} values, gap {:.3e}", codec::grid_size(8), codec::grid_gap(8));

    let tone: Vec<f64> = (0..1000).map(|n| 0.4 * (n as f64 * 2.0 * std::f64::consts::PI * 440.0 / 16000.0).sin()).collect();
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("tone.wav");
    write_wav(&path, &Wav::from_unit(16000, &tone))?;
    let seq = EncodedSequence::from_wav("tone", &read_wav(&path)?, Encoding::MuLaw, 16)?;
    println!("{}: {} frames at {} Hz, {} bits {}", seq.id, seq.len(), seq.sample_rate, seq.bit_depth, seq.encoding.as_str());

    // 1000 frames at s = 64 need 16 steps; the last is zero-padded and masked
    let st = seq.stack(64)?;
    let last = st.num_steps() - 1;
    println!("stacked: {} steps, last step holds {} real frames", st.num_steps(), st.valid_in_step(last));
    assert_eq!(st.unstack(), seq.values);
    Ok(())
}
