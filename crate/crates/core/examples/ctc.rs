//! CTC loss on hand-built logits: a confident, correct alignment scores
//! low, a wrong one high; greedy decoding collapses repeats and blanks.
//!
//! cargo run --example ctc

use slvm::numcore::{Tape, Tensor};
use slvm::probe::{ctc_loss, ctc_loss_var, ctc_min_frames, greedy_decode, phoneme_error_rate};
use slvm::Result;

/// Logits over classes `{0, 1}` plus a trailing blank, weighting the given path.
fn path_logits(path: &[usize], w: f64) -> Result<Tensor> {
    let mut data = vec![0.0; path.len() * 3];
    for (t, &c) in path.iter().enumerate() {
        data[t * 3 + c] = w;
    }
    Tensor::matrix(path.len(), 3, data)
}

fn main() -> Result<()> {
    let target = [0usize, 0, 1];
    println!("frames needed for {target:?}: {}", ctc_min_frames(&target));

    let good = path_logits(&[0, 0, 2, 0, 1, 1], 4.0)?;
    let bad = path_logits(&[1, 1, 2, 1, 0, 2], 4.0)?;
    println!("loss on matching logits {:.4}", ctc_loss(&good, &target)?);
    println!("loss on mismatched logits {:.4}", ctc_loss(&bad, &target)?);

    let hyp = greedy_decode(&good);
    let bad_hyp = greedy_decode(&bad);
    println!("greedy: {hyp:?} and {bad_hyp:?}");
    println!("error rate {:.3}", phoneme_error_rate(&[(target.to_vec(), hyp), (target.to_vec(), bad_hyp)])?);

    let mut tape = Tape::new();
    let x = tape.leaf(bad, true);
    let loss = ctc_loss_var(&mut tape, x, &target)?;
    tape.backward(loss)?;
    let g = tape.grad(x).unwrap();
    println!("gradient at t = 0 over (0, 1, blank): {:+.3} {:+.3} {:+.3}", g[0], g[1], g[2]);
    Ok(())
}
