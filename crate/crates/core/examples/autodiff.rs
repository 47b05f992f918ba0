//! Reverse-mode autodiff on the tape, checked against central differences.
//!
//! cargo run --example autodiff

use slvm::numcore::{grad_check, ConvGeom, Tape, Tensor, Var};
use slvm::Result;

// A tiny gated causal convolution followed by a squared-error readout.
fn gated_conv(t: &mut Tape, x: Var) -> Result<Var> {
    let w = t.constant(Tensor::new(vec![4, 2, 2], (0..16).map(|i| ((i as f64) * 0.71).sin()).collect())?);
    let h = t.conv1d(x, w, None, ConvGeom::causal(2, 1))?;
    let a = t.slice(h, 0, 0, 2)?;
    let b = t.slice(h, 0, 2, 2)?;
    let (a, b) = (t.tanh(a)?, t.sigmoid(b)?);
    let y = t.mul(a, b)?;
    let sq = t.mul(y, y)?;
    t.mean(sq)
}

fn main() -> Result<()> {
    let x = Tensor::matrix(2, 6, vec![0.3, -0.1, 0.8, 0.2, -0.5, 0.4, 0.0, 0.6, -0.3, 0.9, 0.1, -0.7])?;

    let mut tape = Tape::new();
    let v = tape.leaf(x.clone(), true);
    let loss = gated_conv(&mut tape, v)?;
    tape.backward(loss)?;
    println!("loss     {:.6}", tape.value(loss).item());
    println!("d loss/dx {:?}", tape.grad(v).unwrap().iter().map(|g| format!("{g:+.4}")).collect::<Vec<_>>());

    let worst = grad_check(gated_conv, &x, 1e-5)?;
    println!("worst relative error vs finite differences: {worst:.2e}");
    Ok(())
}
