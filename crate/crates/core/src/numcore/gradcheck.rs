use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{ensure, Error, Result};

/// Max over coordinates of `|analytic - numeric| / (|analytic| + |numeric| + 1e-12)`
/// where `numeric` is the central difference with step `eps`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    ensure!(eps > 0.0, "grad_check: eps must be positive");
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), true);
    let root = f(&mut tape, xv)?;
    ensure!(tape.value(root).is_scalar(), "grad_check: f must return a scalar");
    tape.backward(root)?;
    let analytic = tape.grad(xv).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.numel()]);

    let eval = |probe: Tensor| -> Result<f64> {
        let mut t = Tape::new();
        let v = t.leaf(probe, false);
        let r = f(&mut t, v)?;
        let val = t.value(r).item();
        if !val.is_finite() {
            return Err(Error::Numeric {
                op: "grad_check",
                detail: "f is not finite near x".into(),
            });
        }
        Ok(val)
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12)
}
