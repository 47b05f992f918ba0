//! Diagonal Gaussians: floored output likelihood, analytic KL, reparameterized draws.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure, Result};
use crate::numcore::{Tape, Tensor, Var};

/// Output variance floor, `0.01^2`.
pub const DEFAULT_VAR_FLOOR: f64 = 1e-4;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
    /// Lower bound on the variance; 0 disables it.
    pub var_floor: f64,
}

impl GaussianParams {
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>, var_floor: f64) -> Result<Self> {
        ensure!(mean.len() == log_var.len(), "mean has {} dims, log_var {}", mean.len(), log_var.len());
        ensure!(var_floor >= 0.0, "variance floor must be non-negative");
        Ok(Self { mean, log_var, var_floor })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_var: vec![0.0; dim],
            var_floor: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self, d: usize) -> f64 {
        self.log_var[d].exp().max(self.var_floor)
    }
}

pub fn gaussian_log_prob(g: &GaussianParams, x: &[f64]) -> Result<f64> {
    ensure!(x.len() == g.dim(), "x has {} dims, distribution {}", x.len(), g.dim());
    Ok((0..g.dim())
        .map(|d| {
            let v = g.variance(d);
            -HALF_LN_2PI - 0.5 * v.ln() - 0.5 * (x[d] - g.mean[d]).powi(2) / v
        })
        .sum())
}

/// Largest achievable log-likelihood of `frames` scalar observations when the
/// standard deviation may not fall below `sigma_min`.
pub fn max_gaussian_ll(sigma_min: f64, frames: usize) -> Result<f64> {
    ensure!(sigma_min > 0.0, "sigma_min must be positive, got {sigma_min}");
    Ok(frames as f64 * (-0.5 * (2.0 * PI).ln() - 0.5 * (sigma_min * sigma_min).ln()))
}

/// `KL(q || p)` summed over dimensions.
pub fn gaussian_kl(q: &GaussianParams, p: &GaussianParams) -> Result<f64> {
    ensure!(q.dim() == p.dim(), "KL between {}- and {}-dimensional Gaussians", q.dim(), p.dim());
    Ok((0..q.dim())
        .map(|d| {
            let (vq, vp) = (q.variance(d), p.variance(d));
            0.5 * (vq / vp + (p.mean[d] - q.mean[d]).powi(2) / vp - 1.0 + vp.ln() - vq.ln())
        })
        .sum())
}

/// `mean + exp(log_var / 2) * eps` where `eps ~ N(0, 1)` is drawn fresh.
pub fn reparam_sample(g: &GaussianParams, rng: &mut impl Rng) -> Vec<f64> {
    (0..g.dim())
        .map(|d| {
            let eps: f64 = rng.sample(StandardNormal);
            g.mean[d] + g.variance(d).sqrt() * eps
        })
        .collect()
}

/// Tape version of the reparameterized draw with caller-supplied noise, so
/// gradients reach `mean` and `log_var` but not `eps`.
pub fn reparam_var(tape: &mut Tape, mean: Var, log_var: Var, eps: &Tensor) -> Result<Var> {
    let half = tape.scale(log_var, 0.5)?;
    let std = tape.exp(half)?;
    let noise = tape.constant(eps.clone());
    let scaled = tape.mul(std, noise)?;
    tape.add(mean, scaled)
}

/// Summed `KL(q || p)` over all entries of equally shaped mean/log-var nodes.
pub fn gaussian_kl_var(tape: &mut Tape, q_mean: Var, q_log_var: Var, p_mean: Var, p_log_var: Var) -> Result<Var> {
    let shape = tape.shape(q_mean).to_vec();
    for v in [q_log_var, p_mean, p_log_var] {
        ensure!(tape.shape(v) == shape.as_slice(), "KL operands have shapes {:?} and {:?}", shape, tape.shape(v));
    }
    let n = tape.value(q_mean).numel();
    let (mq, lq) = (tape.value(q_mean).data(), tape.value(q_log_var).data());
    let (mp, lp) = (tape.value(p_mean).data(), tape.value(p_log_var).data());
    let mut total = 0.0;
    let mut g = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let ratio = (lq[i] - lp[i]).exp();
        let diff = mp[i] - mq[i];
        let inv_vp = (-lp[i]).exp();
        total += 0.5 * (ratio + diff * diff * inv_vp - 1.0 + lp[i] - lq[i]);
        g[0][i] = -diff * inv_vp;
        g[1][i] = 0.5 * (ratio - 1.0);
        g[2][i] = diff * inv_vp;
        g[3][i] = 0.5 * (1.0 - ratio - diff * diff * inv_vp);
    }
    tape.fused("gaussian_kl", total, vec![q_mean, q_log_var, p_mean, p_log_var], g.into())
}

/// Weighted sum of floored Gaussian log-likelihoods. `mean` and `log_var` are
/// equally shaped; `targets`/`weights` are flat in the same order.
pub fn gaussian_log_lik(
    tape: &mut Tape,
    mean: Var,
    log_var: Var,
    targets: &[f64],
    weights: &[f64],
    var_floor: f64,
) -> Result<(Var, Vec<f64>)> {
    ensure!(tape.shape(mean) == tape.shape(log_var), "Gaussian mean and log_var shapes differ");
    let n = tape.value(mean).numel();
    ensure!(targets.len() == n && weights.len() == n, "Gaussian: {n} outputs but {} targets", targets.len());
    let (m, lv) = (tape.value(mean).data(), tape.value(log_var).data());
    let mut total = 0.0;
    let mut per = Vec::with_capacity(n);
    let (mut gm, mut gl) = (vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        if weights[i] == 0.0 {
            per.push(0.0);
            continue;
        }
        let raw = lv[i].exp();
        let floored = raw < var_floor;
        let v = if floored { var_floor } else { raw };
        let r = targets[i] - m[i];
        let lp = -HALF_LN_2PI - 0.5 * v.ln() - 0.5 * r * r / v;
        per.push(lp);
        total += weights[i] * lp;
        gm[i] = weights[i] * r / v;
        gl[i] = if floored { 0.0 } else { weights[i] * 0.5 * (r * r / v - 1.0) };
    }
    let node = tape.fused("gaussian_log_lik", total, vec![mean, log_var], vec![gm, gl])?;
    Ok((node, per))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::grad_check;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(mean: f64, var: f64) -> GaussianParams {
        GaussianParams::new(vec![mean], vec![var.ln()], 0.0).unwrap()
    }

    #[test]
    fn floored_peak_density() {
        let g = GaussianParams::new(vec![0.3], vec![-20.0], 0.01 * 0.01).unwrap();
        let lp = gaussian_log_prob(&g, &[0.3]).unwrap();
        assert!((lp - 3.68623).abs() < 1e-4, "{lp}");
    }

    #[test]
    fn max_ll_per_frame() {
        assert!((max_gaussian_ll(1.0, 1).unwrap() - -0.918939).abs() < 1e-6);
        // -0.5 ln(2 pi) - ln(1e-3)
        assert!((max_gaussian_ll(0.001, 1).unwrap() - 5.988817).abs() < 1e-6);
        assert!((max_gaussian_ll(0.01, 10).unwrap() - 36.86232).abs() < 1e-4);
        assert!(max_gaussian_ll(0.0, 1).is_err());
    }

    #[test]
    fn kl_closed_forms() {
        assert_eq!(gaussian_kl(&scalar(0.2, 0.7), &scalar(0.2, 0.7)).unwrap(), 0.0);
        assert!((gaussian_kl(&scalar(1.0, 1.0), &scalar(0.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        assert!(gaussian_kl(&GaussianParams::standard(2), &GaussianParams::standard(3)).is_err());
    }

    /// KL by Simpson quadrature of q log(q/p) over +-8 sigma of q.
    fn quadrature_kl(mq: f64, vq: f64, mp: f64, vp: f64) -> f64 {
        let sq = vq.sqrt();
        let (lo, hi) = (mq - 8.0 * sq, mq + 8.0 * sq);
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let logn = |x: f64, m: f64, v: f64| -HALF_LN_2PI - 0.5 * v.ln() - 0.5 * (x - m).powi(2) / v;
        let f = |x: f64| {
            let lq = logn(x, mq, vq);
            lq.exp() * (lq - logn(x, mp, vp))
        };
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn kl_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (mq, mp) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let (vq, vp) = (rng.random_range(0.2..3.0), rng.random_range(0.2..3.0));
            let kl = gaussian_kl(&scalar(mq, vq), &scalar(mp, vp)).unwrap();
            assert!((kl - quadrature_kl(mq, vq, mp, vp)).abs() < 1e-6);
        }
    }

    #[test]
    fn tape_kl_matches_scalar_and_grad_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<f64> = (0..12).map(|_| rng.random_range(-1.5..1.5)).collect();
        let x = Tensor::matrix(4, 3, data.clone()).unwrap();
        let q = GaussianParams::new(data[0..3].to_vec(), data[3..6].to_vec(), 0.0).unwrap();
        let p = GaussianParams::new(data[6..9].to_vec(), data[9..12].to_vec(), 0.0).unwrap();
        let f = |t: &mut Tape, v: Var| {
            let parts: Vec<Var> = (0..4).map(|r| t.slice(v, 0, r, 1)).collect::<Result<_>>()?;
            gaussian_kl_var(t, parts[0], parts[1], parts[2], parts[3])
        };
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let kl = f(&mut tape, v).unwrap();
        assert!((tape.value(kl).item() - gaussian_kl(&q, &p).unwrap()).abs() < 1e-12);
        assert!(grad_check(f, &x, 1e-5).unwrap() < 1e-4);
    }

    #[test]
    fn log_lik_grad_check_including_floor() {
        let x = Tensor::matrix(2, 3, vec![0.1, -0.4, 0.9, -0.5, -12.0, 0.3]).unwrap();
        let targets = [0.2, -0.1, 0.5];
        let f = |t: &mut Tape, v: Var| {
            let m = t.slice(v, 0, 0, 1)?;
            let l = t.slice(v, 0, 1, 1)?;
            Ok(gaussian_log_lik(t, m, l, &targets, &[1.0, 2.0, 0.5], 1e-4)?.0)
        };
        assert!(grad_check(f, &x, 1e-5).unwrap() < 1e-4);
    }

    #[test]
    fn reparam_degenerate_and_gradients() {
        let g = GaussianParams::new(vec![0.7, -0.2], vec![-800.0, -800.0], 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(reparam_sample(&g, &mut rng), vec![0.7, -0.2]);

        let eps = Tensor::row(vec![0.3, -1.1]);
        let mut tape = Tape::new();
        let m = tape.leaf(Tensor::row(vec![0.1, 0.2]), true);
        let lv = tape.leaf(Tensor::row(vec![-0.5, 0.4]), true);
        let z = reparam_var(&mut tape, m, lv, &eps).unwrap();
        let s = tape.sum(z).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(m).unwrap(), &[1.0, 1.0]);
        let glv = tape.grad(lv).unwrap();
        for (d, (&l, &e)) in [-0.5f64, 0.4].iter().zip(eps.data()).enumerate() {
            assert!((glv[d] - 0.5 * (0.5 * l).exp() * e).abs() < 1e-12);
        }
        let x = Tensor::row(vec![0.1, 0.2, -0.5, 0.4]);
        let err = grad_check(
            |t, v| {
                let m = t.slice(v, 1, 0, 2)?;
                let l = t.slice(v, 1, 2, 2)?;
                let z = reparam_var(t, m, l, &eps)?;
                let sq = t.mul(z, z)?;
                t.sum(sq)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4);
    }

    proptest! {
        #[test]
        fn kl_nonnegative(mq in -3.0f64..3.0, mp in -3.0f64..3.0, lq in -4.0f64..4.0, lp in -4.0f64..4.0) {
            let q = GaussianParams::new(vec![mq], vec![lq], 0.0).unwrap();
            let p = GaussianParams::new(vec![mp], vec![lp], 0.0).unwrap();
            prop_assert!(gaussian_kl(&q, &p).unwrap() >= -1e-12);
            prop_assert!(gaussian_kl(&q, &q).unwrap().abs() <= 1e-12);
        }
    }
}
