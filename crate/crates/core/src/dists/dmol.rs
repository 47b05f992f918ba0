//! Discretized mixture of logistics over the `b`-bit grid in `[-1, 1)`.
//!
//! Bin `x` covers `[x - h, x + h]` with half-width `h = 2^-b`. The lowest bin
//! extends to `-inf` and the highest to `+inf`, so the grid masses sum to one.

use rand::Rng;

use crate::audio::{grid_gap, on_grid, quantize};
use crate::error::{ensure, Result};
use crate::numcore::ops::{log_sigmoid, log_sigmoid_diff, logsumexp, sigmoid, softmax};
use crate::numcore::{Tape, Var};

/// Floor applied to every log-scale before use.
pub const LOG_SCALE_MIN: f64 = -7.0;

pub const DEFAULT_COMPONENTS: usize = 10;

/// Parameters of one DMoL distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct DMoLParams {
    pub logit_weights: Vec<f64>,
    pub means: Vec<f64>,
    pub log_scales: Vec<f64>,
    pub bit_depth: u32,
}

impl DMoLParams {
    pub fn new(logit_weights: Vec<f64>, means: Vec<f64>, log_scales: Vec<f64>, bit_depth: u32) -> Result<Self> {
        let k = logit_weights.len();
        ensure!(k >= 1, "DMoL needs at least one component");
        ensure!(means.len() == k && log_scales.len() == k, "DMoL component vectors differ in length");
        ensure!((1..=24).contains(&bit_depth), "bit depth {bit_depth} unsupported");
        Ok(Self {
            logit_weights,
            means,
            log_scales,
            bit_depth,
        })
    }

    /// Reads one `[logits | means | log_scales]` row as produced by model heads.
    pub fn from_row(row: &[f64], bit_depth: u32) -> Result<Self> {
        ensure!(row.len() % 3 == 0 && !row.is_empty(), "DMoL row length {} not a multiple of 3", row.len());
        let k = row.len() / 3;
        Self::new(row[..k].to_vec(), row[k..2 * k].to_vec(), row[2 * k..].to_vec(), bit_depth)
    }

    pub fn components(&self) -> usize {
        self.logit_weights.len()
    }

    pub fn half_width(&self) -> f64 {
        0.5 * grid_gap(self.bit_depth)
    }

    pub fn to_row(&self) -> Vec<f64> {
        [self.logit_weights.as_slice(), &self.means, &self.log_scales].concat()
    }
}

/// Which side of a bin is open.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Edge {
    Lowest,
    Highest,
    Interior,
}

fn edge_of(x: f64, bit_depth: u32) -> Edge {
    if x <= -1.0 {
        Edge::Lowest
    } else if x >= 1.0 - grid_gap(bit_depth) {
        Edge::Highest
    } else {
        Edge::Interior
    }
}

/// Log mass of one logistic component on the bin of `x`, with gradients
/// w.r.t. the mean and (clamped) log-scale.
fn component_log_bin(x: f64, mean: f64, log_scale_raw: f64, h: f64, edge: Edge) -> (f64, f64, f64) {
    let clamped = log_scale_raw < LOG_SCALE_MIN;
    let ls = if clamped { LOG_SCALE_MIN } else { log_scale_raw };
    let inv = (-ls).exp();
    let centered = x - mean;
    let a = (centered + h) * inv;
    let b = (centered - h) * inv;
    let (value, da, db) = match edge {
        Edge::Lowest => (log_sigmoid(a), sigmoid(-a), 0.0),
        Edge::Highest => (log_sigmoid(-b), 0.0, -sigmoid(b)),
        Edge::Interior => {
            let r = 1.0 / -(-(a - b)).exp_m1();
            (log_sigmoid_diff(a, b), r - sigmoid(a), -r + sigmoid(-b))
        }
    };
    let d_mean = -(da + db) * inv;
    let d_ls = if clamped { 0.0 } else { -(da * a + db * b) };
    (value, d_mean, d_ls)
}

/// Log probability (nats) of grid value `x`, with gradient w.r.t. a
/// `[logits | means | log_scales]` row.
fn row_log_prob(row: &[f64], x: f64, bit_depth: u32) -> (f64, Vec<f64>) {
    let k = row.len() / 3;
    let h = 0.5 * grid_gap(bit_depth);
    let edge = edge_of(x, bit_depth);
    let logits = &row[..k];
    let log_norm = logsumexp(logits);
    let mut comp = Vec::with_capacity(k);
    let mut d_mean = Vec::with_capacity(k);
    let mut d_ls = Vec::with_capacity(k);
    for j in 0..k {
        let (lb, dm, dl) = component_log_bin(x, row[k + j], row[2 * k + j], h, edge);
        comp.push(logits[j] - log_norm + lb);
        d_mean.push(dm);
        d_ls.push(dl);
    }
    let lp = logsumexp(&comp);
    let mut grad = vec![0.0; 3 * k];
    for j in 0..k {
        let resp = (comp[j] - lp).exp();
        let weight = (logits[j] - log_norm).exp();
        grad[j] = resp - weight;
        grad[k + j] = resp * d_mean[j];
        grad[2 * k + j] = resp * d_ls[j];
    }
    (lp, grad)
}

/// `log p(x)` under `p`. `x` must lie on the `p.bit_depth` grid.
pub fn dmol_log_prob(p: &DMoLParams, x: f64) -> Result<f64> {
    ensure!(on_grid(x, p.bit_depth), "{x} is not on the {}-bit grid", p.bit_depth);
    Ok(row_log_prob(&p.to_row(), x, p.bit_depth).0)
}

/// Component by softmax weight, logistic inverse-CDF draw, clamp, quantize.
pub fn dmol_sample(p: &DMoLParams, rng: &mut impl Rng) -> f64 {
    sample_row(&p.to_row(), p.bit_depth, rng)
}

pub(crate) fn sample_row(row: &[f64], bit_depth: u32, rng: &mut impl Rng) -> f64 {
    let k = row.len() / 3;
    let weights = softmax(&row[..k]);
    let mut u: f64 = rng.random();
    let mut comp = k - 1;
    for (j, w) in weights.iter().enumerate() {
        if u < *w {
            comp = j;
            break;
        }
        u -= w;
    }
    let ls = row[2 * k + comp].max(LOG_SCALE_MIN);
    let v: f64 = rng.random_range(f64::EPSILON..1.0 - f64::EPSILON);
    let x = row[k + comp] + ls.exp() * (v.ln() - (-v).ln_1p());
    quantize(x.clamp(-1.0, 1.0), bit_depth)
}

/// Weighted sum of per-row log probabilities as one tape node.
///
/// `params` is `[n, 3K]`; `targets` and `weights` have `n` entries. Rows with
/// zero weight (padding) contribute nothing. Returns the node and the
/// unweighted per-row log probabilities.
pub fn dmol_log_lik(tape: &mut Tape, params: Var, targets: &[f64], weights: &[f64], bit_depth: u32) -> Result<(Var, Vec<f64>)> {
    let (n, cols) = tape.value(params).rows_cols();
    ensure!(cols % 3 == 0 && cols > 0, "DMoL params need 3K columns, got {cols}");
    ensure!(
        targets.len() == n && weights.len() == n,
        "DMoL: {n} parameter rows but {} targets and {} weights",
        targets.len(),
        weights.len()
    );
    let data = tape.value(params).data();
    let mut total = 0.0;
    let mut per_row = Vec::with_capacity(n);
    let mut grad = vec![0.0; n * cols];
    for i in 0..n {
        if weights[i] == 0.0 {
            per_row.push(0.0);
            continue;
        }
        ensure!(on_grid(targets[i], bit_depth), "DMoL target {} is not on the {bit_depth}-bit grid", targets[i]);
        let (lp, g) = row_log_prob(&data[i * cols..(i + 1) * cols], targets[i], bit_depth);
        total += weights[i] * lp;
        per_row.push(lp);
        for (dst, src) in grad[i * cols..(i + 1) * cols].iter_mut().zip(g) {
            *dst = weights[i] * src;
        }
    }
    let node = tape.fused("dmol_log_lik", total, vec![params], vec![grad])?;
    Ok((node, per_row))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{grid_size, grid_value};
    use crate::numcore::{grad_check, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(k: usize, b: u32, rng: &mut ChaCha8Rng) -> DMoLParams {
        DMoLParams::new(
            (0..k).map(|_| rng.random_range(-2.0..2.0)).collect(),
            (0..k).map(|_| rng.random_range(-1.2..1.2)).collect(),
            (0..k).map(|_| rng.random_range(-5.0..0.0)).collect(),
            b,
        )
        .unwrap()
    }

    fn grid_total(p: &DMoLParams) -> f64 {
        (0..grid_size(p.bit_depth))
            .map(|k| dmol_log_prob(p, grid_value(k, p.bit_depth)).unwrap().exp())
            .sum()
    }

    #[test]
    fn single_logistic_at_centre_bin() {
        // 8 bits: half-width 2^-8, so mass = sigmoid(h) - sigmoid(-h) = tanh(h / 2).
        let p = DMoLParams::new(vec![0.0], vec![0.0], vec![0.0], 8).unwrap();
        let h = 2f64.powi(-8);
        let expected = (2.0 * sigmoid(h) - 1.0).ln();
        let lp = dmol_log_prob(&p, 0.0).unwrap();
        assert!((lp - expected).abs() < 1e-12);
        assert!((lp - (h / 2.0).tanh().ln()).abs() < 1e-12);
        assert!((lp - -6.2383).abs() < 1e-4, "{lp}");
    }

    #[test]
    fn normalizes_over_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in [1, 2, 10] {
            for _ in 0..10 {
                let p = random_params(k, 8, &mut rng);
                assert!((grid_total(&p) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identical_components_equal_single() {
        let one = DMoLParams::new(vec![0.3], vec![0.1], vec![-2.0], 8).unwrap();
        let two = DMoLParams::new(vec![1.0, 1.0], vec![0.1, 0.1], vec![-2.0, -2.0], 8).unwrap();
        for k in [0u64, 17, 140, 255] {
            let x = grid_value(k, 8);
            let a = dmol_log_prob(&one, x).unwrap();
            let b = dmol_log_prob(&two, x).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn edge_bin_absorbs_far_mass() {
        let p = DMoLParams::new(vec![0.0], vec![-40.0], vec![-3.0], 16).unwrap();
        let lp = dmol_log_prob(&p, -1.0).unwrap();
        assert!(lp.is_finite() && lp <= 0.0 && lp > -1e-12);
        let q = DMoLParams::new(vec![0.0], vec![40.0], vec![-3.0], 16).unwrap();
        let top = 1.0 - grid_gap(16);
        let lq = dmol_log_prob(&q, top).unwrap();
        assert!(lq.is_finite() && lq > -1e-12);
        // and an interior bin far from the mass is tiny but finite
        assert!(dmol_log_prob(&p, 0.5).unwrap().is_finite());
    }

    #[test]
    fn off_grid_is_rejected() {
        let p = DMoLParams::new(vec![0.0], vec![0.0], vec![0.0], 8).unwrap();
        assert!(dmol_log_prob(&p, 0.001).is_err());
    }

    #[test]
    fn permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_params(4, 8, &mut rng);
        let perm = [2, 0, 3, 1];
        let q = DMoLParams::new(
            perm.iter().map(|&i| p.logit_weights[i]).collect(),
            perm.iter().map(|&i| p.means[i]).collect(),
            perm.iter().map(|&i| p.log_scales[i]).collect(),
            8,
        )
        .unwrap();
        for k in (0..256).step_by(15) {
            let x = grid_value(k, 8);
            assert!((dmol_log_prob(&p, x).unwrap() - dmol_log_prob(&q, x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn fused_op_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = 3;
        let rows = 5;
        // moderate scales keep every component's gradient well above roundoff
        let data: Vec<f64> = (0..rows * 3 * k)
            .map(|i| if i % (3 * k) >= 2 * k { rng.random_range(-1.5..0.0) } else { rng.random_range(-1.0..1.0) })
            .collect();
        let x = Tensor::matrix(rows, 3 * k, data).unwrap();
        // include both edge bins and interior values
        let targets = vec![-1.0, 1.0 - grid_gap(8), 0.0, grid_value(77, 8), grid_value(200, 8)];
        let weights = vec![1.0, 0.5, 2.0, 1.0, 0.0];
        let err = grad_check(
            |t, v| Ok(dmol_log_lik(t, v, &targets, &weights, 8)?.0),
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn fused_op_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_params(4, 16, &mut rng);
        let targets = [grid_value(1000, 16), grid_value(40000, 16)];
        let mut tape = Tape::new();
        let row = p.to_row();
        let params = tape.constant(Tensor::matrix(2, 12, [row.clone(), row].concat()).unwrap());
        let (v, per_row) = dmol_log_lik(&mut tape, params, &targets, &[1.0, 1.0], 16).unwrap();
        let expect: Vec<f64> = targets.iter().map(|&x| dmol_log_prob(&p, x).unwrap()).collect();
        assert!((per_row[0] - expect[0]).abs() < 1e-12 && (per_row[1] - expect[1]).abs() < 1e-12);
        assert!((tape.value(v).item() - expect.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_scale_samples_nearest_grid_point() {
        // the clamped scale (~9e-4) is negligible against a 4-bit gap
        let p = DMoLParams::new(vec![0.0], vec![0.5], vec![-30.0], 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            assert_eq!(dmol_sample(&p, &mut rng), 0.5);
        }
    }

    #[test]
    fn monte_carlo_mean_of_symmetric_component() {
        let p = DMoLParams::new(vec![0.0], vec![0.0], vec![0.05f64.ln()], 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| dmol_sample(&p, &mut rng)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3e-3, "{mean}");
    }

    #[test]
    fn sample_histogram_matches_bin_masses() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let p = DMoLParams::new(vec![0.5, -0.5], vec![-0.3, 0.4], vec![-2.0, -2.5], 6).unwrap();
        let b = p.bit_depth;
        let cells = grid_size(b) as usize;
        let n = 50_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut counts = vec![0usize; cells];
        for _ in 0..n {
            counts[crate::audio::grid_index(dmol_sample(&p, &mut rng), b) as usize] += 1;
        }
        let probs: Vec<f64> = (0..cells).map(|k| dmol_log_prob(&p, grid_value(k as u64, b)).unwrap().exp()).collect();
        // pool sparse cells so every expected count is >= 5
        let (mut chi2, mut dof) = (0.0, 0usize);
        let (mut obs_acc, mut exp_acc) = (0.0, 0.0);
        for k in 0..cells {
            obs_acc += counts[k] as f64;
            exp_acc += probs[k] * n as f64;
            if exp_acc >= 5.0 || k == cells - 1 {
                chi2 += (obs_acc - exp_acc).powi(2) / exp_acc.max(1e-12);
                dof += 1;
                obs_acc = 0.0;
                exp_acc = 0.0;
            }
        }
        let critical = ChiSquared::new((dof - 1) as f64).unwrap().inverse_cdf(0.99);
        assert!(chi2 < critical, "chi2 {chi2} >= {critical} with {dof} cells");
    }
}
