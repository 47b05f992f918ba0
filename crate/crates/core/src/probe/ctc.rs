use crate::error::{ensure, Result};
use crate::numcore::{Tape, Tensor, Var};

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Row-wise log-softmax of `[T, K]` logits.
pub fn log_softmax_rows(logits: &Tensor) -> Tensor {
    let (t, k) = logits.rows_cols();
    let mut out = Vec::with_capacity(t * k);
    for i in 0..t {
        let row = logits.row_slice(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|v| v - lse));
    }
    Tensor::matrix(t, k, out).expect("same shape")
}

/// Minimum number of frames that can emit `labels` (repeats need a blank).
pub fn ctc_min_frames<T: PartialEq>(labels: &[T]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Loss and per-frame label occupancy from log-probabilities `[T, C+1]`.
fn forward_backward(lp: &Tensor, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    let (t_len, k) = lp.rows_cols();
    let blank = k - 1;
    ensure!(t_len >= 1, "ctc needs at least one frame");
    ensure!(labels.iter().all(|&l| l < blank), "label out of range (blank is class {blank})");
    if ctc_min_frames(labels) > t_len {
        return Ok((f64::INFINITY, vec![0.0; t_len * k]));
    }
    let mut ext = vec![blank; 2 * labels.len() + 1];
    for (i, &l) in labels.iter().enumerate() {
        ext[2 * i + 1] = l;
    }
    let s_len = ext.len();
    let skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
    let e = |t: usize, s: usize| lp.row_slice(t)[ext[s]];
    let ninf = f64::NEG_INFINITY;

    let mut alpha = vec![ninf; t_len * s_len];
    alpha[0] = e(0, 0);
    if s_len > 1 {
        alpha[1] = e(0, 1);
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut a = prev[s];
            if s >= 1 {
                a = log_add(a, prev[s - 1]);
            }
            if skip(s) {
                a = log_add(a, prev[s - 2]);
            }
            alpha[t * s_len + s] = if a == ninf { ninf } else { a + e(t, s) };
        }
    }
    let last = (t_len - 1) * s_len;
    let mut ll = alpha[last + s_len - 1];
    if s_len > 1 {
        ll = log_add(ll, alpha[last + s_len - 2]);
    }

    let mut beta = vec![ninf; t_len * s_len];
    beta[last + s_len - 1] = e(t_len - 1, s_len - 1);
    if s_len > 1 {
        beta[last + s_len - 2] = e(t_len - 1, s_len - 2);
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let next = &beta[(t + 1) * s_len..(t + 2) * s_len];
            let mut b = next[s];
            if s + 1 < s_len {
                b = log_add(b, next[s + 1]);
            }
            if s + 2 < s_len && skip(s + 2) {
                b = log_add(b, next[s + 2]);
            }
            beta[t * s_len + s] = if b == ninf { ninf } else { b + e(t, s) };
        }
    }

    let mut occ = vec![0.0; t_len * k];
    for t in 0..t_len {
        for s in 0..s_len {
            let v = alpha[t * s_len + s] + beta[t * s_len + s] - e(t, s) - ll;
            if v > ninf {
                occ[t * k + ext[s]] += v.exp();
            }
        }
    }
    Ok((-ll, occ))
}

/// `-log p(labels | logits)` summed over all alignments. Classes are
/// `0..C` with the blank last; an infeasible label sequence costs `+inf`.
pub fn ctc_loss(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    Ok(forward_backward(&log_softmax_rows(logits), labels)?.0)
}

/// [`ctc_loss`] as a graph node over `[T, C+1]` logits. Infeasible targets
/// are rejected rather than producing an infinite loss.
pub fn ctc_loss_var(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let lp = log_softmax_rows(tape.value(logits));
    let (loss, occ) = forward_backward(&lp, labels)?;
    ensure!(loss.is_finite(), "{} labels cannot be aligned to {} frames", labels.len(), lp.rows_cols().0);
    let grad: Vec<f64> = lp.data().iter().zip(&occ).map(|(l, o)| l.exp() - o).collect();
    tape.fused("ctc_loss", loss, vec![logits], vec![grad])
}

/// Argmax path with repeats merged and blanks dropped.
pub fn greedy_decode(logits: &Tensor) -> Vec<usize> {
    let (t, k) = logits.rows_cols();
    let blank = k - 1;
    let mut out = Vec::new();
    let mut prev = None;
    for i in 0..t {
        let row = logits.row_slice(i);
        let best = (0..k).fold(0, |b, j| if row[j] > row[b] { j } else { b });
        if Some(best) != prev && best != blank {
            out.push(best);
        }
        prev = Some(best);
    }
    out
}

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let next = (diag + usize::from(x != y)).min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// Corpus-level error rate: total edits over total reference length.
pub fn phoneme_error_rate(pairs: &[(Vec<usize>, Vec<usize>)]) -> Result<f64> {
    let refs: usize = pairs.iter().map(|(r, _)| r.len()).sum();
    ensure!(refs > 0, "error rate needs a non-empty reference");
    let edits: usize = pairs.iter().map(|(r, h)| edit_distance(r, h)).sum();
    Ok(edits as f64 / refs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut prev = None;
        for &p in path {
            if Some(p) != prev && p != blank {
                out.push(p);
            }
            prev = Some(p);
        }
        out
    }

    /// Sum over all `(C+1)^T` paths.
    fn brute_force(logits: &Tensor, labels: &[usize]) -> f64 {
        let lp = log_softmax_rows(logits);
        let (t, k) = lp.rows_cols();
        let mut total = 0.0;
        for code in 0..k.pow(t as u32) {
            let path: Vec<usize> = (0..t).map(|i| code / k.pow(i as u32) % k).collect();
            if collapse(&path, k - 1) == labels {
                total += path.iter().enumerate().map(|(i, &c)| lp.row_slice(i)[c]).sum::<f64>().exp();
            }
        }
        -total.ln()
    }

    fn label_seqs(u: usize, c: usize) -> Vec<Vec<usize>> {
        (0..c.pow(u as u32)).map(|code| (0..u).map(|i| code / c.pow(i as u32) % c).collect()).collect()
    }

    #[test]
    fn single_frame() {
        let logits = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        assert!((ctc_loss(&logits, &[0]).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_frames_three_paths() {
        let logits = Tensor::matrix(2, 2, vec![0.0; 4]).unwrap();
        let l = ctc_loss(&logits, &[0]).unwrap();
        assert!((l + 0.75f64.ln()).abs() < 1e-12);
        assert!((l - 0.2877).abs() < 1e-4);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        for c in 1..=3 {
            for t in 1..=6 {
                let logits = Tensor::matrix(t, c + 1, (0..t * (c + 1)).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
                for u in 0..=3 {
                    for labels in label_seqs(u, c) {
                        let fast = ctc_loss(&logits, &labels).unwrap();
                        let slow = brute_force(&logits, &labels);
                        if slow.is_infinite() {
                            assert!(fast.is_infinite(), "T={t} {labels:?}");
                        } else {
                            assert!((fast - slow).abs() < 1e-10, "T={t} C={c} {labels:?}: {fast} vs {slow}");
                        }
                        checked += 1;
                    }
                }
            }
        }
        assert_eq!(checked, 354);
    }

    #[test]
    fn infeasible_is_infinite() {
        let logits = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
        assert_eq!(ctc_loss(&logits, &[1, 1]).unwrap(), f64::INFINITY);
        assert_eq!(ctc_loss(&logits, &[0, 1, 0]).unwrap(), f64::INFINITY);
        assert!(ctc_loss(&logits, &[0, 1]).unwrap().is_finite());
        let mut tape = Tape::new();
        let v = tape.leaf(logits, true);
        assert!(ctc_loss_var(&mut tape, v, &[1, 1]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::matrix(5, 4, (0..20).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let err = grad_check(|t, v| ctc_loss_var(t, v, &[0, 2, 2]), &x, 1e-6).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn decoding_and_error_rate() {
        let mut logits = Tensor::zeros(&[6, 3]);
        for (t, c) in [2, 0, 0, 2, 1, 1].into_iter().enumerate() {
            logits.data_mut()[t * 3 + c] = 5.0;
        }
        assert_eq!(greedy_decode(&logits), vec![0, 1]);
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 3]), 1);
        assert_eq!(edit_distance(&[1, 2, 3], &[4, 2, 3]), 1);
        assert_eq!(phoneme_error_rate(&[(vec![1, 2, 3, 4], vec![])]).unwrap(), 1.0);
        assert_eq!(phoneme_error_rate(&[(vec![1, 2], vec![1, 2])]).unwrap(), 0.0);
        assert!(phoneme_error_rate(&[(vec![], vec![1])]).is_err());
    }
}
