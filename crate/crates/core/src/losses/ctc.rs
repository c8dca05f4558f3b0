//! Connectionist temporal classification loss by log-space forward-backward.

use super::LossValue;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::phones::PhoneSequence;

#[inline]
fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Row-wise log-softmax.
pub fn log_softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for t in 0..out.rows() {
        let row = out.row_mut(t);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

/// `-log p(labels | logits)` and its gradient with respect to the logits.
///
/// The blank is the last class. The gradient is `softmax - γ`, where `γ` is
/// the per-frame label posterior from the forward-backward recursions. An
/// empty label sequence is accepted and scores the all-blank path.
pub fn ctc_loss(logits: &Matrix, labels: &PhoneSequence) -> Result<LossValue> {
    let (frames, classes) = (logits.rows(), logits.cols());
    labels.validate(classes)?;
    if !logits.is_finite() {
        return Err(Error::Numeric("non-finite CTC logits".into()));
    }
    let required = labels.min_frames().max(1);
    if frames < required {
        return Err(Error::InfeasibleAlignment { frames, required });
    }
    let blank = classes - 1;
    let lp = log_softmax(logits);

    // blank-interleaved label sequence
    let mut ext = Vec::with_capacity(2 * labels.len() + 1);
    ext.push(blank);
    for &l in labels.as_slice() {
        ext.push(l);
        ext.push(blank);
    }
    let states = ext.len();
    let can_skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];

    let neg_inf = f64::NEG_INFINITY;
    let mut alpha = Matrix::filled(frames, states, neg_inf);
    alpha[(0, 0)] = lp[(0, blank)];
    if states > 1 {
        alpha[(0, 1)] = lp[(0, ext[1])];
    }
    for t in 1..frames {
        for s in 0..states {
            let mut a = alpha[(t - 1, s)];
            if s >= 1 {
                a = log_add(a, alpha[(t - 1, s - 1)]);
            }
            if can_skip(s) {
                a = log_add(a, alpha[(t - 1, s - 2)]);
            }
            alpha[(t, s)] = a + lp[(t, ext[s])];
        }
    }
    let last = frames - 1;
    let mut log_p = alpha[(last, states - 1)];
    if states > 1 {
        log_p = log_add(log_p, alpha[(last, states - 2)]);
    }
    if !log_p.is_finite() {
        return Err(Error::Numeric("CTC path probability underflowed".into()));
    }

    // beta excludes the emission at its own frame
    let mut beta = Matrix::filled(frames, states, neg_inf);
    beta[(last, states - 1)] = 0.0;
    if states > 1 {
        beta[(last, states - 2)] = 0.0;
    }
    for t in (0..last).rev() {
        for s in 0..states {
            let mut b = beta[(t + 1, s)] + lp[(t + 1, ext[s])];
            if s + 1 < states {
                b = log_add(b, beta[(t + 1, s + 1)] + lp[(t + 1, ext[s + 1])]);
            }
            if s + 2 < states && can_skip(s + 2) {
                b = log_add(b, beta[(t + 1, s + 2)] + lp[(t + 1, ext[s + 2])]);
            }
            beta[(t, s)] = b;
        }
    }

    let mut grad = lp.map(f64::exp);
    for t in 0..frames {
        for s in 0..states {
            let occ = alpha[(t, s)] + beta[(t, s)] - log_p;
            if occ > neg_inf {
                grad[(t, ext[s])] -= occ.exp();
            }
        }
    }
    Ok(LossValue { value: -log_p, grad })
}
