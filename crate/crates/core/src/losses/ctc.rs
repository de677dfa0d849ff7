//! Connectionist temporal classification.
//!
//! Logits are `T × (V+1)` with the blank in the last column. Alignment
//! probabilities are summed with the forward-backward recursions over the
//! blank-augmented label sequence `ε l₁ ε l₂ … ε`, entirely in log space.

use super::LabelSequence;
use crate::error::{Error, Result};
use crate::nn::ops::{log_add, log_softmax_rows, log_sum_exp};
use crate::nn::Tensor;

/// Exhaustive enumeration refuses instances with more paths than this.
pub const BRUTE_FORCE_MAX_PATHS: f64 = 1e7;

#[derive(Clone, Debug)]
pub struct CtcOutput {
    /// `-ln P(labels | logits)`.
    pub loss: f64,
    /// `dloss / dlogits`, same shape as the logits.
    pub grad: Tensor,
}

/// Minimum frames that can emit `labels`: one per label plus a separating
/// blank between each pair of equal neighbours.
pub fn ctc_required_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

fn check_logits(logits: &Tensor, labels: &LabelSequence) -> Result<(usize, usize)> {
    if logits.shape().len() != 2 {
        return Err(Error::shape("ctc logits", &[0, 0], logits.shape()));
    }
    let (frames, classes) = (logits.rows(), logits.cols());
    if classes < 2 {
        return Err(Error::InvalidArgument("ctc needs at least one token plus blank".into()));
    }
    if let Some(&l) = labels.labels().iter().find(|&&l| l >= classes - 1) {
        return Err(Error::InvalidArgument(format!("label {l} out of range for {classes} outputs")));
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite("ctc logits".into()));
    }
    Ok((frames, classes))
}

/// `ε l₁ ε l₂ … ε`
fn extended(labels: &[usize], blank: usize) -> Vec<usize> {
    (0..2 * labels.len() + 1).map(|s| if s % 2 == 0 { blank } else { labels[s / 2] }).collect()
}

/// Alpha table and total log probability from per-frame log-probabilities.
fn forward(lp: &[f64], classes: usize, ext: &[usize]) -> (Vec<f64>, f64) {
    let frames = lp.len() / classes;
    let blank = classes - 1;
    let s_len = ext.len();
    let lp_at = |t: usize, k: usize| lp[t * classes + k];
    let can_skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
    let mut alpha = vec![f64::NEG_INFINITY; frames * s_len];
    alpha[0] = lp_at(0, blank);
    if s_len > 1 {
        alpha[1] = lp_at(0, ext[1]);
    }
    for t in 1..frames {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut acc = prev[s];
            if s >= 1 {
                acc = log_add(acc, prev[s - 1]);
            }
            if can_skip(s) {
                acc = log_add(acc, prev[s - 2]);
            }
            alpha[t * s_len + s] = acc + lp_at(t, ext[s]);
        }
    }
    let last = (frames - 1) * s_len;
    let mut log_p = alpha[last + s_len - 1];
    if s_len > 1 {
        log_p = log_add(log_p, alpha[last + s_len - 2]);
    }
    (alpha, log_p)
}

/// `ln P(labels)` from row-wise log-softmax output `lp` (`T × classes`,
/// blank last); `-inf` when the labels cannot be aligned.
pub fn ctc_log_prob(lp: &[f64], classes: usize, labels: &[usize]) -> f64 {
    if lp.is_empty() {
        return f64::NEG_INFINITY;
    }
    forward(lp, classes, &extended(labels, classes - 1)).1
}

pub fn ctc_loss(logits: &Tensor, labels: &LabelSequence) -> Result<CtcOutput> {
    let (frames, classes) = check_logits(logits, labels)?;
    let blank = classes - 1;
    let lab = labels.labels();
    let required = ctc_required_frames(lab);
    if frames < required {
        return Err(Error::InfeasibleAlignment {
            labels: lab.len(),
            required,
            frames,
        });
    }

    let lp = log_softmax_rows(logits.data(), classes);
    let lp_at = |t: usize, k: usize| lp[t * classes + k];
    let ext = extended(lab, blank);
    let s_len = ext.len();
    let can_skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
    let neg_inf = f64::NEG_INFINITY;
    let (alpha, log_p) = forward(&lp, classes, &ext);
    let last = (frames - 1) * s_len;
    if !log_p.is_finite() {
        return Err(Error::InfeasibleAlignment {
            labels: lab.len(),
            required,
            frames,
        });
    }

    // beta[t][s]: log probability of completing the labelling from state s
    // at frame t, excluding the emission at t itself.
    let mut beta = vec![neg_inf; frames * s_len];
    beta[last + s_len - 1] = 0.0;
    if s_len > 1 {
        beta[last + s_len - 2] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        for s in 0..s_len {
            let next = (t + 1) * s_len;
            let mut acc = beta[next + s] + lp_at(t + 1, ext[s]);
            if s + 1 < s_len {
                acc = log_add(acc, beta[next + s + 1] + lp_at(t + 1, ext[s + 1]));
            }
            if s + 2 < s_len && can_skip(s + 2) {
                acc = log_add(acc, beta[next + s + 2] + lp_at(t + 1, ext[s + 2]));
            }
            beta[t * s_len + s] = acc;
        }
    }

    let mut grad = vec![0.0; frames * classes];
    let mut occupancy = vec![neg_inf; classes];
    for t in 0..frames {
        occupancy.fill(neg_inf);
        for s in 0..s_len {
            let v = alpha[t * s_len + s] + beta[t * s_len + s];
            occupancy[ext[s]] = log_add(occupancy[ext[s]], v);
        }
        for k in 0..classes {
            grad[t * classes + k] = lp_at(t, k).exp() - (occupancy[k] - log_p).exp();
        }
    }

    Ok(CtcOutput {
        loss: -log_p,
        grad: Tensor::matrix(frames, classes, grad)?,
    })
}

fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != blank {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

/// `-ln P(labels)` by summing every frame-level path that collapses to the
/// labels. Returns `+inf` when no path does.
pub fn ctc_brute_force(logits: &Tensor, labels: &LabelSequence) -> Result<f64> {
    let (frames, classes) = check_logits(logits, labels)?;
    let paths = (classes as f64).powi(frames as i32);
    if paths > BRUTE_FORCE_MAX_PATHS {
        return Err(Error::InstanceTooLarge { paths });
    }
    let lp = log_softmax_rows(logits.data(), classes);
    let blank = classes - 1;
    let mut path = vec![0usize; frames];
    let mut terms = Vec::new();
    for mut code in 0..paths as usize {
        for slot in path.iter_mut() {
            *slot = code % classes;
            code /= classes;
        }
        if collapse(&path, blank) == labels.labels() {
            terms.push(path.iter().enumerate().map(|(t, &k)| lp[t * classes + k]).sum::<f64>());
        }
    }
    Ok(-log_sum_exp(&terms))
}
