use crate::data::TokenSequence;
use crate::numerics::{log_add, log_softmax_rows, Graph, NodeId};

use super::lattice::{EmissionLattice, BLANK};
use super::CtcError;

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Loss and its gradient w.r.t. the pre-softmax scores.
#[derive(Clone, Debug)]
pub struct CtcOutput {
    /// `−log Σ_{π ∈ β⁻¹(y)} Π_t p_t(π_t)`
    pub loss: f64,
    /// `softmax(logits) − γ`, row-major `[frames × classes]`.
    pub grad: Vec<f64>,
}

/// Checks the standard feasibility condition `T′ ≥ L + repeats`.
pub fn check_feasible(frames: usize, target: &TokenSequence) -> Result<(), CtcError> {
    let required = target.len() + target.repeats();
    if frames == 0 {
        return Err(CtcError::EmptyLattice);
    }
    if frames < required {
        return Err(CtcError::Infeasible { frames, required });
    }
    Ok(())
}

fn extended_labels(target: &TokenSequence, vocab_size: usize) -> Result<Vec<usize>, CtcError> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK);
    for &id in target.ids() {
        if id >= vocab_size {
            return Err(CtcError::Shape(format!("label {id} outside vocabulary of {vocab_size}")));
        }
        ext.push(id + 1);
        ext.push(BLANK);
    }
    Ok(ext)
}

/// Log-space forward variables `α[t][s]`.
fn forward(lp: &[f64], frames: usize, classes: usize, ext: &[usize]) -> Vec<f64> {
    let s_len = ext.len();
    let mut alpha = vec![NEG_INF; frames * s_len];
    alpha[0] = lp[ext[0]];
    if s_len > 1 {
        alpha[1] = lp[ext[1]];
    }
    for t in 1..frames {
        let row = &lp[t * classes..(t + 1) * classes];
        let (prev, cur) = alpha.split_at_mut(t * s_len);
        let prev = &prev[(t - 1) * s_len..];
        let cur = &mut cur[..s_len];
        for s in 0..s_len {
            let mut a = prev[s];
            if s >= 1 {
                a = log_add(a, prev[s - 1]);
            }
            if s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2] {
                a = log_add(a, prev[s - 2]);
            }
            cur[s] = if a == NEG_INF { NEG_INF } else { a + row[ext[s]] };
        }
    }
    alpha
}

/// Log-space backward variables `β[t][s]`, including the emission at `t`.
fn backward(lp: &[f64], frames: usize, classes: usize, ext: &[usize]) -> Vec<f64> {
    let s_len = ext.len();
    let mut beta = vec![NEG_INF; frames * s_len];
    let last = (frames - 1) * classes;
    beta[(frames - 1) * s_len + s_len - 1] = lp[last + ext[s_len - 1]];
    if s_len > 1 {
        beta[(frames - 1) * s_len + s_len - 2] = lp[last + ext[s_len - 2]];
    }
    for t in (0..frames - 1).rev() {
        let row = &lp[t * classes..(t + 1) * classes];
        let (cur, next) = beta.split_at_mut((t + 1) * s_len);
        let cur = &mut cur[t * s_len..];
        let next = &next[..s_len];
        for s in 0..s_len {
            let mut b = next[s];
            if s + 1 < s_len {
                b = log_add(b, next[s + 1]);
            }
            if s + 2 < s_len && ext[s] != BLANK && ext[s] != ext[s + 2] {
                b = log_add(b, next[s + 2]);
            }
            cur[s] = if b == NEG_INF { NEG_INF } else { b + row[ext[s]] };
        }
    }
    beta
}

/// Forward-backward over normalized log-probabilities.
pub(crate) fn ctc_on_log_probs(
    lp: &[f64],
    frames: usize,
    vocab_size: usize,
    target: &TokenSequence,
) -> Result<CtcOutput, CtcError> {
    check_feasible(frames, target)?;
    let classes = vocab_size + 1;
    let ext = extended_labels(target, vocab_size)?;
    let s_len = ext.len();
    let alpha = forward(lp, frames, classes, &ext);
    let beta = backward(lp, frames, classes, &ext);

    let tail = (frames - 1) * s_len;
    let mut log_p = alpha[tail + s_len - 1];
    if s_len > 1 {
        log_p = log_add(log_p, alpha[tail + s_len - 2]);
    }
    if !log_p.is_finite() {
        return Err(CtcError::ZeroProbability);
    }

    let mut grad: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
    let mut occ = vec![NEG_INF; classes];
    for t in 0..frames {
        occ.iter_mut().for_each(|o| *o = NEG_INF);
        let row = &lp[t * classes..(t + 1) * classes];
        for s in 0..s_len {
            let a = alpha[t * s_len + s];
            let b = beta[t * s_len + s];
            if a == NEG_INF || b == NEG_INF {
                continue;
            }
            let k = ext[s];
            occ[k] = log_add(occ[k], a + b - row[k]);
        }
        for k in 0..classes {
            if occ[k] != NEG_INF {
                grad[t * classes + k] -= (occ[k] - log_p).exp();
            }
        }
    }
    Ok(CtcOutput { loss: -log_p, grad })
}

/// CTC negative log-likelihood of `target` under `lattice`, with the
/// gradient w.r.t. the logits that produced the lattice.
pub fn ctc_loss(lattice: &EmissionLattice, target: &TokenSequence) -> Result<CtcOutput, CtcError> {
    ctc_on_log_probs(lattice.log_probs(), lattice.frames(), lattice.vocab_size(), target)
}

/// Label-occupancy posteriors `γ[t][k]` (rows sum to 1).
pub fn occupancy(lattice: &EmissionLattice, target: &TokenSequence) -> Result<Vec<f64>, CtcError> {
    let out = ctc_loss(lattice, target)?;
    Ok(out
        .grad
        .iter()
        .zip(lattice.log_probs())
        .map(|(g, lp)| lp.exp() - g)
        .collect())
}

/// Fused log-softmax + CTC on a `[frames × classes]` logits node.
pub fn ctc_loss_node(g: &mut Graph, logits: NodeId, target: &TokenSequence) -> Result<NodeId, CtcError> {
    let value = g.value(logits);
    let (frames, classes) = (value.rows(), value.cols());
    if value.shape().len() != 2 || classes < 2 {
        return Err(CtcError::Shape(format!("logits of shape {:?}", value.shape())));
    }
    if !value.is_finite() {
        return Err(CtcError::Shape("non-finite logits".into()));
    }
    let lp = log_softmax_rows(value.data(), classes);
    let out = ctc_on_log_probs(&lp, frames, classes - 1, target)?;
    Ok(g.scalar_with_gradient(logits, out.loss, out.grad)?)
}
