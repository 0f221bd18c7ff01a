use std::time::Instant;

use crate::chunking::chunked_logits_node;
use crate::ctc::{check_feasible, ctc_loss_node};
use crate::data::{concat_pairs, Batch, Utterance, Vocabulary};
use crate::model::{BoundParams, EncoderState, ModelError};
use crate::numerics::{Graph, NodeId, NumericsError};

use super::optim::Adam;
use super::{lr_at, TrainConfig, TrainError, TrainReport};

/// Parameters, optimizer moments and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub encoder: EncoderState,
    pub adam: Adam,
    pub step: u64,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let encoder = EncoderState::new(cfg.encoder.clone(), cfg.seed)?;
        let adam = Adam::new(encoder.values());
        Ok(Self { encoder, adam, step: 0 })
    }
}

/// Summed loss nodes of both paths over a (possibly concatenated) batch.
pub(crate) struct Losses {
    pub ctc: Option<NodeId>,
    pub chunk: Option<NodeId>,
    pub used: usize,
    pub skipped: usize,
}

fn accumulate(g: &mut Graph, acc: Option<NodeId>, x: NodeId) -> Result<NodeId, TrainError> {
    Ok(match acc {
        Some(a) => g.add(a, x)?,
        None => x,
    })
}

pub(crate) fn build_losses(
    g: &mut Graph,
    params: &BoundParams,
    encoder: &EncoderState,
    utterances: &[Utterance],
    cfg: &TrainConfig,
) -> Result<Losses, TrainError> {
    let mut out = Losses {
        ctc: None,
        chunk: None,
        used: 0,
        skipped: 0,
    };
    for u in utterances {
        let frames = encoder.config().output_frames(u.frames());
        if let Err(e) = check_feasible(frames, &u.tokens) {
            log::warn!("skipping {}: {e}", u.id);
            out.skipped += 1;
            continue;
        }
        let non_finite = || TrainError::NonFinite {
            step: 0,
            ids: vec![u.id.clone()],
        };
        if !u.features.array().is_finite() {
            return Err(non_finite());
        }
        let x = g.constant(u.features.array().clone());
        let logits = encoder.logits_node(g, params, x).map_err(|e| match e {
            ModelError::Numerics(NumericsError::NonFinite(_)) => non_finite(),
            other => other.into(),
        })?;
        if !g.value(logits).is_finite() {
            return Err(non_finite());
        }
        let l = ctc_loss_node(g, logits, &u.tokens)?;
        out.ctc = Some(accumulate(g, out.ctc, l)?);
        if cfg.ablation.uses_chunk_loss() {
            let merged = chunked_logits_node(g, params, encoder, &u.features, &cfg.chunk)?;
            let l = ctc_loss_node(g, merged, &u.tokens)?;
            out.chunk = Some(accumulate(g, out.chunk, l)?);
        }
        out.used += 1;
    }
    Ok(out)
}

/// Interpolated objective `(1 − λ)·L_CTC + λ·L_chunk`, or `L_CTC` alone
/// when the chunk path is off.
pub(crate) fn combine(g: &mut Graph, losses: &Losses, lambda: f64) -> Result<Option<NodeId>, TrainError> {
    let Some(ctc) = losses.ctc else { return Ok(None) };
    Ok(Some(match losses.chunk {
        Some(chunk) => {
            let a = g.scale(ctc, 1.0 - lambda);
            let b = g.scale(chunk, lambda);
            g.add(a, b)?
        }
        None => ctc,
    }))
}

/// One update on a raw batch: concatenate neighbours, encode the full
/// sequences and the padded chunks, combine both CTC losses, run a single
/// backward pass and apply Adam.
pub fn train_step(batch: &Batch, state: &mut TrainState, cfg: &TrainConfig, vocab: &Vocabulary) -> Result<TrainReport, TrainError> {
    if batch.concatenated {
        return Err(TrainError::Config("train_step expects a raw batch".into()));
    }
    let started = Instant::now();
    let step = state.step + 1;
    let batch = if cfg.ablation.concatenates() {
        concat_pairs(batch.clone(), vocab)?
    } else {
        batch.clone()
    };

    let mut g = Graph::new();
    let params = state.encoder.bind(&mut g, true);
    let losses = build_losses(&mut g, &params, &state.encoder, &batch.utterances, cfg).map_err(|e| match e {
        TrainError::NonFinite { .. } => TrainError::NonFinite {
            step,
            ids: batch.utterances.iter().map(|u| u.id.clone()).collect(),
        },
        other => other,
    })?;
    let lr = lr_at(step, cfg);
    let mut report = TrainReport {
        step,
        l_ctc: 0.0,
        l_chunk: None,
        l_total: 0.0,
        grad_norm: 0.0,
        lr,
        utterances: losses.used,
        skipped: losses.skipped,
        wall_ms: 0.0,
    };
    state.step = step;
    let Some(total) = combine(&mut g, &losses, cfg.lambda)? else {
        log::warn!("step {step}: every utterance was skipped, no update");
        report.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        return Ok(report);
    };
    report.l_ctc = g.value(losses.ctc.expect("present")).item().expect("scalar");
    report.l_chunk = losses.chunk.map(|c| g.value(c).item().expect("scalar"));
    report.l_total = g.value(total).item().expect("scalar");
    if !report.l_total.is_finite() {
        return Err(TrainError::NonFinite {
            step,
            ids: batch.utterances.iter().map(|u| u.id.clone()).collect(),
        });
    }

    g.backward(total)?;
    let grads: Vec<Vec<f64>> = params.ids.iter().map(|&id| g.grad_array(id).into_data()).collect();
    report.grad_norm = grads.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    if !report.grad_norm.is_finite() {
        return Err(TrainError::NonFinite {
            step,
            ids: batch.utterances.iter().map(|u| u.id.clone()).collect(),
        });
    }
    state.adam.update(state.encoder.values_mut(), &grads, lr);
    report.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}
