use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::{Batch, Corpus, FrameBudgetSampler, Vocabulary};
use crate::model::{Checkpoint, EncoderState};
use crate::numerics::Array;

use super::optim::Adam;
use super::step::{train_step, TrainState};
use super::{TrainConfig, TrainError, TrainReport};

#[derive(Clone, Debug, Default)]
pub struct FitOptions {
    /// Checkpoints go here as `step-NNNNNN.ckpt`, plus `final.ckpt`.
    pub out_dir: PathBuf,
    /// Continue from this checkpoint instead of a fresh initialization.
    pub resume: Option<PathBuf>,
    /// JSONL training log; appended to when resuming.
    pub log: Option<PathBuf>,
}

pub fn save_state(path: &Path, state: &TrainState, cfg: &TrainConfig, vocab: &Vocabulary) -> Result<(), TrainError> {
    let mut blocks = Vec::new();
    for (name, value) in state.encoder.blocks() {
        blocks.push((format!("param.{name}"), value.clone()));
    }
    for (kind, moments) in [("m", &state.adam.m), ("v", &state.adam.v)] {
        for ((name, value), mom) in state.encoder.blocks().zip(moments) {
            blocks.push((
                format!("adam.{kind}.{name}"),
                Array::new(value.shape().to_vec(), mom.clone())?,
            ));
        }
    }
    blocks.push(("adam.t".into(), Array::scalar(state.adam.t as f64)));
    let ckpt = Checkpoint {
        meta: serde_json::to_string(cfg)?,
        vocabulary: vocab.as_string(),
        step: state.step,
        blocks,
    };
    ckpt.save(path)?;
    Ok(())
}

/// Restores the training state, the config it was written with and the
/// vocabulary.
pub fn load_state(path: &Path) -> Result<(TrainState, TrainConfig, Vocabulary), TrainError> {
    let ckpt = Checkpoint::load(path)?;
    let cfg: TrainConfig = serde_json::from_str(&ckpt.meta)?;
    let vocab = Vocabulary::new(&ckpt.vocabulary)?;
    let encoder = EncoderState::from_blocks(cfg.encoder.clone(), ckpt.blocks_with_prefix("param."))?;
    let mut adam = Adam::new(encoder.values());
    let m = ckpt.blocks_with_prefix("adam.m.");
    let v = ckpt.blocks_with_prefix("adam.v.");
    if m.len() != adam.m.len() || v.len() != adam.v.len() {
        return Err(TrainError::Checkpoint("optimizer moments missing or incomplete".into()));
    }
    adam.m = m.into_iter().map(|(_, a)| a.into_data()).collect();
    adam.v = v.into_iter().map(|(_, a)| a.into_data()).collect();
    adam.t = ckpt
        .blocks
        .iter()
        .find(|(n, _)| n == "adam.t")
        .and_then(|(_, a)| a.item())
        .ok_or_else(|| TrainError::Checkpoint("missing adam.t".into()))? as u64;
    Ok((
        TrainState {
            encoder,
            adam,
            step: ckpt.step,
        },
        cfg,
        vocab,
    ))
}

/// Trains to `cfg.max_steps`. Batch `k` is a pure function of the seed and
/// `k`, so a resumed run sees the same data as an uninterrupted one.
pub fn fit(corpus: &Corpus, cfg: &TrainConfig, opts: &FitOptions) -> Result<(TrainState, Vec<TrainReport>), TrainError> {
    cfg.validate()?;
    if corpus.utterances.is_empty() {
        return Err(TrainError::Config("training corpus is empty".into()));
    }
    if corpus.feature_dim != cfg.encoder.feature_dim || corpus.vocabulary.len() != cfg.encoder.vocab_size {
        return Err(TrainError::Config(format!(
            "corpus has feature dim {} and {} symbols, encoder expects {} and {}",
            corpus.feature_dim,
            corpus.vocabulary.len(),
            cfg.encoder.feature_dim,
            cfg.encoder.vocab_size
        )));
    }
    fs::create_dir_all(&opts.out_dir)?;

    let mut state = match &opts.resume {
        Some(path) => {
            let (state, saved, vocab) = load_state(path)?;
            if saved.encoder != cfg.encoder || vocab != corpus.vocabulary {
                return Err(TrainError::Config(format!(
                    "{} was trained with a different encoder or vocabulary",
                    path.display()
                )));
            }
            state
        }
        None => TrainState::new(cfg)?,
    };

    let mut log = match &opts.log {
        Some(p) => Some(
            OpenOptions::new()
                .create(true)
                .write(true)
                .append(opts.resume.is_some())
                .truncate(opts.resume.is_none())
                .open(p)?,
        ),
        None => None,
    };

    let frames = corpus.utterances.iter().map(|u| u.frames()).collect();
    let sampler = FrameBudgetSampler::new(frames, cfg.batch_max_tokens, cfg.seed)?;
    let mut reports = Vec::new();
    while state.step < cfg.max_steps {
        let indices = sampler.batch_at(state.step);
        let batch = Batch::new(indices.iter().map(|&i| corpus.utterances[i].clone()).collect());
        let report = train_step(&batch, &mut state, cfg, &corpus.vocabulary)?;
        if let Some(f) = log.as_mut() {
            serde_json::to_writer(&mut *f, &report)?;
            f.write_all(b"\n")?;
        }
        if report.step % 50 == 0 {
            log::info!(
                "step {} total {:.3} ctc {:.3} chunk {} lr {:.2e}",
                report.step,
                report.l_total,
                report.l_ctc,
                report.l_chunk.map_or("-".to_string(), |c| format!("{c:.3}")),
                report.lr
            );
        }
        reports.push(report);
        if state.step % cfg.checkpoint_every == 0 {
            save_state(&opts.out_dir.join(format!("step-{:06}.ckpt", state.step)), &state, cfg, &corpus.vocabulary)?;
        }
    }
    save_state(&opts.out_dir.join("final.ckpt"), &state, cfg, &corpus.vocabulary)?;
    Ok((state, reports))
}
