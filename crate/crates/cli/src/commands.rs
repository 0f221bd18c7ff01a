use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use log::info;

use chunkctc::chunking::{chunked_encode, ChunkPlan, StreamSession};
use chunkctc::ctc::beam_decode;
use chunkctc::data::{read_manifest, write_manifest, Corpus, Generator, GeneratorConfig, Vocabulary};
use chunkctc::model::EncoderState;
use chunkctc::score::score_corpus;
use chunkctc::train::{fit, load_state, FitOptions, TrainConfig};

use crate::{ChunkArgs, DecodeArgs, GenDataArgs, Mode, ScoreArgs, StreamArgs, TrainArgs};

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<GeneratorConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => GeneratorConfig::default(),
    };
    if let Some(n) = a.train_utterances {
        cfg.utterances = n;
    }
    if let Some(s) = a.noise_sigma {
        cfg.noise_sigma = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let mut gen = Generator::new(cfg)?;
    let train = gen.corpus()?;
    let offset = train.utterances.len();
    let heldout = Corpus {
        utterances: (offset..offset + a.heldout_utterances)
            .map(|i| gen.next_utterance(i))
            .collect::<Result<_, _>>()?,
        ..train.clone()
    };
    fs::create_dir_all(&a.out_dir)?;
    write_manifest(&a.out_dir.join("train.jsonl"), &train)?;
    write_manifest(&a.out_dir.join("heldout.jsonl"), &heldout)?;
    info!(
        "wrote {} train and {} held-out utterances to {}",
        train.utterances.len(),
        heldout.utterances.len(),
        a.out_dir.display()
    );
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let corpus = read_manifest(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(ab) = a.ablation {
        cfg.ablation = ab.into();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.max_steps {
        cfg.max_steps = n;
    }
    cfg.encoder.feature_dim = corpus.feature_dim;
    cfg.encoder.vocab_size = corpus.vocabulary.len();
    cfg.chunk.subsample_factor = cfg.encoder.subsample_factor;
    if a.chunk_ms.is_some() || a.left_ms.is_some() || a.right_ms.is_some() {
        let hop = corpus.hop_ms;
        let ms = |frames: usize| frames as f64 * hop;
        cfg.chunk = ChunkPlan::from_ms(
            a.chunk_ms.unwrap_or(ms(cfg.chunk.chunk_frames)),
            a.left_ms.unwrap_or(ms(cfg.chunk.left_frames)),
            a.right_ms.unwrap_or(ms(cfg.chunk.right_frames)),
            hop,
            cfg.encoder.subsample_factor,
        )?;
    }
    cfg.validate()?;
    let opts = FitOptions {
        out_dir: a.out_dir.clone(),
        resume: a.resume.clone(),
        log: Some(a.out_dir.join("train_log.jsonl")),
    };
    let (state, reports) = fit(&corpus, &cfg, &opts)?;
    if let Some(last) = reports.last() {
        info!("finished at step {} with loss {:.4}", state.step, last.l_total);
    }
    Ok(())
}

struct Loaded {
    encoder: EncoderState,
    vocab: Vocabulary,
    corpus: Corpus,
}

fn load(manifest: &Path, checkpoint: &Path) -> Result<Loaded> {
    let corpus = read_manifest(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let (state, _, vocab) = load_state(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let dim = state.encoder.config().feature_dim;
    ensure!(
        dim == corpus.feature_dim,
        "checkpoint expects {dim}-dim features, manifest has {}",
        corpus.feature_dim
    );
    ensure!(
        vocab == corpus.vocabulary,
        "checkpoint vocabulary {:?} differs from manifest vocabulary {:?}",
        vocab.as_string(),
        corpus.vocabulary.as_string()
    );
    Ok(Loaded {
        encoder: state.encoder,
        vocab,
        corpus,
    })
}

fn plan(c: &ChunkArgs, hop_ms: f64, encoder: &EncoderState) -> Result<ChunkPlan> {
    Ok(ChunkPlan::from_ms(
        c.chunk_ms,
        c.left_ms,
        c.right_ms,
        hop_ms,
        encoder.config().subsample_factor,
    )?)
}

fn write_hypotheses(path: &Path, hyps: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (id, text) in hyps {
        let _ = writeln!(out, "{id}\t{text}");
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn decode(a: &DecodeArgs) -> Result<()> {
    ensure!(a.beam >= 1, "--beam must be at least 1");
    let m = load(&a.manifest, &a.checkpoint)?;
    let plan = plan(&a.chunk, m.corpus.hop_ms, &m.encoder)?;
    let mut hyps = Vec::with_capacity(m.corpus.utterances.len());
    for u in &m.corpus.utterances {
        let text = if u.frames() == 0 {
            String::new()
        } else {
            let lattice = match a.mode {
                Mode::Full => m.encoder.encode(&u.features)?,
                Mode::Chunked => chunked_encode(&u.features, &plan, &m.encoder)?,
            };
            m.vocab.detokenize(&beam_decode(&lattice, a.beam)?.tokens)
        };
        hyps.push((u.id.clone(), text));
    }
    write_hypotheses(&a.out, &hyps)?;
    info!("decoded {} utterances to {}", hyps.len(), a.out.display());
    Ok(())
}

pub fn stream(a: &StreamArgs) -> Result<()> {
    ensure!(a.beam >= 1, "--beam must be at least 1");
    ensure!(a.push_frames >= 1, "--push-frames must be at least 1");
    let m = load(&a.manifest, &a.checkpoint)?;
    let plan = plan(&a.chunk, m.corpus.hop_ms, &m.encoder)?;
    let mut csv = String::from("utterance_id,chunk_index,core_ms,emitted_tokens,lookahead_ms\n");
    let mut hyps = Vec::with_capacity(m.corpus.utterances.len());
    for u in &m.corpus.utterances {
        let mut session = StreamSession::new(plan, &m.encoder, a.beam)?;
        let mut chunks = Vec::new();
        let mut start = 0;
        while start < u.frames() {
            let end = (start + a.push_frames).min(u.frames());
            chunks.extend(session.push(&u.features.slice(start, end)?)?);
            start = end;
        }
        chunks.extend(session.flush()?);
        for c in &chunks {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                u.id, c.chunk_index, c.core_ms, c.emitted_tokens, c.lookahead_ms
            );
            log::debug!(
                "{} chunk {}: {:?}",
                u.id,
                c.chunk_index,
                m.vocab.detokenize(&session.best().tokens)
            );
        }
        hyps.push((u.id.clone(), m.vocab.detokenize(&session.best().tokens)));
    }
    write_hypotheses(&a.out, &hyps)?;
    fs::write(&a.latency_csv, csv).with_context(|| format!("writing {}", a.latency_csv.display()))?;
    info!("streamed {} utterances", hyps.len());
    Ok(())
}

/// Reads `id<TAB>text` lines. Duplicate ids are an error.
pub fn read_hypotheses(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, hyp) = line.split_once('\t').unwrap_or((line, ""));
        if out.insert(id.to_string(), hyp.to_string()).is_some() {
            bail!("{}:{}: duplicate id {id:?}", path.display(), n + 1);
        }
    }
    Ok(out)
}

pub fn score(a: &ScoreArgs) -> Result<()> {
    let corpus = read_manifest(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let mut refs = BTreeMap::new();
    for u in &corpus.utterances {
        if refs.insert(u.id.clone(), u.transcript.clone()).is_some() {
            bail!("duplicate id {:?} in {}", u.id, a.manifest.display());
        }
    }
    let hyps = read_hypotheses(&a.hyp)?;
    let mut unknown: Vec<&String> = hyps.keys().filter(|id| !refs.contains_key(*id)).collect();
    if !unknown.is_empty() {
        unknown.sort();
        bail!("{} hypothesis ids are not in the manifest, first {:?}", unknown.len(), unknown[0]);
    }
    let report = score_corpus(&refs, &hyps);
    let table = report.table();
    print!("{table}");
    if report.missing > 0 {
        println!("# {} of {} references had no hypothesis", report.missing, report.utterances);
    }
    if let Some(p) = &a.table {
        fs::write(p, &table).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.jsonl {
        fs::write(p, report.to_jsonl()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}
