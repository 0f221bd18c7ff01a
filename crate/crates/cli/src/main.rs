//! `chunkctc`: corpus generation, training, decoding, streaming simulation
//! and scoring for chunked CTC recognition with punctuation.

mod commands;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use chunkctc::train::Ablation;

#[derive(Parser, Debug)]
#[command(name = "chunkctc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate train and held-out manifests from one seeded generator.
    GenData(GenDataArgs),
    /// Train an encoder with the interpolated full/chunk CTC objective.
    Train(TrainArgs),
    /// Decode a manifest into a hypothesis file (`id<TAB>text` per line).
    Decode(DecodeArgs),
    /// Replay features chunk by chunk and report per-chunk latency.
    Stream(StreamArgs),
    /// Score a hypothesis file against a reference manifest.
    Score(ScoreArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Output directory for train.jsonl, heldout.jsonl and feature files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Generator settings (TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train_utterances: Option<usize>,
    #[arg(long, default_value_t = 200)]
    heldout_utterances: usize,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Chunk geometry in milliseconds.
#[derive(Args, Debug, Clone, Copy)]
struct ChunkArgs {
    #[arg(long, default_value_t = 1000.0)]
    chunk_ms: f64,
    #[arg(long, default_value_t = 2000.0)]
    left_ms: f64,
    #[arg(long, default_value_t = 1000.0)]
    right_ms: f64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Training settings (TOML, every TrainConfig field); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for step-NNNNNN.ckpt, final.ckpt and train_log.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Chunk-loss weight; the config default is 0.5.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    ablation: Option<AblationArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    chunk_ms: Option<f64>,
    #[arg(long)]
    left_ms: Option<f64>,
    #[arg(long)]
    right_ms: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AblationArg {
    Full,
    NoChunkLoss,
    NoConcat,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Full => Ablation::Full,
            AblationArg::NoChunkLoss => Ablation::NoChunkLoss,
            AblationArg::NoConcat => Ablation::NoConcat,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    /// Encode each utterance in one pass.
    Full,
    /// Encode chunks with left/right context and merge their emissions.
    Chunked,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Chunked)]
    mode: Mode,
    #[arg(long, default_value_t = 5)]
    beam: usize,
    #[command(flatten)]
    chunk: ChunkArgs,
    /// Hypothesis file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct StreamArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 5)]
    beam: usize,
    #[command(flatten)]
    chunk: ChunkArgs,
    /// Final transcripts, in the same format as `decode --out`.
    #[arg(long)]
    out: PathBuf,
    /// Per-chunk CSV: utterance_id,chunk_index,core_ms,emitted_tokens,lookahead_ms.
    #[arg(long)]
    latency_csv: PathBuf,
    /// Frames handed to the session per push.
    #[arg(long, default_value_t = 10)]
    push_frames: usize,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Reference manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Hypothesis file (`id<TAB>text` per line).
    #[arg(long)]
    hyp: PathBuf,
    /// Write the fixed-width table here as well as to stdout.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Write per-mark and summary JSON records here.
    #[arg(long)]
    jsonl: Option<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Decode(a) => commands::decode(&a),
        Command::Stream(a) => commands::stream(&a),
        Command::Score(a) => commands::score(&a),
    }
}
