use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chunkctc::data::{read_manifest, write_manifest, Corpus, FeatureSequence, Utterance};
use chunkctc::train::load_state;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_chunkctc"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn chunkctc");
    assert!(
        out.status.success(),
        "chunkctc {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fails(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("spawn chunkctc");
    assert!(!out.status.success(), "chunkctc {args:?} should fail");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &str = r#"
max_steps = 2
warmup_steps = 1
batch_max_tokens = 600
checkpoint_every = 1
[encoder]
layers = 1
hidden_dim = 16
heads = 2
positional_kernel = 3
positional_groups = 2
ffn_multiplier = 2
"#;

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        run(&[
            "gen-data",
            "--out-dir",
            s(&root.join("data")),
            "--train-utterances",
            "24",
            "--heldout-utterances",
            "6",
            "--seed",
            "3",
        ]);
        fs::write(root.join("tiny.toml"), TINY).unwrap();
        Self { _dir: dir, root }
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn train(&self, out: &str, extra: &[&str]) -> PathBuf {
        let mut args = vec![
            "train",
            "--manifest",
            s(&self.root.join("data/train.jsonl")).to_owned().leak(),
            "--config",
            s(&self.root.join("tiny.toml")).to_owned().leak(),
            "--out-dir",
            s(&self.root.join(out)).to_owned().leak(),
        ];
        args.extend_from_slice(extra);
        run(&args);
        self.root.join(out).join("final.ckpt")
    }
}

fn hyp_lines(path: &Path) -> Vec<(String, String)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let (a, b) = l.split_once('\t').unwrap();
            (a.to_string(), b.to_string())
        })
        .collect()
}

#[test]
fn pipeline_stream_matches_chunked_decode() {
    let f = Fixture::new();
    let ckpt = f.train("run", &[]);
    let held = f.p("data/heldout.jsonl");
    let chunk = ["--chunk-ms", "400", "--left-ms", "400", "--right-ms", "200"];
    let mut args = vec!["decode", "--manifest", s(&held), "--checkpoint", s(&ckpt), "--out"];
    let hyp = f.p("chunked.tsv");
    args.push(s(&hyp));
    args.extend_from_slice(&chunk);
    run(&args);

    let mut args = vec!["stream", "--manifest", s(&held), "--checkpoint", s(&ckpt)];
    let streamed = f.p("stream.tsv");
    let csv = f.p("latency.csv");
    args.extend_from_slice(&["--out", s(&streamed), "--latency-csv", s(&csv), "--push-frames", "7"]);
    args.extend_from_slice(&chunk);
    run(&args);

    assert_eq!(fs::read(&hyp).unwrap(), fs::read(&streamed).unwrap());
    let lines = hyp_lines(&hyp);
    let corpus = read_manifest(&held).unwrap();
    let ids: Vec<_> = corpus.utterances.iter().map(|u| u.id.clone()).collect();
    assert_eq!(lines.iter().map(|l| l.0.clone()).collect::<Vec<_>>(), ids);

    let text = fs::read_to_string(&csv).unwrap();
    let mut rows = text.lines();
    assert_eq!(rows.next().unwrap(), "utterance_id,chunk_index,core_ms,emitted_tokens,lookahead_ms");
    let rows: Vec<Vec<&str>> = rows.map(|r| r.split(',').collect()).collect();
    // (40 + 20) frames at 10 ms
    assert!(rows.iter().all(|r| r[4] == "600"));
    for u in &corpus.utterances {
        let n = rows.iter().filter(|r| r[0] == u.id).count();
        assert_eq!(n, u.frames().div_ceil(40));
    }
}

#[test]
fn default_flags_use_one_second_chunks_and_two_second_lookahead() {
    let f = Fixture::new();
    let ckpt = f.train("run", &[]);
    let csv = f.p("latency.csv");
    run(&[
        "stream",
        "--manifest",
        s(&f.p("data/train.jsonl")),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&f.p("s.tsv")),
        "--latency-csv",
        s(&csv),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|r| r.split(',').map(String::from).collect()).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[4] == "2000"));
    // every chunk but an utterance's last has a full 100-frame core
    for w in rows.windows(2) {
        if w[0][0] == w[1][0] {
            assert_eq!(w[0][2], "1000");
        }
    }
}

#[test]
fn context_free_checkpoint_decodes_identically_in_both_modes() {
    let f = Fixture::new();
    fs::write(f.p("tiny.toml"), format!("{TINY}context_free_mode = true\n")).unwrap();
    let ckpt = f.train("cf", &[]);
    let held = f.p("data/heldout.jsonl");
    for (mode, out) in [("full", "full.tsv"), ("chunked", "chunked.tsv")] {
        run(&[
            "decode",
            "--manifest",
            s(&held),
            "--checkpoint",
            s(&ckpt),
            "--mode",
            mode,
            "--chunk-ms",
            "160",
            "--left-ms",
            "80",
            "--right-ms",
            "40",
            "--out",
            s(&f.p(out)),
        ]);
    }
    assert_eq!(fs::read(f.p("full.tsv")).unwrap(), fs::read(f.p("chunked.tsv")).unwrap());
}

#[test]
fn runs_are_byte_identical() {
    let f = Fixture::new();
    let a = f.train("a", &["--seed", "9"]);
    let b = f.train("b", &["--seed", "9"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = f.train("c", &["--seed", "10"]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());

    let held = f.p("data/heldout.jsonl");
    for (ck, tag) in [(&a, "a"), (&b, "b")] {
        let hyp = f.p(&format!("{tag}.tsv"));
        run(&["decode", "--manifest", s(&held), "--checkpoint", s(ck), "--beam", "3", "--out", s(&hyp)]);
        run(&[
            "score",
            "--manifest",
            s(&held),
            "--hyp",
            s(&hyp),
            "--jsonl",
            s(&f.p(&format!("{tag}.jsonl"))),
            "--table",
            s(&f.p(&format!("{tag}.txt"))),
        ]);
    }
    for ext in ["tsv", "jsonl", "txt"] {
        assert_eq!(
            fs::read(f.p(&format!("a.{ext}"))).unwrap(),
            fs::read(f.p(&format!("b.{ext}"))).unwrap()
        );
    }
}

#[test]
fn flags_override_config_file() {
    let f = Fixture::new();
    fs::write(f.p("tiny.toml"), format!("lambda = 0.2\nablation = \"no_concat\"\n{TINY}")).unwrap();
    let ckpt = f.train("run", &["--lambda", "0.7", "--chunk-ms", "200", "--max-steps", "1"]);
    let (state, cfg, _) = load_state(&ckpt).unwrap();
    assert_eq!(cfg.lambda, 0.7);
    assert_eq!(cfg.ablation.to_string(), "no-concat");
    assert_eq!(cfg.chunk.chunk_frames, 20);
    assert_eq!(cfg.chunk.left_frames, 200);
    assert_eq!(state.step, 1);
    let ckpt = f.train("run2", &["--ablation", "no-chunk-loss"]);
    assert_eq!(load_state(&ckpt).unwrap().1.ablation.to_string(), "no-chunk-loss");
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let f = Fixture::new();
    let full = f.train("full", &["--max-steps", "3"]);
    let part = f.train("part", &["--max-steps", "1"]);
    let resumed = f.train("resumed", &["--max-steps", "3", "--resume", s(&part).to_owned().leak()]);
    assert_eq!(fs::read(full).unwrap(), fs::read(resumed).unwrap());
}

fn write_hyp(path: &Path, lines: &[(&str, &str)]) {
    let text: String = lines.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
    fs::write(path, text).unwrap();
}

fn score_records(f: &Fixture, manifest: &Path, hyp: &Path) -> (String, Vec<serde_json::Value>) {
    let jsonl = f.p("score.jsonl");
    let out = run(&["score", "--manifest", s(manifest), "--hyp", s(hyp), "--jsonl", s(&jsonl)]);
    let records = fs::read_to_string(&jsonl)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    (String::from_utf8(out.stdout).unwrap(), records)
}

#[test]
fn perfect_hypotheses_score_zero_wer_and_full_f1() {
    let f = Fixture::new();
    let held = f.p("data/heldout.jsonl");
    let corpus = read_manifest(&held).unwrap();
    let lines: Vec<(&str, &str)> = corpus.utterances.iter().map(|u| (u.id.as_str(), u.transcript.as_str())).collect();
    let hyp = f.p("perfect.tsv");
    write_hyp(&hyp, &lines);
    let (table, recs) = score_records(&f, &held, &hyp);
    assert_eq!(recs[3]["wer"], 0.0);
    assert_eq!(recs[3]["missing"], 0);
    let line = table.lines().nth(1).unwrap();
    let header: Vec<&str> = (0..line.len() / 8).map(|i| line[8 * i..8 * i + 8].trim()).collect();
    assert_eq!(header[0], "WER");
    assert_eq!(&header[1..5], &["P ,", "P .", "P ?", "P avg."]);
    assert_eq!(header.len(), 13);
    let values: Vec<&str> = table.lines().nth(2).unwrap().split_whitespace().collect();
    assert_eq!(values[0], "0.0");
    // no generated held-out text is guaranteed a comma, so only '.' and '?' must be perfect
    for r in &recs[1..3] {
        assert_eq!(r["f1"], 100.0, "{r}");
    }
}

fn small_manifest(f: &Fixture, refs: &[(&str, &str)]) -> PathBuf {
    let base = read_manifest(&f.p("data/heldout.jsonl")).unwrap();
    let feats = base.utterances[0].features.clone();
    let utterances = refs
        .iter()
        .map(|(id, t)| Utterance::new(id.to_string(), feats.clone(), t.to_string(), &base.vocabulary).unwrap())
        .collect();
    let corpus = Corpus { utterances, ..base };
    let path = f.p("refs.jsonl");
    write_manifest(&path, &corpus).unwrap();
    path
}

#[test]
fn score_fixture_numbers() {
    let f = Fixture::new();
    let refs = small_manifest(&f, &[("u1", "ab, cd ef."), ("u2", "ab cd?")]);
    let hyp = f.p("h.tsv");
    write_hyp(&hyp, &[("u1", "ab, cd, ef.")]);
    let (_, recs) = score_records(&f, &refs, &hyp);
    assert_eq!(recs[0]["mark"], ",");
    assert_eq!(recs[0]["precision"], 50.0);
    assert_eq!(recs[0]["recall"], 100.0);
    assert_eq!(recs[0]["f1"], 66.7);
    assert_eq!(recs[2]["fn"], 1);
    assert_eq!(recs[3]["wer"], 40.0);
    assert_eq!(recs[3]["missing"], 1);
}

#[test]
fn score_rejects_duplicate_and_unknown_ids() {
    let f = Fixture::new();
    let refs = small_manifest(&f, &[("u1", "ab cd.")]);
    let hyp = f.p("dup.tsv");
    write_hyp(&hyp, &[("u1", "ab"), ("u1", "cd")]);
    assert!(fails(&["score", "--manifest", s(&refs), "--hyp", s(&hyp)]).contains("duplicate"));
    write_hyp(&hyp, &[("u9", "ab")]);
    assert!(fails(&["score", "--manifest", s(&refs), "--hyp", s(&hyp)]).contains("not in the manifest"));
}

#[test]
fn empty_utterance_gives_empty_transcript_and_no_rows() {
    let f = Fixture::new();
    let ckpt = f.train("run", &[]);
    let base = read_manifest(&f.p("data/heldout.jsonl")).unwrap();
    let empty = FeatureSequence::new(0, base.feature_dim, Vec::new(), base.hop_ms).unwrap();
    let corpus = Corpus {
        utterances: vec![Utterance::new("silent".into(), empty, String::new(), &base.vocabulary).unwrap()],
        ..base
    };
    let manifest = f.p("empty.jsonl");
    write_manifest(&manifest, &corpus).unwrap();
    let csv = f.p("lat.csv");
    let out = f.p("s.tsv");
    run(&["stream", "--manifest", s(&manifest), "--checkpoint", s(&ckpt), "--out", s(&out), "--latency-csv", s(&csv)]);
    assert_eq!(fs::read_to_string(&out).unwrap(), "silent\t\n");
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1);
    let dec = f.p("d.tsv");
    run(&["decode", "--manifest", s(&manifest), "--checkpoint", s(&ckpt), "--out", s(&dec)]);
    assert_eq!(fs::read_to_string(&dec).unwrap(), "silent\t\n");
}

#[test]
fn bad_inputs_exit_nonzero() {
    let f = Fixture::new();
    let ckpt = f.train("run", &[]);
    let held = f.p("data/heldout.jsonl");
    let out = f.p("x.tsv");
    fails(&["decode", "--manifest", s(&f.p("missing.jsonl")), "--checkpoint", s(&ckpt), "--out", s(&out)]);
    fails(&["decode", "--manifest", s(&held), "--checkpoint", s(&f.p("missing.ckpt")), "--out", s(&out)]);
    fails(&["decode", "--manifest", s(&held), "--checkpoint", s(&ckpt), "--out", s(&out), "--bogus"]);
    fails(&["decode", "--manifest", s(&held), "--checkpoint", s(&ckpt), "--out", s(&out), "--beam", "0"]);
    fails(&["train", "--manifest", s(&held), "--out-dir", s(&out), "--ablation", "none"]);

    // a manifest whose feature dimension differs from the checkpoint's
    fs::write(f.p("wide.toml"), "feature_dim = 6\n").unwrap();
    run(&["gen-data", "--out-dir", s(&f.p("wide")), "--config", s(&f.p("wide.toml")), "--train-utterances", "2", "--heldout-utterances", "1"]);
    let err = fails(&["decode", "--manifest", s(&f.p("wide/heldout.jsonl")), "--checkpoint", s(&ckpt), "--out", s(&out)]);
    assert!(err.contains("features"), "{err}");
}
