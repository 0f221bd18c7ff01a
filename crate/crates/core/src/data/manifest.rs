//! JSONL manifests. The first line is a header, every following line one
//! utterance. Feature paths are relative to the manifest's directory.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::features::FeatureSequence;
use super::vocab::Vocabulary;
use super::{Corpus, DataError, Utterance};

pub const MANIFEST_FORMAT: &str = "chunkctc-manifest";
const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format: String,
    pub version: u32,
    pub vocabulary: String,
    pub feature_dim: usize,
    pub hop_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub features: String,
    pub frames: usize,
    pub transcript: String,
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Writes `corpus` as `path` plus one feature file per utterance in a
/// directory next to it named after the manifest stem.
pub fn write_manifest(path: &Path, corpus: &Corpus) -> Result<(), DataError> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| DataError::Format(format!("bad manifest path {}", path.display())))?;
    let feat_dir_name = format!("{stem}_features");
    let base = base_dir(path);
    fs::create_dir_all(base.join(&feat_dir_name))?;

    let mut w = BufWriter::new(fs::File::create(path)?);
    let header = ManifestHeader {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        vocabulary: corpus.vocabulary.as_string(),
        feature_dim: corpus.feature_dim,
        hop_ms: corpus.hop_ms,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for u in &corpus.utterances {
        let rel = format!("{feat_dir_name}/{}.feat", u.id);
        u.features.save(&base.join(&rel))?;
        let rec = ManifestRecord {
            id: u.id.clone(),
            features: rel,
            frames: u.frames(),
            transcript: u.transcript.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Corpus, DataError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines().enumerate().filter(|(_, l)| match l {
        Ok(l) => !l.trim().is_empty(),
        Err(_) => true,
    });
    let (_, first) = lines
        .next()
        .ok_or_else(|| DataError::Format(format!("{} is empty", path.display())))?;
    let header: ManifestHeader = serde_json::from_str(&first?)?;
    if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
        return Err(DataError::Format(format!(
            "unsupported manifest {} v{}",
            header.format, header.version
        )));
    }
    let vocabulary = Vocabulary::new(&header.vocabulary)?;
    let base = base_dir(path);
    let mut utterances = Vec::new();
    for (lineno, line) in lines {
        let rec: ManifestRecord = serde_json::from_str(&line?)?;
        let features = FeatureSequence::load(&base.join(&rec.features))?;
        if features.frames() != rec.frames || features.dim() != header.feature_dim {
            return Err(DataError::Format(format!(
                "line {}: {} has {}×{} features, manifest says {}×{}",
                lineno + 1,
                rec.id,
                features.frames(),
                features.dim(),
                rec.frames,
                header.feature_dim
            )));
        }
        utterances.push(Utterance::new(rec.id, features, rec.transcript, &vocabulary)?);
    }
    Ok(Corpus {
        vocabulary,
        feature_dim: header.feature_dim,
        hop_ms: header.hop_ms,
        utterances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Generator, GeneratorConfig};

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = Generator::new(GeneratorConfig {
            utterances: 5,
            ..Default::default()
        })
        .unwrap()
        .corpus()
        .unwrap();
        let path = dir.path().join("train.jsonl");
        write_manifest(&path, &corpus).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back, corpus);
    }

    #[test]
    fn rejects_foreign_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        fs::write(&path, "{\"format\":\"other\",\"version\":1,\"vocabulary\":\"ab ',.?\",\"feature_dim\":2,\"hop_ms\":10}\n").unwrap();
        assert!(matches!(read_manifest(&path), Err(DataError::Format(_))));
    }
}
