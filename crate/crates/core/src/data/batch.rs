use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::features::FeatureSequence;
use super::vocab::{TokenSequence, Vocabulary};
use super::{DataError, Utterance};

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub utterances: Vec<Utterance>,
    pub concatenated: bool,
}

impl Batch {
    pub fn new(utterances: Vec<Utterance>) -> Self {
        Self {
            utterances,
            concatenated: false,
        }
    }

    pub fn ids(&self) -> Vec<&str> {
        self.utterances.iter().map(|u| u.id.as_str()).collect()
    }

    pub fn frames(&self) -> usize {
        self.utterances.iter().map(Utterance::frames).sum()
    }
}

fn merge(a: &Utterance, b: &Utterance, joiner: usize) -> Result<Utterance, DataError> {
    let features = FeatureSequence::concat(&[&a.features, &b.features])?;
    let mut ids = a.tokens.ids().to_vec();
    ids.push(joiner);
    ids.extend_from_slice(b.tokens.ids());
    Ok(Utterance {
        id: format!("{}+{}", a.id, b.id),
        features,
        transcript: format!("{} {}", a.transcript, b.transcript),
        tokens: TokenSequence::new(ids),
    })
}

/// Merges neighbours `(1,2), (3,4), …` in batch order, joining transcripts
/// with one space token. An odd last element is kept as is.
pub fn concat_pairs(batch: Batch, vocab: &Vocabulary) -> Result<Batch, DataError> {
    if batch.concatenated {
        return Err(DataError::Batch("batch is already concatenated".into()));
    }
    if batch.utterances.is_empty() {
        return Err(DataError::Batch("empty batch".into()));
    }
    let joiner = vocab.space();
    let utterances = batch
        .utterances
        .chunks(2)
        .map(|pair| match pair {
            [a, b] => merge(a, b, joiner),
            [a] => Ok(a.clone()),
            _ => unreachable!("chunks(2)"),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Batch {
        utterances,
        concatenated: true,
    })
}

/// Shuffles utterances per epoch and packs them into batches whose total
/// frame count stays within a budget. An utterance longer than the budget
/// gets a batch of its own. The order is a pure function of `(seed, epoch)`.
#[derive(Clone, Debug)]
pub struct FrameBudgetSampler {
    frames: Vec<usize>,
    max_frames: usize,
    seed: u64,
}

impl FrameBudgetSampler {
    pub fn new(frames: Vec<usize>, max_frames: usize, seed: u64) -> Result<Self, DataError> {
        if frames.is_empty() || max_frames == 0 {
            return Err(DataError::Batch("need utterances and a positive frame budget".into()));
        }
        Ok(Self {
            frames,
            max_frames,
            seed,
        })
    }

    /// Batches of utterance indices for `epoch`.
    pub fn epoch(&self, epoch: u64) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.frames.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let mut batches = Vec::new();
        let mut current = Vec::new();
        let mut used = 0;
        for i in order {
            let f = self.frames[i];
            if !current.is_empty() && used + f > self.max_frames {
                batches.push(std::mem::take(&mut current));
                used = 0;
            }
            current.push(i);
            used += f;
        }
        if !current.is_empty() {
            batches.push(current);
        }
        batches
    }

    /// The `index`-th batch of an endless stream of epochs.
    pub fn batch_at(&self, index: u64) -> Vec<usize> {
        let mut remaining = index;
        let mut epoch = 0;
        loop {
            let batches = self.epoch(epoch);
            let n = batches.len() as u64;
            if remaining < n {
                return batches[remaining as usize].clone();
            }
            remaining -= n;
            epoch += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn utt(id: &str, frames: usize, text: &str, v: &Vocabulary) -> Utterance {
        let f = FeatureSequence::new(frames, 2, vec![0.5; frames * 2], 10.0).unwrap();
        Utterance::new(id.into(), f, text.into(), v).unwrap()
    }

    #[test]
    fn pair_lengths() {
        let v = Vocabulary::english();
        let b = Batch::new(vec![utt("a", 50, "hi.", &v), utt("b", 70, "go now?", &v)]);
        let c = concat_pairs(b, &v).unwrap();
        assert_eq!(c.utterances.len(), 1);
        let m = &c.utterances[0];
        assert_eq!(m.frames(), 120);
        assert_eq!(m.tokens.len(), 3 + 1 + 7);
        assert_eq!(m.transcript, "hi. go now?");
        assert_eq!(v.tokenize(&m.transcript).unwrap(), m.tokens);
    }

    #[test]
    fn odd_batch_and_errors() {
        let v = Vocabulary::english();
        let b = Batch::new((0..5).map(|i| utt(&format!("u{i}"), 4, "a.", &v)).collect());
        let c = concat_pairs(b, &v).unwrap();
        assert_eq!(c.utterances.len(), 3);
        assert_eq!(c.utterances[2].id, "u4");
        assert!(concat_pairs(c, &v).is_err());
        assert!(concat_pairs(Batch::new(vec![]), &v).is_err());
    }

    proptest! {
        #[test]
        fn preserves_frames_and_tokens(lens in proptest::collection::vec((1usize..30, 0usize..5), 1..9)) {
            let v = Vocabulary::english();
            let utts: Vec<_> = lens
                .iter()
                .enumerate()
                .map(|(i, &(f, w))| utt(&i.to_string(), f, &"ab ".repeat(w + 1).trim_end().to_string(), &v))
                .collect();
            let frames: usize = utts.iter().map(Utterance::frames).sum();
            let tokens: usize = utts.iter().map(|u| u.tokens.len()).sum();
            let merges = utts.len() / 2;
            let c = concat_pairs(Batch::new(utts.clone()), &v).unwrap();
            prop_assert_eq!(c.utterances.len(), utts.len().div_ceil(2));
            prop_assert_eq!(c.frames(), frames);
            prop_assert_eq!(c.utterances.iter().map(|u| u.tokens.len()).sum::<usize>(), tokens + merges);
        }

        #[test]
        fn sampler_covers_each_epoch_once(frames in proptest::collection::vec(1usize..50, 1..40), budget in 1usize..120, seed in any::<u64>()) {
            let s = FrameBudgetSampler::new(frames.clone(), budget, seed).unwrap();
            let batches = s.epoch(3);
            let mut seen: Vec<usize> = batches.concat();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..frames.len()).collect::<Vec<_>>());
            for b in &batches {
                let total: usize = b.iter().map(|&i| frames[i]).sum();
                prop_assert!(b.len() == 1 || total <= budget);
            }
            prop_assert_eq!(s.epoch(3), FrameBudgetSampler::new(frames, budget, seed).unwrap().epoch(3));
        }
    }

    #[test]
    fn batch_at_walks_epochs() {
        let s = FrameBudgetSampler::new(vec![10; 6], 20, 7).unwrap();
        let e0 = s.epoch(0);
        let e1 = s.epoch(1);
        assert_eq!(e0.len(), 3);
        assert_eq!(s.batch_at(2), e0[2]);
        assert_eq!(s.batch_at(3), e1[0]);
    }
}
