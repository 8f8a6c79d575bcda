use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::DatasetManifest;
use crate::error::{Error, Result};

/// Splits a manifest so that no speaker appears on both sides.
///
/// Speakers (sorted, then shuffled with `seed`) move to the test side until
/// the test side first holds at least `test_fraction` of the original
/// recordings. At least one speaker always stays on each side. Augmented
/// entries never enter the test side.
pub fn split_by_speaker(
    m: &DatasetManifest,
    test_fraction: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    let mut speakers: Vec<&str> = m.speakers().into_iter().collect();
    if speakers.len() < 2 {
        return Err(Error::TooFewSpeakers(speakers.len()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    speakers.shuffle(&mut crate::rng::stream(seed, &[0x5b1e]));

    let originals = m.entries.iter().filter(|e| !e.is_augmented()).count();
    let target = test_fraction * originals as f64;
    let mut test_speakers = BTreeSet::new();
    let mut taken = 0usize;
    for spk in &speakers[..speakers.len() - 1] {
        if test_speakers.is_empty() || (taken as f64) < target {
            taken += m.entries.iter().filter(|e| !e.is_augmented() && e.speaker_id == *spk).count();
            test_speakers.insert(*spk);
        } else {
            break;
        }
    }

    let train = m.filter(|e| !test_speakers.contains(e.speaker_id.as_str()));
    let test = m.filter(|e| test_speakers.contains(e.speaker_id.as_str()) && !e.is_augmented());
    Ok((train, test))
}
