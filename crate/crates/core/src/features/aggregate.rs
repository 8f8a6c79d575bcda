//! Clip-level pooling of frame features and MFCCs.

use serde::{Deserialize, Serialize};

use super::{FrameFeatures, MfccMatrix};
use crate::error::{Error, Result};

/// Number of per-frame base features: six descriptors plus 13 MFCCs.
pub const BASE_FEATURES: usize = 19;
/// Statistics per base feature in `stats` mode.
pub const STATS: [&str; 6] = ["mean", "std", "skew", "max", "min", "median"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// One mean per base feature (19 values).
    #[default]
    Mean,
    /// Six statistics per base feature (114 values).
    Stats,
}

impl Aggregation {
    pub fn dim(self) -> usize {
        match self {
            Aggregation::Mean => BASE_FEATURES,
            Aggregation::Stats => BASE_FEATURES * STATS.len(),
        }
    }
}

/// Fixed-layout clip descriptor.
///
/// Base feature order is `zcr, ste, centroid, entropy, flux, rolloff,
/// c0..c12`. In `stats` mode value `6 * f + s` holds statistic `s` (see
/// [`STATS`]) of base feature `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub mode: Aggregation,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Human-readable name of every component.
    pub fn layout(mode: Aggregation) -> Vec<String> {
        let base: Vec<String> = FrameFeatures::NAMES
            .iter()
            .map(|s| s.to_string())
            .chain((0..13).map(|c| format!("c{c}")))
            .collect();
        match mode {
            Aggregation::Mean => base.into_iter().map(|b| format!("{b}_mean")).collect(),
            Aggregation::Stats => base.iter().flat_map(|b| STATS.iter().map(move |s| format!("{b}_{s}"))).collect(),
        }
    }
}

fn base_columns(frames: &[FrameFeatures], mfcc: &MfccMatrix) -> Result<Vec<Vec<f64>>> {
    if frames.is_empty() {
        return Err(Error::EmptySequence);
    }
    if mfcc.n_frames != frames.len() {
        return Err(Error::DimensionMismatch { expected: frames.len(), got: mfcc.n_frames });
    }
    let mut columns: Vec<Vec<f64>> = (0..6).map(|i| frames.iter().map(|f| f.to_array()[i]).collect()).collect();
    columns.extend((0..mfcc.n_coeffs).map(|c| mfcc.column(c).collect()));
    Ok(columns)
}

/// Shifted mean; exact for constant input.
fn mean(v: &[f64]) -> f64 {
    let pivot = v[0];
    pivot + v.iter().map(|x| x - pivot).sum::<f64>() / v.len() as f64
}

/// Mean, population std, skewness `m3 / m2^1.5` (0 when `m2 = 0`), max,
/// min and lower median.
pub fn describe(v: &[f64]) -> [f64; 6] {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let median = sorted[(sorted.len() - 1) / 2];
    if min == max {
        return [min, 0.0, 0.0, max, min, median];
    }
    let mu = mean(v);
    let m2 = v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / v.len() as f64;
    let m3 = v.iter().map(|x| (x - mu).powi(3)).sum::<f64>() / v.len() as f64;
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    [mu.clamp(min, max), m2.sqrt(), skew, max, min, median]
}

pub fn aggregate_mean(frames: &[FrameFeatures], mfcc: &MfccMatrix) -> Result<FeatureVector> {
    let values = base_columns(frames, mfcc)?.iter().map(|c| mean(c)).collect();
    Ok(FeatureVector { values, mode: Aggregation::Mean })
}

pub fn aggregate_stats(frames: &[FrameFeatures], mfcc: &MfccMatrix) -> Result<FeatureVector> {
    let values = base_columns(frames, mfcc)?.iter().flat_map(|c| describe(c)).collect();
    Ok(FeatureVector { values, mode: Aggregation::Stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant_input(t: usize) -> (Vec<FrameFeatures>, MfccMatrix) {
        let f = FrameFeatures { zcr: 0.1, ste: 0.2, centroid: 900.0, entropy: 3.0, flux: 0.05, rolloff: 2000.0 };
        let mfcc = MfccMatrix::new((0..t).flat_map(|_| (0..13).map(|c| c as f64 - 4.0)).collect(), t, 13);
        (vec![f; t], mfcc)
    }

    #[test]
    fn describe_hand_computed() {
        let d = describe(&[1.0, 2.0, 3.0]);
        assert_eq!(d[0], 2.0);
        assert!((d[1] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(&d[2..], &[0.0, 3.0, 1.0, 2.0]);
        assert_eq!(describe(&[4.0, 1.0, 3.0, 2.0])[5], 2.0);
    }

    #[test]
    fn constant_sequences() {
        let (frames, mfcc) = constant_input(5);
        let m = aggregate_mean(&frames, &mfcc).unwrap();
        assert_eq!(m.len(), 19);
        assert_eq!(&m.values[..6], &frames[0].to_array());
        assert_eq!(&m.values[6..], mfcc.row(0));
        let s = aggregate_stats(&frames, &mfcc).unwrap();
        assert_eq!(s.len(), 114);
        for f in 0..19 {
            let c = m.values[f];
            assert_eq!(&s.values[f * 6..f * 6 + 6], &[c, 0.0, 0.0, c, c, c]);
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        let mfcc = MfccMatrix::new(vec![], 0, 13);
        assert!(matches!(aggregate_mean(&[], &mfcc), Err(Error::EmptySequence)));
        assert!(matches!(aggregate_stats(&[], &mfcc), Err(Error::EmptySequence)));
    }

    #[test]
    fn layout_names() {
        assert_eq!(FeatureVector::layout(Aggregation::Mean).len(), 19);
        let stats = FeatureVector::layout(Aggregation::Stats);
        assert_eq!(stats.len(), 114);
        assert_eq!(stats[0], "zcr_mean");
        assert_eq!(stats[113], "c12_median");
    }

    proptest! {
        #[test]
        fn order_statistics_are_consistent(v in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
            let d = describe(&v);
            let (mu, max, min, median) = (d[0], d[3], d[4], d[5]);
            prop_assert!(min <= median && median <= max);
            prop_assert!(min <= mu && mu <= max);
            prop_assert!(d[1] >= 0.0);
        }
    }
}
