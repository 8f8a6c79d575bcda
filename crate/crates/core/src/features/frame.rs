//! Per-frame time and spectral descriptors.

use crate::error::{Error, Result};

/// The six scalar descriptors of one analysis frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameFeatures {
    pub zcr: f64,
    pub ste: f64,
    /// Hz.
    pub centroid: f64,
    pub entropy: f64,
    pub flux: f64,
    /// Hz.
    pub rolloff: f64,
}

impl FrameFeatures {
    pub const NAMES: [&'static str; 6] = ["zcr", "ste", "centroid", "entropy", "flux", "rolloff"];

    pub fn to_array(self) -> [f64; 6] {
        [self.zcr, self.ste, self.centroid, self.entropy, self.flux, self.rolloff]
    }
}

/// Fraction of consecutive sample pairs whose sign differs. A zero sample
/// keeps the sign of the last nonzero sample before it.
pub fn zcr(frame: &[f64]) -> Result<f64> {
    if frame.len() < 2 {
        return Err(Error::FrameTooShort { needed: 2, got: frame.len() });
    }
    let mut prev = 0i8;
    let mut crossings = 0usize;
    for &x in frame {
        let sign = if x > 0.0 {
            1
        } else if x < 0.0 {
            -1
        } else {
            prev
        };
        if prev != 0 && sign != prev {
            crossings += 1;
        }
        prev = sign;
    }
    Ok(crossings as f64 / (frame.len() - 1) as f64)
}

/// Short-term energy: mean of squared samples.
pub fn ste(frame: &[f64]) -> Result<f64> {
    if frame.is_empty() {
        return Err(Error::FrameTooShort { needed: 1, got: 0 });
    }
    Ok(frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64)
}

fn l1_normalized(m: &[f64]) -> Vec<f64> {
    let total: f64 = m.iter().sum();
    if total > 0.0 {
        m.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; m.len()]
    }
}

/// Spectral centroid, entropy, flux and rolloff of a magnitude frame.
///
/// Entropy is taken over the power distribution with natural logarithms;
/// flux is the Euclidean distance between L1-normalized magnitude frames
/// and is zero for the first frame. Silent frames yield zero centroid and
/// entropy.
pub fn spectral_features(
    mag_prev: Option<&[f64]>,
    mag_cur: &[f64],
    bin_freqs: &[f64],
    rolloff_pct: f64,
) -> Result<(f64, f64, f64, f64)> {
    if let Some(k) = mag_cur.iter().position(|&m| m < 0.0) {
        return Err(Error::NegativeMagnitude(k));
    }
    if bin_freqs.len() != mag_cur.len() {
        return Err(Error::DimensionMismatch { expected: mag_cur.len(), got: bin_freqs.len() });
    }
    let mag_sum: f64 = mag_cur.iter().sum();
    let centroid = if mag_sum > 0.0 {
        mag_cur.iter().zip(bin_freqs).map(|(m, f)| m * f).sum::<f64>() / mag_sum
    } else {
        0.0
    };

    let power_sum: f64 = mag_cur.iter().map(|m| m * m).sum();
    let entropy = if power_sum > 0.0 {
        -mag_cur
            .iter()
            .map(|m| m * m / power_sum)
            .filter(|&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    } else {
        0.0
    };

    let flux = match mag_prev {
        None => 0.0,
        Some(prev) => {
            if prev.len() != mag_cur.len() {
                return Err(Error::DimensionMismatch { expected: mag_cur.len(), got: prev.len() });
            }
            let a = l1_normalized(mag_cur);
            let b = l1_normalized(prev);
            a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        }
    };

    let threshold = rolloff_pct * power_sum;
    let mut cumulative = 0.0;
    let mut rolloff = bin_freqs.last().copied().unwrap_or(0.0);
    for (m, &f) in mag_cur.iter().zip(bin_freqs) {
        cumulative += m * m;
        if cumulative >= threshold {
            rolloff = f;
            break;
        }
    }
    Ok((centroid, entropy, flux, rolloff))
}
