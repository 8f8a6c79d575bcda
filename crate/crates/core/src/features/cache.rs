//! Binary feature cache (`ABJF`).
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic "ABJF" | version u8 | record count u32
//! per record:
//!   path length u32 | path UTF-8 bytes
//!   mode u8 (0 = mean, 1 = stats) | vector length u32 | f64 values
//!   MFCC frames u32 | MFCC coefficients u32 | f64 values (row-major)
//! ```

use super::{Aggregation, FeatureVector, MfccMatrix};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"ABJF";
pub const CACHE_VERSION: u8 = 1;

/// Cached features of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub path: String,
    pub vector: FeatureVector,
    pub mfcc: MfccMatrix,
}

pub fn encode_feature_cache(records: &[FeatureRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    out.push(CACHE_VERSION);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        out.extend_from_slice(&(r.path.len() as u32).to_le_bytes());
        out.extend_from_slice(r.path.as_bytes());
        out.push(match r.vector.mode {
            Aggregation::Mean => 0,
            Aggregation::Stats => 1,
        });
        out.extend_from_slice(&(r.vector.values.len() as u32).to_le_bytes());
        r.vector.values.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        out.extend_from_slice(&(r.mfcc.n_frames as u32).to_le_bytes());
        out.extend_from_slice(&(r.mfcc.n_coeffs as u32).to_le_bytes());
        r.mfcc.values.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(truncated)?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(truncated)?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

fn truncated() -> Error {
    Error::Format { kind: "feature cache", reason: "truncated".into() }
}

pub fn decode_feature_cache(bytes: &[u8]) -> Result<Vec<FeatureRecord>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != CACHE_MAGIC {
        return Err(Error::Format { kind: "feature cache", reason: "bad magic".into() });
    }
    let version = cur.u8()?;
    if version != CACHE_VERSION {
        return Err(Error::Format { kind: "feature cache", reason: format!("unsupported version {version}") });
    }
    let count = cur.u32()?;
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = cur.u32()?;
        let path = String::from_utf8(cur.take(len)?.to_vec())
            .map_err(|_| Error::Format { kind: "feature cache", reason: "path is not UTF-8".into() })?;
        let mode = match cur.u8()? {
            0 => Aggregation::Mean,
            1 => Aggregation::Stats,
            m => return Err(Error::Format { kind: "feature cache", reason: format!("unknown mode {m}") }),
        };
        let n = cur.u32()?;
        let values = cur.f64s(n)?;
        let frames = cur.u32()?;
        let coeffs = cur.u32()?;
        let mfcc = cur.f64s(frames.checked_mul(coeffs).ok_or_else(truncated)?)?;
        records.push(FeatureRecord {
            path,
            vector: FeatureVector { values, mode },
            mfcc: MfccMatrix::new(mfcc, frames, coeffs),
        });
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format { kind: "feature cache", reason: "trailing bytes".into() });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(path: String, vals: Vec<f64>, frames: usize) -> FeatureRecord {
        let mfcc = MfccMatrix::new((0..frames * 13).map(|i| i as f64 * 0.5 - 3.0).collect(), frames, 13);
        FeatureRecord { path, vector: FeatureVector { values: vals, mode: Aggregation::Stats }, mfcc }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_feature_cache(&[]);
        assert_eq!(bytes, b"ABJF\x01\x00\x00\x00\x00");
        assert!(decode_feature_cache(b"ABJD\x01\x00\x00\x00\x00").is_err());
        assert!(decode_feature_cache(b"ABJF\x02\x00\x00\x00\x00").is_err());
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = encode_feature_cache(&[record("a.wav".into(), vec![1.0; 114], 4)]);
        for cut in [5, 12, bytes.len() - 1] {
            assert!(decode_feature_cache(&bytes[..cut]).is_err());
        }
    }

    proptest! {
        #[test]
        fn round_trip(path in "[a-z/]{1,12}", vals in proptest::collection::vec(-1e6f64..1e6, 0..20), frames in 0usize..5) {
            let records = vec![record(path, vals, frames), record("ب.wav".into(), vec![0.5], 1)];
            prop_assert_eq!(decode_feature_cache(&encode_feature_cache(&records)).unwrap(), records);
        }
    }
}
