//! `ABJD` model bundle: a classifier with everything needed for inference
//! and, optionally, the optimiser moments to resume training.
//!
//! ```text
//! "ABJD" u8 version
//! u32 frames, u32 coeffs
//! u32 len + UTF-8 TOML of the ModelConfig
//! u32 n + f64 mean[n] + f64 std[n]
//! u32 n_labels, (u32 len + UTF-8)*
//! u32 n_tensors, (u32 rank, u32 dims[rank], f64 values)*
//! u8 has_moments [u64 t, m tensors, v tensors]
//! ```
//! All integers and floats are little-endian.

use super::adam::AdamState;
use super::model::{Layout, Model, ModelConfig};
use super::tensor::Tensor;
use super::train::Classifier;
use crate::error::{Error, Result};
use crate::grouping::Standardizer;

const MAGIC: &[u8; 4] = b"ABJD";
const VERSION: u8 = 1;

fn fmt_err(reason: impl Into<String>) -> Error {
    Error::Format { kind: "ABJD", reason: reason.into() }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|x| self.0.extend_from_slice(&x.to_le_bytes()));
    }

    fn tensors(&mut self, ts: &[Tensor]) {
        for t in ts {
            self.u32(t.dims.len());
            t.dims.iter().for_each(|&d| self.u32(d));
            self.f64s(&t.data);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| fmt_err("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| fmt_err("invalid UTF-8"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| fmt_err("length overflow"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn tensors(&mut self, shapes: &[Vec<usize>]) -> Result<Vec<Tensor>> {
        shapes
            .iter()
            .map(|expected| {
                let rank = self.u32()?;
                let dims = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
                if &dims != expected {
                    return Err(fmt_err(format!("tensor dims {dims:?}, config implies {expected:?}")));
                }
                Ok(Tensor::from_vec(&dims, self.f64s(dims.iter().product())?))
            })
            .collect()
    }
}

/// Serialise a classifier. Moments are written when `with_moments` is set
/// and the classifier carries optimiser state.
pub fn encode(clf: &Classifier, with_moments: bool) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.push(VERSION);
    let (frames, coeffs) = clf.model.layout.input;
    w.u32(frames);
    w.u32(coeffs);
    w.str(&toml::to_string(&clf.model.config).expect("model config serialises"));
    w.u32(clf.standardizer.mean.len());
    w.f64s(&clf.standardizer.mean);
    w.f64s(&clf.standardizer.std);
    w.u32(clf.labels.len());
    clf.labels.iter().for_each(|l| w.str(l));
    w.u32(clf.model.params.len());
    w.tensors(&clf.model.params);
    match clf.adam.as_ref().filter(|_| with_moments) {
        Some(state) => {
            w.0.push(1);
            w.0.extend_from_slice(&state.t.to_le_bytes());
            w.tensors(&state.m);
            w.tensors(&state.v);
        }
        None => w.0.push(0),
    }
    w.0
}

pub fn decode(buf: &[u8]) -> Result<Classifier> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(fmt_err("bad magic"));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(fmt_err(format!("unsupported version {version}")));
    }
    let frames = r.u32()?;
    let coeffs = r.u32()?;
    let config: ModelConfig = toml::from_str(&r.str()?).map_err(|e| fmt_err(format!("model config: {e}")))?;
    let n = r.u32()?;
    let mean = r.f64s(n)?;
    let std = r.f64s(n)?;
    let n_labels = r.u32()?;
    let labels = (0..n_labels).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    if labels.len() != config.n_classes {
        return Err(fmt_err(format!("{} labels for {} classes", labels.len(), config.n_classes)));
    }
    let layout = Layout::new(&config, frames, coeffs)?;
    let shapes = layout.param_shapes(&config);
    if r.u32()? != shapes.len() {
        return Err(fmt_err("tensor count does not match config"));
    }
    let params = r.tensors(&shapes)?;
    let adam = match r.u8()? {
        0 => None,
        1 => {
            let t = r.u64()?;
            let m = r.tensors(&shapes)?;
            let v = r.tensors(&shapes)?;
            Some(AdamState { t, m, v })
        }
        other => return Err(fmt_err(format!("moment flag {other}"))),
    };
    if r.pos != buf.len() {
        return Err(fmt_err("trailing bytes"));
    }
    Ok(Classifier { model: Model { config, layout, params }, labels, standardizer: Standardizer { mean, std }, adam })
}

pub fn save(clf: &Classifier, path: &std::path::Path, with_moments: bool) -> Result<()> {
    std::fs::write(path, encode(clf, with_moments))?;
    Ok(())
}

pub fn load(path: &std::path::Path) -> Result<Classifier> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::MfccMatrix;
    use crate::neural::train::{train, TrainConfig};

    fn trained() -> (Classifier, Vec<MfccMatrix>) {
        let data: Vec<MfccMatrix> =
            (0..6).map(|i| MfccMatrix::new((0..40).map(|k| ((k * 7 + i * 3) % 11) as f64 - 5.0).collect(), 10, 4)).collect();
        let set: Vec<_> = data.iter().enumerate().map(|(i, m)| (m, i % 3)).collect();
        let cfg = ModelConfig { conv_channels: vec![2], lstm_units: vec![3], dense_units: vec![5], dropout: 0.2, n_classes: 0 };
        let labels = vec!["x".into(), "y".into(), "z".into()];
        let (clf, _) = train(&cfg, labels, &set, &[], &TrainConfig { epochs: 2, batch_size: 4, ..Default::default() }).unwrap();
        (clf, data)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (clf, data) = trained();
        let back = decode(&encode(&clf, true)).unwrap();
        assert_eq!(back, clf);
        for m in &data {
            assert_eq!(back.predict_proba(m).unwrap(), clf.predict_proba(m).unwrap());
        }
        let lean = decode(&encode(&clf, false)).unwrap();
        assert!(lean.adam.is_none());
        assert_eq!(lean.model, clf.model);
    }

    #[test]
    fn corrupt_bundles_are_rejected() {
        let (clf, _) = trained();
        let bytes = encode(&clf, false);
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
