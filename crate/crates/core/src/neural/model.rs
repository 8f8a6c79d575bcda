//! CNN-LSTM model: configuration, parameter layout, per-sample forward and
//! backward passes and the batched loss/gradient.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{self, LstmCache};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Architecture of one classifier. Kernels are 3x3 with same padding and
/// every conv is followed by ReLU and 2x2 max pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub conv_channels: Vec<usize>,
    #[serde(default)]
    pub lstm_units: Vec<usize>,
    #[serde(default)]
    pub dense_units: Vec<usize>,
    #[serde(default)]
    pub dropout: f64,
    /// Filled in by the trainer from the label table when left at 0.
    #[serde(default)]
    pub n_classes: usize,
}

impl ModelConfig {
    pub fn with_classes(mut self, n_classes: usize) -> Self {
        self.n_classes = n_classes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.conv_channels.is_empty() && self.dense_units.is_empty() {
            return Err(Error::InvalidConfig("model needs at least one conv or dense layer".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::InvalidConfig(format!("{} output classes", self.n_classes)));
        }
        if self.conv_channels.iter().chain(&self.lstm_units).chain(&self.dense_units).any(|&u| u == 0) {
            return Err(Error::InvalidConfig("zero-width layer".into()));
        }
        Ok(())
    }
}

/// Shapes derived from a config and an input size.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub input: (usize, usize),
    /// `(c_in, h, w)` entering each conv.
    pub conv_in: Vec<(usize, usize, usize)>,
    /// `(channels, h, w)` after the last pool (input itself without convs).
    pub conv_out: (usize, usize, usize),
    /// LSTM input width per layer.
    pub lstm_in: Vec<usize>,
    pub dense_in: Vec<usize>,
    pub head_in: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig, frames: usize, coeffs: usize) -> Result<Self> {
        cfg.validate()?;
        if frames == 0 || coeffs == 0 {
            return Err(Error::ShapeUnderflow { axis: if frames == 0 { "time" } else { "coefficient" } });
        }
        let (mut c, mut h, mut w) = (1, frames, coeffs);
        let mut conv_in = Vec::new();
        for &ch in &cfg.conv_channels {
            conv_in.push((c, h, w));
            c = ch;
            h /= 2;
            w /= 2;
            if h == 0 {
                return Err(Error::ShapeUnderflow { axis: "time" });
            }
            if w == 0 {
                return Err(Error::ShapeUnderflow { axis: "coefficient" });
            }
        }
        let mut lstm_in = Vec::new();
        let mut width = c * w;
        for &u in &cfg.lstm_units {
            lstm_in.push(width);
            width = u;
        }
        let mut width = if cfg.lstm_units.is_empty() { c * h * w } else { width };
        let mut dense_in = Vec::new();
        for &u in &cfg.dense_units {
            dense_in.push(width);
            width = u;
        }
        Ok(Self { input: (frames, coeffs), conv_in, conv_out: (c, h, w), lstm_in, dense_in, head_in: width })
    }

    /// Parameter shapes in storage order: conv (kernel, bias) pairs, LSTM
    /// (weight, bias) pairs, dense (weight, bias) pairs, output (weight, bias).
    pub fn param_shapes(&self, cfg: &ModelConfig) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        for (&(c_in, _, _), &c_out) in self.conv_in.iter().zip(&cfg.conv_channels) {
            shapes.push(vec![c_out, c_in, 3, 3]);
            shapes.push(vec![c_out]);
        }
        for (&i, &u) in self.lstm_in.iter().zip(&cfg.lstm_units) {
            shapes.push(vec![4 * u, i + u]);
            shapes.push(vec![4 * u]);
        }
        for (&i, &u) in self.dense_in.iter().zip(&cfg.dense_units) {
            shapes.push(vec![u, i]);
            shapes.push(vec![u]);
        }
        shapes.push(vec![cfg.n_classes, self.head_in]);
        shapes.push(vec![cfg.n_classes]);
        shapes
    }
}

/// A configured network and its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: Vec<Tensor>,
}

/// Activations of one sample, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of each conv and its post-ReLU output.
    conv: Vec<(Vec<f64>, Vec<f64>, Vec<usize>)>,
    lstm: Vec<LstmCache>,
    /// Input to each dense layer, its post-ReLU output and dropout mask.
    dense: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    head_input: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Shrinks the Glorot range of the output layer.
pub const OUTPUT_INIT_SCALE: f64 = 0.1;

impl ForwardCache {
    /// Which side of every non-differentiable point the sample sits on:
    /// ReLU on/off states and pooling winners.
    pub fn kink_signature(&self) -> (Vec<bool>, Vec<usize>) {
        let mut on = Vec::new();
        let mut winners = Vec::new();
        for (_, out, argmax) in &self.conv {
            on.extend(out.iter().map(|&v| v > 0.0));
            winners.extend_from_slice(argmax);
        }
        for (_, out, _) in &self.dense {
            on.extend(out.iter().map(|&v| v > 0.0));
        }
        (on, winners)
    }
}

/// Build a model with Glorot-uniform weights (output layer scaled by
/// [`OUTPUT_INIT_SCALE`]), zero biases and LSTM forget bias 1. `frames x coeffs` is the input MFCC shape.
pub fn build_model(cfg: &ModelConfig, frames: usize, coeffs: usize, seed: u64) -> Result<Model> {
    let layout = Layout::new(cfg, frames, coeffs)?;
    let shapes = layout.param_shapes(cfg);
    let n_conv = cfg.conv_channels.len();
    let n_lstm = cfg.lstm_units.len();
    let params = shapes
        .iter()
        .enumerate()
        .map(|(i, dims)| {
            let mut t = Tensor::zeros(dims);
            if dims.len() > 1 {
                let (fan_in, fan_out) = match dims.len() {
                    4 => (dims[1] * 9, dims[0] * 9),
                    _ => (dims[1], dims[0]),
                };
                let mut limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                if i == shapes.len() - 2 {
                    // a near-uniform initial prediction keeps the first loss close to ln C
                    limit *= OUTPUT_INIT_SCALE;
                }
                let mut rng = crate::rng::stream(seed, &[0x1a17, i as u64]);
                t.data.iter_mut().for_each(|v| *v = rng.random_range(-limit..limit));
            } else if i >= 2 * n_conv && i < 2 * (n_conv + n_lstm) {
                let units = dims[0] / 4;
                t.data[units..2 * units].iter_mut().for_each(|v| *v = 1.0);
            }
            t
        })
        .collect();
    Ok(Model { config: cfg.clone(), layout, params })
}

impl Model {
    pub fn n_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| Tensor::zeros(&p.dims)).collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        let (t, c) = self.layout.input;
        if x.len() != t * c {
            return Err(Error::ShapeMismatch { expected: (t, c), got: (x.len() / c.max(1), c) });
        }
        Ok(())
    }

    /// Forward pass of one `frames x coeffs` input (row-major). Dropout is
    /// active only when a mask stream is supplied.
    pub fn forward<R: Rng>(&self, x: &[f64], mut dropout: Option<&mut R>) -> Result<ForwardCache> {
        self.check_input(x)?;
        let cfg = &self.config;
        let mut p = 0;
        let mut act = x.to_vec();
        let mut conv = Vec::with_capacity(cfg.conv_channels.len());
        for &(c_in, h, w) in &self.layout.conv_in {
            let out = layers::conv3x3_relu_forward(&act, c_in, h, w, &self.params[p].data, &self.params[p + 1].data);
            let c_out = self.params[p + 1].len();
            let (pooled, argmax) = layers::maxpool2_forward(&out, c_out, h, w);
            conv.push((std::mem::replace(&mut act, pooled), out, argmax));
            p += 2;
        }
        let (c, h, w) = self.layout.conv_out;
        let mut lstm = Vec::with_capacity(cfg.lstm_units.len());
        if !cfg.lstm_units.is_empty() {
            // time stays the step axis; channels and coefficients fold into features
            let mut seq: Vec<Vec<f64>> = (0..h)
                .map(|y| {
                    let mut step = Vec::with_capacity(c * w);
                    for ch in 0..c {
                        step.extend_from_slice(&act[(ch * h + y) * w..(ch * h + y + 1) * w]);
                    }
                    step
                })
                .collect();
            for &units in &cfg.lstm_units {
                let cache = layers::lstm_forward(&seq, units, &self.params[p].data, &self.params[p + 1].data);
                seq = cache.outputs.clone();
                lstm.push(cache);
                p += 2;
            }
            act = seq.pop().unwrap_or_default();
        }
        let mut dense = Vec::with_capacity(cfg.dense_units.len());
        for &units in &cfg.dense_units {
            let mut out = layers::dense_forward(&act, &self.params[p].data, &self.params[p + 1].data);
            layers::relu_in_place(&mut out);
            let mask = match dropout.as_deref_mut() {
                Some(rng) if cfg.dropout > 0.0 => layers::dropout_mask(units, cfg.dropout, rng),
                _ => Vec::new(),
            };
            let next = if mask.is_empty() { out.clone() } else { layers::apply_mask(&out, &mask) };
            dense.push((std::mem::replace(&mut act, next), out, mask));
            p += 2;
        }
        let logits = layers::dense_forward(&act, &self.params[p].data, &self.params[p + 1].data);
        let probs = layers::softmax(&logits);
        Ok(ForwardCache { conv, lstm, dense, head_input: act, probs })
    }

    /// Inference-mode class probabilities.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward::<rand_chacha::ChaCha8Rng>(x, None)?.probs)
    }

    /// Accumulates the gradient of `scale * -ln p[target]` into `grads`.
    pub fn backward(&self, cache: &ForwardCache, target: usize, scale: f64, grads: &mut [Tensor]) -> Result<f64> {
        let cfg = &self.config;
        if target >= cfg.n_classes {
            return Err(Error::TargetOutOfRange { target, classes: cfg.n_classes });
        }
        let (loss, mut d) = layers::softmax_xent(&cache.probs, target);
        d.iter_mut().for_each(|g| *g *= scale);
        let mut p = grads.len() - 2;
        {
            let (dw, db) = split_pair(grads, p);
            d = layers::dense_backward(&cache.head_input, &d, &self.params[p].data, dw, db);
        }
        for (input, out, mask) in cache.dense.iter().rev() {
            p -= 2;
            if !mask.is_empty() {
                d = layers::apply_mask(&d, mask);
            }
            d.iter_mut().zip(out).for_each(|(g, y)| {
                if *y <= 0.0 {
                    *g = 0.0;
                }
            });
            let (dw, db) = split_pair(grads, p);
            d = layers::dense_backward(input, &d, &self.params[p].data, dw, db);
        }
        let (c, h, w) = self.layout.conv_out;
        if !cfg.lstm_units.is_empty() {
            let steps = h;
            let mut d_seq = vec![vec![0.0; *cfg.lstm_units.last().unwrap()]; steps];
            d_seq[steps - 1] = d;
            for cache in cache.lstm.iter().rev() {
                p -= 2;
                let (dw, db) = split_pair(grads, p);
                d_seq = layers::lstm_backward(cache, &d_seq, &self.params[p].data, dw, db);
            }
            let mut flat = vec![0.0; c * h * w];
            for (y, step) in d_seq.iter().enumerate() {
                for ch in 0..c {
                    flat[(ch * h + y) * w..(ch * h + y + 1) * w].copy_from_slice(&step[ch * w..(ch + 1) * w]);
                }
            }
            d = flat;
        }
        for (k, ((input, out, argmax), &(c_in, hh, ww))) in cache.conv.iter().zip(&self.layout.conv_in).enumerate().rev() {
            p -= 2;
            let d_out = layers::maxpool2_backward(&d, argmax, out.len());
            let (dw, db) = split_pair(grads, p);
            let need = k > 0;
            if let Some(dx) = layers::conv3x3_relu_backward(input, out, &d_out, c_in, hh, ww, &self.params[p].data, dw, db, need) {
                d = dx;
            }
        }
        Ok(loss)
    }

    /// Mean cross-entropy and its gradient over a batch. Per-sample work is
    /// parallel; gradients are summed in sample order so the result does
    /// not depend on scheduling. `masks` gives each sample's dropout
    /// stream seed, `None` runs in inference mode.
    pub fn batch_loss_and_grad(&self, inputs: &[&[f64]], targets: &[usize], masks: Option<&[u64]>) -> Result<(f64, usize, Vec<Tensor>)> {
        if inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let scale = 1.0 / inputs.len() as f64;
        let per_sample: Vec<Result<(f64, bool, Vec<Tensor>)>> = (0..inputs.len())
            .into_par_iter()
            .map(|i| {
                let cache = match masks {
                    Some(seeds) => self.forward(inputs[i], Some(&mut crate::rng::stream(seeds[i], &[])))?,
                    None => self.forward::<rand_chacha::ChaCha8Rng>(inputs[i], None)?,
                };
                let correct = argmax(&cache.probs) == targets[i];
                let mut g = self.zero_grads();
                let loss = self.backward(&cache, targets[i], scale, &mut g)?;
                Ok((loss, correct, g))
            })
            .collect();
        let mut grads = self.zero_grads();
        let mut loss = 0.0;
        let mut hits = 0;
        for r in per_sample {
            let (l, correct, g) = r?;
            loss += l;
            hits += correct as usize;
            grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        Ok((loss * scale, hits, grads))
    }
}

fn split_pair(grads: &mut [Tensor], p: usize) -> (&mut [f64], &mut [f64]) {
    let (a, b) = grads[p..p + 2].split_at_mut(1);
    (&mut a[0].data, &mut b[0].data)
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig { conv_channels: vec![2], lstm_units: vec![4], dense_units: vec![8], dropout: 0.0, n_classes: 3 }
    }

    fn input(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = crate::rng::stream(seed, &[1]);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn full_size_shape_arithmetic() {
        let cfg = ModelConfig { conv_channels: vec![128, 64, 32], lstm_units: vec![64, 32], dense_units: vec![256, 32], dropout: 0.3, n_classes: 6 };
        let layout = Layout::new(&cfg, 198, 13).unwrap();
        assert_eq!(layout.conv_out, (32, 24, 1));
        assert_eq!(layout.lstm_in, vec![32, 64]);
        assert_eq!(layout.head_in, 32);
    }

    #[test]
    fn underflow_is_reported() {
        let cfg = ModelConfig { conv_channels: vec![4; 4], ..tiny() };
        assert!(matches!(Layout::new(&cfg, 198, 13), Err(Error::ShapeUnderflow { axis: "coefficient" })));
        let bad = ModelConfig { dropout: 1.0, ..tiny() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_weights_give_uniform_output() {
        let mut m = build_model(&tiny(), 12, 13, 1).unwrap();
        m.params.iter_mut().for_each(|t| t.scale(0.0));
        let p = m.predict(&input(2, 12 * 13)).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn inference_is_deterministic_and_normalised() {
        let m = build_model(&ModelConfig { dropout: 0.5, ..tiny() }, 12, 13, 4).unwrap();
        let x = input(5, 12 * 13);
        let a = m.predict(&x).unwrap();
        assert_eq!(a, m.predict(&x).unwrap());
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let m = build_model(&tiny(), 12, 13, 1).unwrap();
        let b = &m.params[3].data;
        assert_eq!(&b[4..8], &[1.0; 4]);
        assert!(b[..4].iter().chain(&b[8..]).all(|&v| v == 0.0));
    }

    #[test]
    fn target_out_of_range() {
        let m = build_model(&tiny(), 12, 13, 1).unwrap();
        let x = input(1, 12 * 13);
        let r = m.batch_loss_and_grad(&[&x], &[3], None);
        assert!(matches!(r, Err(Error::TargetOutOfRange { target: 3, classes: 3 })));
    }
}
