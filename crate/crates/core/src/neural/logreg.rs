//! Multinomial logistic regression on aggregated feature vectors, the
//! classical baseline.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamParams, AdamState};
use super::layers::softmax;
use super::model::argmax;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::grouping::Standardizer;
use crate::rng::stream;

/// Candidate L2 strengths.
pub const L2_GRID: [f64; 3] = [0.01, 0.1, 1.0];
pub const ITERATIONS: usize = 500;
const LEARNING_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogReg {
    pub n_classes: usize,
    pub dim: usize,
    /// `[class][dim]` row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub l2: f64,
    pub standardizer: Standardizer,
}

/// Result of grid-searched training.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegFit {
    pub model: LogReg,
    /// Held-out accuracy for every grid value, in grid order.
    pub grid_scores: Vec<(f64, f64)>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

impl LogReg {
    fn zeros(n_classes: usize, dim: usize, l2: f64, standardizer: Standardizer) -> Self {
        Self { n_classes, dim, weights: vec![0.0; n_classes * dim], bias: vec![0.0; n_classes], l2, standardizer }
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_classes)
            .map(|c| self.bias[c] + self.weights[c * self.dim..(c + 1) * self.dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Probabilities for a raw (unstandardised) feature vector.
    pub fn predict_proba(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: raw.len() });
        }
        Ok(softmax(&self.logits(&self.standardizer.apply(raw))))
    }

    pub fn predict(&self, raw: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(raw)?))
    }

    pub fn accuracy(&self, raw: &[Vec<f64>], y: &[usize]) -> Result<f64> {
        let mut hits = 0;
        for (x, &t) in raw.iter().zip(y) {
            hits += (self.predict(x)? == t) as usize;
        }
        Ok(hits as f64 / raw.len().max(1) as f64)
    }

    /// Regularised mean cross-entropy over standardised inputs, with the
    /// gradient as `[weights, bias]`.
    fn objective(&self, x: &[Vec<f64>], y: &[usize]) -> (f64, [Tensor; 2]) {
        let mut gw = Tensor::zeros(&[self.n_classes, self.dim]);
        let mut gb = Tensor::zeros(&[self.n_classes]);
        let n = x.len() as f64;
        let mut loss = 0.0;
        for (xi, &t) in x.iter().zip(y) {
            let p = softmax(&self.logits(xi));
            loss -= p[t].max(f64::MIN_POSITIVE).ln();
            for c in 0..self.n_classes {
                let g = (p[c] - if c == t { 1.0 } else { 0.0 }) / n;
                gb[c] += g;
                gw.data[c * self.dim..(c + 1) * self.dim].iter_mut().zip(xi).for_each(|(a, v)| *a += g * v);
            }
        }
        let sq: f64 = self.weights.iter().map(|w| w * w).sum();
        gw.data.iter_mut().zip(&self.weights).for_each(|(g, w)| *g += self.l2 * w);
        (loss / n + 0.5 * self.l2 * sq, [gw, gb])
    }
}

/// Full-batch Adam with step acceptance: a step that raises the objective
/// is undone and the learning rate halved, so the objective never
/// increases. `x` must already be standardised.
pub fn fit_fixed(x: &[Vec<f64>], y: &[usize], n_classes: usize, l2: f64, standardizer: Standardizer) -> Result<(LogReg, f64, f64)> {
    let dim = x.first().map_or(0, Vec::len);
    let mut model = LogReg::zeros(n_classes, dim, l2, standardizer);
    let mut params = [Tensor::zeros(&[n_classes, dim]), Tensor::zeros(&[n_classes])];
    let mut adam = AdamState::new(&params);
    let mut hp = AdamParams { learning_rate: LEARNING_RATE, ..Default::default() };
    let (initial, mut grads) = model.objective(x, y);
    let mut current = initial;
    for _ in 0..ITERATIONS {
        let saved = (params.clone(), adam.clone());
        adam.step(&mut params, &grads, &hp);
        model.weights.clone_from(&params[0].data);
        model.bias.clone_from(&params[1].data);
        let (next, next_grads) = model.objective(x, y);
        if next.is_finite() && next <= current {
            current = next;
            grads = next_grads;
        } else {
            (params, adam) = saved;
            model.weights.clone_from(&params[0].data);
            model.bias.clone_from(&params[1].data);
            hp.learning_rate *= 0.5;
        }
    }
    Ok((model, initial, current))
}

/// Grid-search L2 on a speaker-disjoint 80/20 sub-split of the training
/// data, then refit on all of it with the winner (ties keep the smaller
/// strength).
pub fn train_logreg(raw: &[Vec<f64>], y: &[usize], speakers: &[&str], n_classes: usize, seed: u64) -> Result<LogRegFit> {
    if raw.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let distinct: std::collections::BTreeSet<usize> = y.iter().copied().collect();
    if distinct.len() < 2 || n_classes < 2 {
        return Err(Error::SingleClass);
    }
    if let Some(&bad) = y.iter().find(|&&t| t >= n_classes) {
        return Err(Error::TargetOutOfRange { target: bad, classes: n_classes });
    }
    let dim = raw[0].len();
    if let Some(bad) = raw.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }

    let is_val = holdout(speakers, raw.len(), seed);
    let pick = |val: bool| -> (Vec<Vec<f64>>, Vec<usize>) {
        raw.iter().zip(y).zip(&is_val).filter(|(_, &v)| v == val).map(|((x, &t), _)| (x.clone(), t)).unzip()
    };
    let (x_fit, y_fit) = pick(false);
    let (x_val, y_val) = pick(true);
    let sub_std = Standardizer::fit(x_fit.iter().map(Vec::as_slice), dim);
    let x_fit_std: Vec<Vec<f64>> = x_fit.iter().map(|v| sub_std.apply(v)).collect();
    let mut grid_scores = Vec::with_capacity(L2_GRID.len());
    for &l2 in &L2_GRID {
        let (m, _, _) = fit_fixed(&x_fit_std, &y_fit, n_classes, l2, sub_std.clone())?;
        grid_scores.push((l2, m.accuracy(&x_val, &y_val)?));
    }
    let best = grid_scores.iter().fold(grid_scores[0], |b, &s| if s.1 > b.1 { s } else { b }).0;

    let std = Standardizer::fit(raw.iter().map(Vec::as_slice), dim);
    let x_std: Vec<Vec<f64>> = raw.iter().map(|v| std.apply(v)).collect();
    let (model, initial_loss, final_loss) = fit_fixed(&x_std, y, n_classes, best, std)?;
    Ok(LogRegFit { model, grid_scores, initial_loss, final_loss })
}

/// Marks roughly 20% of samples as held out, by speaker when there are at
/// least two speakers and by sample otherwise.
fn holdout(speakers: &[&str], n: usize, seed: u64) -> Vec<bool> {
    let mut rng = stream(seed, &[0x106]);
    let mut ids: Vec<&str> = speakers.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() >= 2 && speakers.len() == n {
        ids.shuffle(&mut rng);
        let k = ((ids.len() as f64 * 0.2).round() as usize).clamp(1, ids.len() - 1);
        let held: std::collections::BTreeSet<&str> = ids[..k].iter().copied().collect();
        return speakers.iter().map(|s| held.contains(s)).collect();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let k = ((n as f64 * 0.2).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut mask = vec![false; n];
    order[..k].iter().for_each(|&i| mask[i] = true);
    mask
}
