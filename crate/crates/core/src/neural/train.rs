//! Mini-batch training loop and the trained classifier wrapper.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{AdamParams, AdamState};
use super::model::{argmax, build_model, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::features::MfccMatrix;
use crate::grouping::Standardizer;
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let a = AdamParams::default();
        Self { learning_rate: a.learning_rate, batch_size: 32, epochs: 30, seed: 0, beta1: a.beta1, beta2: a.beta2, epsilon: a.epsilon }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig("adam moments must lie in [0, 1) and epsilon > 0".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }

    /// Same settings with a seed derived for a sub-model.
    pub fn derived(&self, path: &[u64]) -> Self {
        Self { seed: derive_seed(self.seed, path), ..*self }
    }
}

/// An input sequence and its target class index.
pub type Example<'a> = (&'a MfccMatrix, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// Per-epoch record. Epoch 0 is an inference-mode evaluation of the
/// initial weights; later train figures are running means over the
/// epoch's mini-batches (dropout active), validation is inference mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc\n");
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
        for e in &self.epochs {
            s += &format!(
                "{}\t{:.6}\t{:.6}\t{}\t{}\n",
                e.epoch,
                e.train_loss,
                e.train_accuracy,
                opt(e.val_loss),
                opt(e.val_accuracy)
            );
        }
        s
    }
}

/// A trained network together with its input standardisation and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub model: Model,
    pub labels: Vec<String>,
    /// Per-coefficient statistics over every training frame.
    pub standardizer: Standardizer,
    /// Optimiser state, kept so training can resume from a bundle.
    pub adam: Option<AdamState>,
}

impl Classifier {
    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn prepare(&self, m: &MfccMatrix) -> Result<Vec<f64>> {
        let (t, c) = self.model.layout.input;
        if m.n_frames != t || m.n_coeffs != c {
            return Err(Error::ShapeMismatch { expected: (t, c), got: (m.n_frames, m.n_coeffs) });
        }
        Ok(standardize(m, &self.standardizer))
    }

    /// Inference-mode class probabilities.
    pub fn predict_proba(&self, m: &MfccMatrix) -> Result<Vec<f64>> {
        self.model.predict(&self.prepare(m)?)
    }

    pub fn predict(&self, m: &MfccMatrix) -> Result<usize> {
        Ok(argmax(&self.predict_proba(m)?))
    }

    /// Mean cross-entropy and accuracy in inference mode.
    pub fn evaluate(&self, set: &[Example]) -> Result<(f64, f64)> {
        let inputs = set.iter().map(|(m, _)| self.prepare(m)).collect::<Result<Vec<_>>>()?;
        let targets: Vec<usize> = set.iter().map(|e| e.1).collect();
        evaluate_inputs(&self.model, &inputs, &targets)
    }
}

fn standardize(m: &MfccMatrix, s: &Standardizer) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.values.len());
    for t in 0..m.n_frames {
        out.extend(s.apply(m.row(t)));
    }
    out
}

fn evaluate_inputs(model: &Model, inputs: &[Vec<f64>], targets: &[usize]) -> Result<(f64, f64)> {
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n_classes = model.config.n_classes;
    if let Some(&bad) = targets.iter().find(|&&t| t >= n_classes) {
        return Err(Error::TargetOutOfRange { target: bad, classes: n_classes });
    }
    let probs = inputs.par_iter().map(|x| model.predict(x)).collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut hits = 0usize;
    for (p, &t) in probs.iter().zip(targets) {
        loss -= p[t].max(f64::MIN_POSITIVE).ln();
        hits += (argmax(p) == t) as usize;
    }
    let n = inputs.len() as f64;
    Ok((loss / n, hits as f64 / n))
}

/// Train a fresh model of `cfg` (its class count is taken from `labels`)
/// on `train`, reporting on `val` after every epoch when it is non-empty.
pub fn train(cfg: &ModelConfig, labels: Vec<String>, train: &[Example], val: &[Example], tc: &TrainConfig) -> Result<(Classifier, History)> {
    tc.validate()?;
    let Some(&(first, _)) = train.first() else {
        return Err(Error::EmptyDataset);
    };
    let (frames, coeffs) = (first.n_frames, first.n_coeffs);
    let cfg = cfg.clone().with_classes(labels.len());
    let model = build_model(&cfg, frames, coeffs, derive_seed(tc.seed, &[0x1417]))?;
    for (m, _) in train.iter().chain(val) {
        if m.n_frames != frames || m.n_coeffs != coeffs {
            return Err(Error::ShapeMismatch { expected: (frames, coeffs), got: (m.n_frames, m.n_coeffs) });
        }
    }
    let standardizer = Standardizer::fit(train.iter().flat_map(|(m, _)| (0..m.n_frames).map(|t| m.row(t))), coeffs);
    let mut clf = Classifier { model, labels, standardizer, adam: None };
    let history = fit(&mut clf, train, val, tc)?;
    Ok((clf, history))
}

/// Continue training `clf` for `tc.epochs` epochs. The optimiser state is
/// reused when present. Standardisation is left as is.
pub fn fit(clf: &mut Classifier, train: &[Example], val: &[Example], tc: &TrainConfig) -> Result<History> {
    tc.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let x_train = train.iter().map(|(m, _)| clf.prepare(m)).collect::<Result<Vec<_>>>()?;
    let y_train: Vec<usize> = train.iter().map(|e| e.1).collect();
    let x_val = val.iter().map(|(m, _)| clf.prepare(m)).collect::<Result<Vec<_>>>()?;
    let y_val: Vec<usize> = val.iter().map(|e| e.1).collect();
    let val_stats = |model: &Model| -> Result<(Option<f64>, Option<f64>)> {
        if x_val.is_empty() {
            return Ok((None, None));
        }
        let (l, a) = evaluate_inputs(model, &x_val, &y_val)?;
        Ok((Some(l), Some(a)))
    };

    let mut history = History::default();
    let (loss0, acc0) = evaluate_inputs(&clf.model, &x_train, &y_train)?;
    let (vl, va) = val_stats(&clf.model)?;
    history.epochs.push(EpochStats { epoch: 0, train_loss: loss0, train_accuracy: acc0, val_loss: vl, val_accuracy: va });

    let hp = tc.adam();
    let mut adam = clf.adam.take().unwrap_or_else(|| AdamState::new(&clf.model.params));
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=tc.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(tc.seed, &[0x5eed, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for (b, batch) in order.chunks(tc.batch_size).enumerate() {
            let inputs: Vec<&[f64]> = batch.iter().map(|&i| x_train[i].as_slice()).collect();
            let targets: Vec<usize> = batch.iter().map(|&i| y_train[i]).collect();
            let seeds: Vec<u64> =
                (0..batch.len()).map(|pos| derive_seed(tc.seed, &[0xd0, epoch as u64, b as u64, pos as u64])).collect();
            let (loss, h, grads) = clf.model.batch_loss_and_grad(&inputs, &targets, Some(&seeds))?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            adam.step(&mut clf.model.params, &grads, &hp);
            loss_sum += loss * batch.len() as f64;
            hits += h;
        }
        let n = train.len() as f64;
        let (vl, va) = val_stats(&clf.model)?;
        let stats = EpochStats { epoch, train_loss: loss_sum / n, train_accuracy: hits as f64 / n, val_loss: vl, val_accuracy: va };
        log::info!(
            "epoch {epoch}: loss {:.4} acc {:.4} val_acc {}",
            stats.train_loss,
            stats.train_accuracy,
            va.map_or("-".into(), |a| format!("{a:.4}"))
        );
        history.epochs.push(stats);
    }
    clf.adam = Some(adam);
    Ok(history)
}
