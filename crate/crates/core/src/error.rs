use std::io;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed WAV header: {0}")]
    MalformedWav(String),

    #[error("unsupported WAV encoding: format tag {format_tag}, {bits_per_sample} bits")]
    UnsupportedEncoding { format_tag: u16, bits_per_sample: u16 },

    #[error("expected a mono recording, found {0} channels")]
    ChannelCount(u16),

    #[error("manifest is missing column `{0}`")]
    MissingColumn(String),

    #[error("unknown category `{0}` (expected alphabet, number or color)")]
    UnknownCategory(String),

    #[error("duplicate manifest path `{0}`")]
    DuplicatePath(String),

    #[error("invalid manifest row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },

    #[error("speaker split needs at least 2 distinct speakers, found {0}")]
    TooFewSpeakers(usize),

    #[error("signal of {len} samples is shorter than one frame of {frame_len}")]
    SignalTooShort { len: usize, frame_len: usize },

    #[error("spectrogram carries no phase information")]
    MissingPhase,

    #[error("frame needs at least {needed} samples, got {got}")]
    FrameTooShort { needed: usize, got: usize },

    #[error("negative spectral magnitude at bin {0}")]
    NegativeMagnitude(usize),

    #[error("cannot aggregate an empty frame sequence")]
    EmptySequence,

    #[error("cutoff {cutoff} Hz outside (0, {nyquist}) Hz")]
    CutoffOutOfRange { cutoff: f64, nyquist: f64 },

    #[error("label `{0}` has no letter in the articulation table")]
    UnknownLetter(String),

    #[error("class `{0}` has no feature vectors")]
    EmptyClass(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("k = {k} is outside [1, {n}]")]
    KOutOfRange { k: usize, n: usize },

    #[error("agglomeration needs at least 2 points, got {0}")]
    TooFewPoints(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("pooling would shrink the {axis} axis to zero")]
    ShapeUnderflow { axis: &'static str },

    #[error("input shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },

    #[error("target index {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("training data holds a single class")]
    SingleClass,

    #[error("group `{group}` class `{class}` has no training samples")]
    MissingClass { group: String, class: String },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("bad {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
