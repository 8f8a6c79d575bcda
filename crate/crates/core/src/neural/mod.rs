//! From-scratch CNN-LSTM training engine and the logistic-regression
//! baseline. Everything runs in `f64`.

pub mod adam;
pub mod bundle;
pub mod gradcheck;
pub mod layers;
pub mod logreg;
pub mod model;
pub mod presets;
pub mod tensor;
pub mod train;

pub use adam::{AdamParams, AdamState};
pub use model::{argmax, build_model, Model, ModelConfig};
pub use presets::{builtin_presets, preset, Preset};
pub use tensor::Tensor;
pub use train::{train, Classifier, EpochStats, Example, History, TrainConfig};
