//! Extractive question answering built from first principles.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod gradcheck;
mod kernels;
pub mod metrics;
pub mod optim;
pub mod params;
pub mod recurrent;
pub mod report;
pub mod span;
pub mod tensor;
pub mod tokenizer;
pub mod train;

pub use autodiff::{Elementwise, Gradients, Tape, Var};
pub use config::RunConfig;
pub use data::{QaExample, TrainFeature};
pub use encoder::EncoderConfig;
pub use error::{Error, ErrorKind, Result};
pub use span::{DecodeConfig, ModelConfig, QaModel, SpanPrediction};
pub use tensor::Tensor;
pub use tokenizer::{Encoding, Vocab};
pub use train::TrainConfig;
