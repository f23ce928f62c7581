pub mod config;
pub mod data;
pub mod encoder;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod tokenizer;
pub mod train;

pub use encoder::EncoderConfig;
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f64>;
pub type Model = model::Model<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Model32 = model::Model<f32>;
