pub mod data;
pub mod error;
pub mod evaluation;
pub mod forest;
pub mod info_theory;
pub mod pipeline;
pub mod scalar;
pub mod selection;
pub mod synth;
pub mod tree;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Scalar;

pub type Dataset = data::Dataset<f64>;
pub type DecisionTree = tree::DecisionTree<f64>;
pub type Forest = forest::Forest<f64>;
pub type OwnerModel = pipeline::OwnerModel<f64>;
pub type MultiDriverModel = pipeline::MultiDriverModel<f64>;

pub type Dataset32 = data::Dataset<f32>;
pub type DecisionTree32 = tree::DecisionTree<f32>;
pub type Forest32 = forest::Forest<f32>;
