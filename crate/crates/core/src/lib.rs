//! Detection of minimal semantic units (multiword expressions, possibly
//! gappy) and their supersense labels.
//!
//! A unit vector is composed one member at a time from a learned seed.
//! Two small perceptrons read it: one scores whether the last member
//! belongs to the unit, the other picks a supersense. Training is online
//! SGD over sampled unit prefixes; decoding is greedy.
//!
//! The numeric core is generic over [`Scalar`]; the pipeline runs on
//! `f32` and the gradient checker on `f64`.

pub mod cli;
pub mod compose;
pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod evaluator;
pub mod features;
pub mod network;
pub mod predictor;
pub mod scalar;
pub mod synthetic;
pub mod trainer;

pub use scalar::Scalar;

pub type ModelParams32 = network::ModelParams<f32>;
pub type ModelParams64 = network::ModelParams<f64>;
pub type Model32 = network::ModelFile<f32>;
pub type Gradients32 = network::Gradients<f32>;
pub type Gradients64 = network::Gradients<f64>;
pub type PreparedSentence32 = features::PreparedSentence<f32>;
