//! Automatic counterfactual data augmentation for binary sentiment
//! classifiers.

pub mod attribution;
pub mod augment_eval;
pub mod classifier;
pub mod config;
pub mod corpus;
pub mod filter;
pub mod generator;
pub mod pipeline;
pub mod proposer;
pub mod synth;
