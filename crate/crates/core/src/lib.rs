//! Core library for judging question-level student mastery from transcripts
//! of one-on-one tutoring classes.
//!
//! The pipeline: ingest JSONL conversation transcripts ([`corpus`]), extract
//! 25 handcrafted interaction features ([`features`]), embed utterances
//! ([`embed`]), and classify with a Wide & Deep model ([`model`]) trained by
//! [`train`]. A from-scratch gradient-boosted-tree baseline lives in
//! [`gbdt`], evaluation in [`metrics`], and the differentiable primitives
//! with their finite-difference checker in [`ops`] / [`gradcheck`].

pub mod corpus;
pub mod embed;
pub mod error;
pub mod features;
pub mod gbdt;
pub mod gradcheck;
pub mod gradsuite;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
