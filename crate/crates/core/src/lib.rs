//! Encrypted traffic classification from unlabeled flows.
//!
//! Captures are turned into flow features, two self-supervised branches
//! (a constraint-aware autoencoder and a tabular contrastive learner)
//! propose pseudo-labels, the proposals are fused, confident learning turns
//! them into per-sample weights, and a final classifier is trained with a
//! weighted symmetric cross-entropy.

pub mod cl;
pub mod constraints;
pub mod error;
pub mod eval;
pub mod final_trainer;
pub mod flow;
pub mod fusion;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod ssl;
pub mod synth;

pub use error::{Error, Result};
