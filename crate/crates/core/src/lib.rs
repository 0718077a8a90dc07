//! Learning image embeddings from unlabeled frame sequences with slowness
//! (first-order) and steadiness (second-order) temporal-coherence
//! regularizers trained jointly with a softmax classifier.

pub mod datamodel;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod losses;
pub mod mining;
pub mod network;
pub mod rng;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
