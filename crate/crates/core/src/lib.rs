//! Masked-reconstruction pre-training for speech.
//!
//! A bidirectional LSTM encoder is pre-trained to reconstruct masked
//! time/frequency regions of log-mel spectrograms, then its recurrent layers
//! are fine-tuned with CTC and evaluated with prefix beam search.

pub mod error;
#[macro_use]
pub mod rng;
pub mod features;
pub mod nn;
pub mod augment;
pub mod losses;
pub mod models;
pub mod decode;
pub mod train;
pub mod synth;
pub mod cli;

pub use error::{Error, Result};
