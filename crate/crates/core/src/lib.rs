//! Building blocks for a desk-scale unsupervised machine translation
//! pipeline: text normalization, BPE with dropout and vocabulary extension,
//! a seed-dictionary lexicon translator, a small encoder-decoder
//! transformer with adapters, training objectives (MASS, online
//! backtranslation, curriculum ordering) and decoding/evaluation.

pub mod bitext;
pub mod checkpoint;
pub mod decode;
pub mod error;
pub mod lexinduct;
pub mod model;
pub mod rng;
pub mod subword;
pub mod textnorm;
pub mod trainer;

pub use error::{Error, Result};
