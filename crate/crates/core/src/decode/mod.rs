//! Greedy, sampling and beam decoding over single models or ensembles,
//! and corpus BLEU.

mod bleu;
mod search;

pub use bleu::{bleu, tokenize_13a, BleuReport};
pub use search::{
    beam_search, decode, decode_batch, ensemble_decode, greedy, sample, DecodeMode, DecodeOutput, DecodeParams,
    EnsembleScorer, Hypothesis, ModelScorer, StepScorer,
};
