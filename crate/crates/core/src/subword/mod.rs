//! Byte-pair encoding: learning merge tables, deterministic and dropout
//! segmentation, vocabularies and their union-extension.

mod bpe;
mod dropout;
mod vocab;

pub use bpe::{join_subwords, learn_bpe, segment, segment_with_rng, word_symbols, MergeTable, Segmenter, END_OF_WORD};
pub use dropout::{oversample_bitext_with_dropout, oversample_with_dropout, DropoutParams, Side};
pub use vocab::{build_vocab, extend_vocab, Vocabulary, BOS, EOS, MASK, PAD, SPECIALS, UNK};
