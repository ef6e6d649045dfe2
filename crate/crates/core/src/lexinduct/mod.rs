//! Seed-dictionary lexicon translation: identical-string seeds, an
//! orthogonal embedding map, a cosine lexicon, an additive-smoothing n-gram
//! LM and a monotone word-by-word beam translator.

mod embeddings;
mod lexicon;
mod lm;
mod procrustes;
mod seed;
mod translate;

pub use embeddings::EmbeddingTable;
pub use lexicon::{induce_lexicon, TranslationLexicon};
pub use lm::{train_lm, NGramLm, LM_BOS, LM_EOS, LM_UNK};
pub use procrustes::procrustes_map;
pub use seed::{extract_identical_seed, SeedDictionary};
pub use translate::{backtranslate_corpus, word_translate, WordTranslator};
