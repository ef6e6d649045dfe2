//! Moses-style text pre- and post-processing.
//!
//! The pipeline on the way in is [`normalize_and_tokenize`] followed by
//! [`truecase`]; on the way out, [`postprocess`] recases, detokenizes and
//! rewrites double quotes to the style used by the source sentence.

mod postprocess;
mod rules;
mod tokenize;
mod truecase;

pub use postprocess::{detect_quote_style, postprocess, recase};
pub use rules::LangRules;
pub use tokenize::{detokenize, normalize_and_tokenize, normalize_punctuation, tokenize};
pub use truecase::{sentence_initial_positions, train_truecaser, truecase, CasingModel};
