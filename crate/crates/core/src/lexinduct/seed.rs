use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::subword::{Vocabulary, SPECIALS};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SeedDictionary {
    pub pairs: Vec<(String, String)>,
}

impl SeedDictionary {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Pairs every non-special token of at least `min_len` characters that
/// appears in both vocabularies with itself, in lexicographic order.
pub fn extract_identical_seed(a: &Vocabulary, b: &Vocabulary, min_len: usize) -> Result<SeedDictionary> {
    let shared: BTreeSet<&str> = a
        .tokens()
        .map(|(t, _)| t)
        .filter(|t| t.chars().count() >= min_len && b.contains(t) && !SPECIALS.contains(t))
        .collect();
    if shared.is_empty() {
        return Err(Error::SeedDictionaryEmpty);
    }
    Ok(SeedDictionary {
        pairs: shared.into_iter().map(|t| (t.to_owned(), t.to_owned())).collect(),
    })
}
