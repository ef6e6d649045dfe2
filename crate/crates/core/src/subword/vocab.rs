use std::collections::HashMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const MASK: u32 = 4;
pub const SPECIALS: [&str; 5] = ["<pad>", "<unk>", "<s>", "</s>", "<mask>"];

/// Token list with counts. Ids are positions; the five specials come first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<(String, u64)>,
    index: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::specials_only()
    }
}

impl Vocabulary {
    pub fn specials_only() -> Self {
        let mut v = Vocabulary {
            entries: Vec::new(),
            index: HashMap::new(),
        };
        for s in SPECIALS {
            v.push(s.to_owned(), 0);
        }
        v
    }

    fn push(&mut self, token: String, count: u64) -> u32 {
        let id = self.entries.len() as u32;
        self.index.insert(token.clone(), id);
        self.entries.push((token, count));
        id
    }

    /// Builds a vocabulary from specials followed by `entries` in order.
    pub fn from_entries(entries: Vec<(String, u64)>) -> Result<Self> {
        let mut v = Self::specials_only();
        for (tok, count) in entries {
            if v.index.contains_key(&tok) {
                return Err(Error::format("vocabulary", format!("duplicate token {tok:?}")));
            }
            v.push(tok, count);
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(|(t, _)| t.as_str())
    }

    pub fn count(&self, id: u32) -> Option<u64> {
        self.entries.get(id as usize).map(|e| e.1)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Non-special entries in id order.
    pub fn tokens(&self) -> impl Iterator<Item = (&str, u64)> {
        self.entries[SPECIALS.len()..].iter().map(|(t, c)| (t.as_str(), *c))
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id_or_unk(t.as_ref())).collect()
    }

    /// Token strings for `ids`, skipping pad/bos/eos.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| !matches!(i, PAD | BOS | EOS))
            .map(|&i| self.token(i).unwrap_or(SPECIALS[UNK as usize]).to_owned())
            .collect()
    }

    /// `token count` per line, specials included.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (t, c) in &self.entries {
            let _ = writeln!(out, "{t} {c}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let (tok, count) = line
                .rsplit_once(' ')
                .ok_or_else(|| Error::format("vocabulary", format!("line {}: expected `token count`", n + 1)))?;
            let count: u64 = count
                .parse()
                .map_err(|_| Error::format("vocabulary", format!("line {}: bad count", n + 1)))?;
            entries.push((tok.to_owned(), count));
        }
        if entries.len() < SPECIALS.len()
            || entries.iter().zip(SPECIALS).any(|((t, _), s)| t != s)
        {
            return Err(Error::ConflictingSpecials("vocabulary file must start with the special tokens".into()));
        }
        Self::from_entries(entries.split_off(SPECIALS.len()))
    }

    /// SHA-256 of the text serialization; used to detect vocabulary drift.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    fn specials_match(&self, other: &Vocabulary) -> bool {
        self.entries.len() >= SPECIALS.len()
            && other.entries.len() >= SPECIALS.len()
            && self.entries[..SPECIALS.len()]
                .iter()
                .zip(&other.entries[..SPECIALS.len()])
                .all(|(a, b)| a.0 == b.0)
    }
}

/// Counts tokens of a segmented corpus; order is descending count, then
/// ascending token string.
pub fn build_vocab<I, L, S>(corpus: I) -> Vocabulary
where
    I: IntoIterator<Item = L>,
    L: AsRef<[S]>,
    S: AsRef<str>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    for line in corpus {
        for tok in line.as_ref() {
            let tok = tok.as_ref();
            if !SPECIALS.contains(&tok) {
                *counts.entry(tok.to_owned()).or_default() += 1;
            }
        }
    }
    let mut entries: Vec<_> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_entries(entries).expect("counts have unique keys")
}

/// Union of `base` and `joint`: every base token keeps its id, joint tokens
/// missing from base are appended in joint order. Returns the new
/// vocabulary and the `(token, id)` of each appended entry.
pub fn extend_vocab(base: &Vocabulary, joint: &Vocabulary) -> Result<(Vocabulary, Vec<(String, u32)>)> {
    if !base.specials_match(joint) {
        return Err(Error::ConflictingSpecials("base and joint vocabularies disagree on specials".into()));
    }
    let mut out = base.clone();
    let mut report = Vec::new();
    for (tok, count) in joint.tokens() {
        if !out.contains(tok) {
            let id = out.push(tok.to_owned(), count);
            report.push((tok.to_owned(), id));
        }
    }
    Ok((out, report))
}
