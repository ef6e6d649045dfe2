use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Most frequent mid-sentence casing per lowercased token.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CasingModel {
    /// lowercased token -> (best surface form, number of mid-sentence occurrences of the key)
    table: HashMap<String, (String, u64)>,
    total_tokens: u64,
}

fn is_sentence_end(tok: &str) -> bool {
    matches!(tok, "." | "!" | "?" | ":" | "...")
}

fn is_punct(tok: &str) -> bool {
    !tok.chars().any(char::is_alphanumeric)
}

/// Positions whose casing is uninformative: the first word of the line and
/// the first word after sentence-ending punctuation. Leading punctuation
/// (opening quotes, brackets) is skipped.
pub fn sentence_initial_positions<S: AsRef<str>>(tokens: &[S]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut at_start = true;
    for (i, tok) in tokens.iter().enumerate() {
        let tok = tok.as_ref();
        if is_punct(tok) {
            if is_sentence_end(tok) {
                at_start = true;
            }
            continue;
        }
        if at_start {
            out.push(i);
            at_start = false;
        }
    }
    out
}

pub fn train_truecaser<I, S>(corpus: I) -> Result<CasingModel>
where
    I: IntoIterator,
    I::Item: AsRef<[S]>,
    S: AsRef<str>,
{
    let mut surface_counts: HashMap<String, HashMap<String, u64>> = HashMap::new();
    let mut saw_any = false;
    for sentence in corpus {
        let sentence = sentence.as_ref();
        saw_any |= !sentence.is_empty();
        let initial = sentence_initial_positions(sentence);
        for (i, tok) in sentence.iter().enumerate() {
            if initial.contains(&i) {
                continue;
            }
            let tok = tok.as_ref();
            *surface_counts
                .entry(tok.to_lowercase())
                .or_default()
                .entry(tok.to_owned())
                .or_default() += 1;
        }
    }
    if !saw_any {
        return Err(Error::EmptyTrainingData);
    }
    let mut model = CasingModel::default();
    for (key, forms) in surface_counts {
        let total: u64 = forms.values().sum();
        // Highest count wins; ties go to the smallest string in code-point order.
        let best = forms
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
            .map(|(s, _)| s)
            .expect("nonempty");
        model.total_tokens += total;
        model.table.insert(key, (best, total));
    }
    Ok(model)
}

impl CasingModel {
    pub fn best(&self, token: &str) -> Option<&str> {
        self.table.get(&token.to_lowercase()).map(|(s, _)| s.as_str())
    }

    pub fn count(&self, token: &str) -> u64 {
        self.table.get(&token.to_lowercase()).map_or(0, |e| e.1)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// `surface<TAB>count` lines, sorted for reproducible output.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<_> = self.table.values().collect();
        rows.sort();
        let mut out = String::new();
        for (surface, count) in rows {
            let _ = writeln!(out, "{surface}\t{count}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut model = CasingModel::default();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (surface, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::format("casing model", format!("line {}: missing tab", n + 1)))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| Error::format("casing model", format!("line {}: bad count", n + 1)))?;
            if count == 0 {
                return Err(Error::format("casing model", format!("line {}: zero count", n + 1)));
            }
            model.total_tokens += count;
            model.table.insert(surface.to_lowercase(), (surface.to_owned(), count));
        }
        Ok(model)
    }
}

/// Replaces sentence-initial tokens with their most frequent casing.
/// Unknown tokens and all other positions are left unchanged.
pub fn truecase<S: AsRef<str>>(tokens: &[S], model: &CasingModel) -> Vec<String> {
    let mut out: Vec<String> = tokens.iter().map(|t| t.as_ref().to_owned()).collect();
    for i in sentence_initial_positions(tokens) {
        if let Some(best) = model.best(&out[i]) {
            out[i] = best.to_owned();
        }
    }
    out
}
