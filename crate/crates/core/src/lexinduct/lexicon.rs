use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::EmbeddingTable;
use crate::error::{Error, Result};

const BLOCK_ROWS: usize = 256;

/// Source word → candidates ranked by non-increasing score.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TranslationLexicon {
    entries: BTreeMap<String, Vec<(String, f64)>>,
}

impl TranslationLexicon {
    /// One candidate per source word with score 1.
    pub fn from_pairs<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let entries = pairs.into_iter().map(|(a, b)| (a.into(), vec![(b.into(), 1.0)])).collect();
        TranslationLexicon { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[(String, f64)]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// "src\ttgt\tscore" lines, entries in key order, candidates in rank order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (src, cands) in &self.entries {
            for (tgt, score) in cands {
                let _ = writeln!(s, "{src}\t{tgt}\t{score}");
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            let [src, tgt, score] = f[..] else {
                return Err(Error::format("lexicon", format!("line {}: expected 3 fields", n + 1)));
            };
            let score: f64 = score
                .parse()
                .map_err(|_| Error::format("lexicon", format!("line {}: bad score", n + 1)))?;
            entries.entry(src.to_owned()).or_default().push((tgt.to_owned(), score));
        }
        Ok(TranslationLexicon { entries })
    }
}

fn by_score_then_id(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// For each source word, its `k` nearest target words by cosine, ties broken
/// by target row index.
pub fn induce_lexicon(source: &EmbeddingTable, target: &EmbeddingTable, k: usize) -> Result<TranslationLexicon> {
    if source.dim() != target.dim() {
        return Err(Error::ShapeMismatch {
            name: "embedding dim".into(),
            expected: vec![source.dim()],
            got: vec![target.dim()],
        });
    }
    let k = k.min(target.len());
    let mut entries = BTreeMap::new();
    if k == 0 {
        return Ok(TranslationLexicon { entries });
    }
    let ty = target.matrix().transpose();
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(target.len());
    for start in (0..source.len()).step_by(BLOCK_ROWS) {
        let rows = BLOCK_ROWS.min(source.len() - start);
        let block: DMatrix<f64> = source.matrix().rows(start, rows) * &ty;
        for r in 0..rows {
            scored.clear();
            scored.extend(block.row(r).iter().enumerate().map(|(j, &s)| (s.clamp(-1.0, 1.0), j)));
            if k < scored.len() {
                scored.select_nth_unstable_by(k - 1, by_score_then_id);
                scored.truncate(k);
            }
            scored.sort_by(by_score_then_id);
            let cands = scored
                .iter()
                .map(|&(s, j)| (target.words()[j].clone(), s))
                .collect();
            entries.insert(source.words()[start + r].clone(), cands);
        }
    }
    Ok(TranslationLexicon { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(words: &[&str], rows: &[f64]) -> EmbeddingTable {
        let d = rows.len() / words.len();
        EmbeddingTable::new(
            words.iter().map(|w| w.to_string()).collect(),
            DMatrix::from_row_slice(words.len(), d, rows),
        )
        .unwrap()
    }

    #[test]
    fn self_lexicon_maps_to_itself() {
        let t = table(&["a", "b", "c"], &[1., 0., 0.6, 0.8, -1., 0.1]);
        let lex = induce_lexicon(&t, &t, 1).unwrap();
        for w in ["a", "b", "c"] {
            let c = lex.get(w).unwrap();
            assert_eq!(c[0].0, w);
            assert!((c[0].1 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn k_clamped_and_ties_by_id() {
        let s = table(&["q"], &[1., 0.]);
        let t = table(&["x", "y", "z"], &[0., 1., 0., -1., 1., 0.]);
        let lex = induce_lexicon(&s, &t, 10).unwrap();
        let c = lex.get("q").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c[0].0, "z");
        assert_eq!((c[1].0.as_str(), c[2].0.as_str()), ("x", "y"));
    }

    #[test]
    fn text_round_trip() {
        let lex = TranslationLexicon::from_pairs([("a", "b"), ("c", "d")]);
        assert_eq!(TranslationLexicon::from_text(&lex.to_text()).unwrap(), lex);
        assert!(TranslationLexicon::from_text("a\tb\n").is_err());
    }
}
