use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt::Write as _;

use rand::Rng as _;

use super::DropoutParams;
use crate::error::{Error, Result};
use crate::rng;

/// Suffix marking the last subword of a word.
pub const END_OF_WORD: &str = "</w>";

/// Ordered merge rules; the rank of a merge is its position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeTable {
    merges: Vec<(String, String)>,
    ranks: HashMap<String, HashMap<String, usize>>,
}

impl MergeTable {
    pub fn new(merges: Vec<(String, String)>) -> Result<Self> {
        let mut ranks: HashMap<String, HashMap<String, usize>> = HashMap::new();
        for (rank, (left, right)) in merges.iter().enumerate() {
            if left.is_empty() || right.is_empty() {
                return Err(Error::format("merge table", format!("empty symbol at rank {rank}")));
            }
            if ranks.entry(left.clone()).or_default().insert(right.clone(), rank).is_some() {
                return Err(Error::format("merge table", format!("duplicate pair {left} {right}")));
            }
        }
        Ok(MergeTable { merges, ranks })
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn rank(&self, left: &str, right: &str) -> Option<usize> {
        self.ranks.get(left)?.get(right).copied()
    }

    /// subword-nmt layout: a `#version` header, then `left right` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("#version: 0.2\n");
        for (l, r) in &self.merges {
            let _ = writeln!(out, "{l} {r}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut merges = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.starts_with("#version") || line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) => merges.push((l.to_owned(), r.to_owned())),
                _ => return Err(Error::format("merge table", format!("line {}: expected two symbols", n + 1))),
            }
        }
        Self::new(merges)
    }
}

/// Characters of `word`, the last one carrying the end-of-word marker.
pub fn word_symbols(word: &str) -> Vec<String> {
    let mut syms: Vec<String> = word.chars().map(String::from).collect();
    if let Some(last) = syms.last_mut() {
        last.push_str(END_OF_WORD);
    }
    syms
}

type Pair = (u32, u32);

struct Learner {
    symbols: Vec<String>,
    symbol_ids: HashMap<String, u32>,
    words: Vec<(Vec<u32>, i64)>,
    pair_counts: HashMap<Pair, i64>,
    pair_words: HashMap<Pair, HashSet<usize>>,
    heap: BinaryHeap<(i64, Reverse<(String, String)>, Pair)>,
}

impl Learner {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.symbol_ids.get(s) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(s.to_owned());
        self.symbol_ids.insert(s.to_owned(), id);
        id
    }

    fn push(&mut self, pair: Pair) {
        let count = self.pair_counts.get(&pair).copied().unwrap_or(0);
        if count > 0 {
            let key = (self.symbols[pair.0 as usize].clone(), self.symbols[pair.1 as usize].clone());
            self.heap.push((count, Reverse(key), pair));
        }
    }

    fn add_word_pairs(&mut self, w: usize, sign: i64, touched: &mut HashSet<Pair>) {
        let (syms, freq) = &self.words[w];
        for win in syms.windows(2) {
            let pair = (win[0], win[1]);
            *self.pair_counts.entry(pair).or_default() += sign * freq;
            if sign > 0 {
                self.pair_words.entry(pair).or_default().insert(w);
            }
            touched.insert(pair);
        }
    }

    /// Highest count, then smallest (left, right) in code-point order.
    fn pop_best(&mut self) -> Option<(Pair, i64)> {
        while let Some((count, _, pair)) = self.heap.pop() {
            if self.pair_counts.get(&pair).copied() == Some(count) {
                return Some((pair, count));
            }
        }
        None
    }
}

/// Greedy BPE learning over the word-frequency dictionary of `corpus`.
///
/// Each step merges the most frequent adjacent symbol pair; ties are broken
/// by the lexicographically smallest `(left, right)`. Learning stops after
/// `n_merges` merges or when no pair occurs at least twice.
pub fn learn_bpe<I, S>(corpus: I, n_merges: usize) -> Result<MergeTable>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut freqs: HashMap<String, i64> = HashMap::new();
    for w in corpus {
        let w = w.as_ref();
        if !w.is_empty() {
            *freqs.entry(w.to_owned()).or_default() += 1;
        }
    }
    if freqs.is_empty() {
        return Err(Error::EmptyTrainingData);
    }
    let mut sorted: Vec<_> = freqs.into_iter().collect();
    sorted.sort();

    let mut l = Learner {
        symbols: Vec::new(),
        symbol_ids: HashMap::new(),
        words: Vec::with_capacity(sorted.len()),
        pair_counts: HashMap::new(),
        pair_words: HashMap::new(),
        heap: BinaryHeap::new(),
    };
    for (word, freq) in &sorted {
        let ids = word_symbols(word).iter().map(|s| l.intern(s)).collect();
        l.words.push((ids, *freq));
    }
    let mut touched = HashSet::new();
    for w in 0..l.words.len() {
        l.add_word_pairs(w, 1, &mut touched);
    }
    let mut all: Vec<Pair> = touched.drain().collect();
    all.sort_unstable();
    for pair in all {
        l.push(pair);
    }

    let mut merges = Vec::with_capacity(n_merges);
    while merges.len() < n_merges {
        let Some((pair, count)) = l.pop_best() else { break };
        if count < 2 {
            break;
        }
        let left = l.symbols[pair.0 as usize].clone();
        let right = l.symbols[pair.1 as usize].clone();
        let merged = l.intern(&format!("{left}{right}"));
        merges.push((left, right));

        let mut affected: Vec<usize> = l.pair_words.remove(&pair).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        for w in affected {
            if !l.words[w].0.windows(2).any(|p| (p[0], p[1]) == pair) {
                continue;
            }
            l.add_word_pairs(w, -1, &mut touched);
            let old = std::mem::take(&mut l.words[w].0);
            let mut new = Vec::with_capacity(old.len());
            let mut i = 0;
            while i < old.len() {
                if i + 1 < old.len() && (old[i], old[i + 1]) == pair {
                    new.push(merged);
                    i += 2;
                } else {
                    new.push(old[i]);
                    i += 1;
                }
            }
            l.words[w].0 = new;
            l.add_word_pairs(w, 1, &mut touched);
        }
        l.pair_counts.remove(&pair);
        let mut changed: Vec<Pair> = touched.drain().collect();
        changed.sort_unstable();
        for p in changed {
            if l.pair_counts.get(&p).is_some_and(|&c| c <= 0) {
                l.pair_counts.remove(&p);
            }
            l.push(p);
        }
    }
    MergeTable::new(merges)
}

/// Applies the merge table to one word. With probability `p` each
/// applicable merge site is skipped at every step, independently; `p = 0`
/// is plain deterministic BPE and `p = 1` leaves the word as characters.
pub fn segment_with_rng(word: &str, table: &MergeTable, p: f64, rng: &mut rng::Rng) -> Vec<String> {
    let mut syms = word_symbols(word);
    loop {
        let mut best: Option<(usize, usize)> = None;
        for i in 0..syms.len().saturating_sub(1) {
            if let Some(r) = table.rank(&syms[i], &syms[i + 1]) {
                if p > 0.0 && rng.random::<f64>() < p {
                    continue;
                }
                if best.is_none_or(|(br, _)| r < br) {
                    best = Some((r, i));
                }
            }
        }
        let Some((_, i)) = best else { break };
        let right = syms.remove(i + 1);
        syms[i].push_str(&right);
    }
    syms
}

pub fn segment(word: &str, table: &MergeTable, drop: &DropoutParams) -> Vec<String> {
    let mut rng = rng::rng(drop.seed);
    segment_with_rng(word, table, drop.p, &mut rng)
}

/// Deterministic segmentation with a per-word cache.
#[derive(Debug, Clone)]
pub struct Segmenter {
    table: MergeTable,
    cache: HashMap<String, Vec<String>>,
}

impl Segmenter {
    pub fn new(table: MergeTable) -> Self {
        Segmenter {
            table,
            cache: HashMap::new(),
        }
    }

    pub fn table(&self) -> &MergeTable {
        &self.table
    }

    pub fn segment_word(&mut self, word: &str) -> &[String] {
        if !self.cache.contains_key(word) {
            let mut dummy = rng::rng(0);
            let segs = segment_with_rng(word, &self.table, 0.0, &mut dummy);
            self.cache.insert(word.to_owned(), segs);
        }
        &self.cache[word]
    }

    pub fn segment_sentence<S: AsRef<str>>(&mut self, words: &[S]) -> Vec<String> {
        let mut out = Vec::new();
        for w in words {
            out.extend_from_slice(self.segment_word(w.as_ref()));
        }
        out
    }
}

/// Rebuilds words from subwords by concatenating up to each end marker.
/// A trailing unterminated run still forms a word.
pub fn join_subwords<S: AsRef<str>>(subwords: &[S]) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    for s in subwords {
        let s = s.as_ref();
        match s.strip_suffix(END_OF_WORD) {
            Some(stem) => {
                cur.push_str(stem);
                words.push(std::mem::take(&mut cur));
            }
            None => cur.push_str(s),
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}
