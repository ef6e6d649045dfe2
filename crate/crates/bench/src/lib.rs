//! Fixtures shared by the benchmarks.

use rand::Rng as _;
use unmt_core::rng;

/// Random lines of lowercase pseudo-words with a skewed word distribution.
pub fn word_corpus(seed: u64, lines: usize, words_per_line: usize, types: usize) -> Vec<Vec<String>> {
    let mut r = rng::rng(seed);
    let lexicon: Vec<String> = (0..types)
        .map(|_| {
            let len = r.random_range(2..9);
            (0..len).map(|_| (b'a' + r.random_range(0..12u8)) as char).collect()
        })
        .collect();
    (0..lines)
        .map(|_| {
            (0..words_per_line)
                .map(|_| {
                    // Squaring a uniform draw favours low indices.
                    let u: f64 = r.random();
                    lexicon[((u * u) * types as f64) as usize].clone()
                })
                .collect()
        })
        .collect()
}

/// Random token-id sentences over `vocab` ids, skipping the special range.
pub fn id_sentences(seed: u64, n: usize, len: usize, vocab: usize) -> Vec<Vec<u32>> {
    let mut r = rng::rng(seed);
    (0..n).map(|_| (0..len).map(|_| r.random_range(5..vocab as u32)).collect()).collect()
}
