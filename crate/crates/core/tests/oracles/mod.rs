//! Independent reference implementations used to freeze expected values.
//! Nothing here calls into the code paths being checked.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const END: &str = "</w>";

fn symbols(word: &str) -> Vec<String> {
    let mut s: Vec<String> = word.chars().map(|c| c.to_string()).collect();
    if let Some(last) = s.last_mut() {
        last.push_str(END);
    }
    s
}

fn merge_all(syms: &[String], left: &str, right: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
            out.push(format!("{left}{right}"));
            i += 2;
        } else {
            out.push(syms[i].clone());
            i += 1;
        }
    }
    out
}

/// Quadratic BPE learner: recount every pair from scratch each iteration.
pub fn brute_force_bpe(corpus: &[String], n_merges: usize) -> Vec<(String, String)> {
    let mut freq: BTreeMap<String, u64> = BTreeMap::new();
    for w in corpus {
        *freq.entry(w.clone()).or_default() += 1;
    }
    let mut words: Vec<(Vec<String>, u64)> = freq.iter().map(|(w, f)| (symbols(w), *f)).collect();
    let mut merges = Vec::new();
    for _ in 0..n_merges {
        let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (syms, f) in &words {
            for i in 0..syms.len().saturating_sub(1) {
                *counts.entry((syms[i].clone(), syms[i + 1].clone())).or_default() += f;
            }
        }
        // BTreeMap iterates pairs in ascending order, so the first maximum
        // is the lexicographically smallest one.
        let mut best: Option<(&(String, String), u64)> = None;
        for (pair, &c) in &counts {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((pair, c));
            }
        }
        let Some(((l, r), c)) = best else { break };
        if c < 2 {
            break;
        }
        let (l, r) = (l.clone(), r.clone());
        for (syms, _) in words.iter_mut() {
            *syms = merge_all(syms, &l, &r);
        }
        merges.push((l, r));
    }
    merges
}

/// Applies merges rule by rule in rank order, each to all occurrences.
pub fn apply_in_rank_order(word: &str, merges: &[(String, String)]) -> Vec<String> {
    let mut syms = symbols(word);
    for (l, r) in merges {
        syms = merge_all(&syms, l, r);
    }
    syms
}

/// Random corpus over a small alphabet so pairs collide often.
pub fn random_corpus(seed: u64, distinct: usize, tokens: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphabet: Vec<char> = "abcdeéß".chars().collect();
    let types: Vec<String> = (0..distinct)
        .map(|_| {
            let len = rng.random_range(1..8);
            (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
        })
        .collect();
    (0..tokens).map(|_| types[rng.random_range(0..types.len())].clone()).collect()
}

pub fn hash_counts<'a>(lines: impl IntoIterator<Item = &'a Vec<String>>) -> HashMap<String, u64> {
    let mut m = HashMap::new();
    for line in lines {
        for t in line {
            *m.entry(t.clone()).or_default() += 1;
        }
    }
    m
}

/// Random orthogonal matrix by classical Gram-Schmidt on Gaussian columns,
/// row-major `d × d`.
pub fn random_orthogonal(d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::StandardNormal;
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(normal)).collect();
        for _ in 0..2 {
            for c in &cols {
                let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(c) {
                    *x -= dot * y;
                }
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    (0..d).map(|i| (0..d).map(|j| cols[j][i]).collect()).collect()
}

pub fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect())
        .collect()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|row| (0..b[0].len()).map(|j| row.iter().zip(b).map(|(x, br)| x * br[j]).sum()).collect())
        .collect()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Exhaustive cosine scan; ties go to the lower target index.
pub fn nearest_by_cosine(src: &[f64], targets: &[Vec<f64>], k: usize) -> Vec<(usize, f64)> {
    let s = unit(src);
    let mut all: Vec<(usize, f64)> = targets
        .iter()
        .enumerate()
        .map(|(j, t)| (j, unit(t).iter().zip(&s).map(|(a, b)| a * b).sum()))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Bigram log-probability with additive smoothing from plain dictionaries.
/// The event set is every training word plus `<unk>` and `</s>`.
pub fn bigram_logprob(corpus: &[Vec<String>], delta: f64, sentence: &[String]) -> f64 {
    let mut pair: HashMap<(String, String), f64> = HashMap::new();
    let mut ctx: HashMap<String, f64> = HashMap::new();
    let mut words: std::collections::HashSet<String> = std::collections::HashSet::new();
    for line in corpus {
        let mut prev = "<s>".to_string();
        for w in line.iter().cloned().chain(["</s>".to_string()]) {
            words.insert(w.clone());
            *pair.entry((prev.clone(), w.clone())).or_default() += 1.0;
            *ctx.entry(prev).or_default() += 1.0;
            prev = w;
        }
    }
    words.insert("<unk>".into());
    let events = words.len() as f64;
    let norm = |w: &String| if words.contains(w) && w != "</s>" { w.clone() } else { "<unk>".into() };
    let mut prev = "<s>".to_string();
    let mut total = 0.0;
    let seq: Vec<String> = sentence.iter().map(norm).chain(["</s>".to_string()]).collect();
    for w in seq {
        let c = pair.get(&(prev.clone(), w.clone())).copied().unwrap_or(0.0);
        let t = ctx.get(&prev).copied().unwrap_or(0.0);
        total += ((c + delta) / (t + delta * events)).ln();
        prev = w;
    }
    total
}
