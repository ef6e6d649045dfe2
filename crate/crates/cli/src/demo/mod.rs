//! Deterministic cipher language pair for end-to-end runs.
//!
//! The "high" side is sampled from a word bigram chain fitted to a short
//! fable text; the "low" side is the same kind of text passed through a
//! word-substitution cipher that leaves about 12% of word types unchanged.
//! Embeddings for both sides are synthetic: a random vector per word, and
//! for the low side a rotated copy with frequency-dependent noise.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom as _;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use unmt_core::decode::DecodeParams;
use unmt_core::lexinduct::EmbeddingTable;
use unmt_core::model::ModelConfig;
use unmt_core::trainer::{AdamConfig, TrainConfig};

use crate::config::{Languages, LexiconConfig, Paths, PipelineConfig, Schedule, Systems, SubwordConfig};
use unmt_core::rng::{self, Rng};
use unmt_core::textnorm::detokenize;

const FABLES: &str = include_str!("fables.txt");
const BOS: &str = "<s>";
const EOS: &str = "</s>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoConfig {
    pub seed: u64,
    pub train_lines: usize,
    pub valid_lines: usize,
    pub test_lines: usize,
    pub identical_fraction: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub emb_dim: usize,
    /// Noise added to every low-side embedding before rotation.
    pub noise_floor: f64,
    /// Extra noise scaled by `1 / sqrt(count)` of the word in the fable text.
    pub noise_rare: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            seed: 1,
            train_lines: 10_000,
            valid_lines: 200,
            test_lines: 500,
            identical_fraction: 0.12,
            min_tokens: 4,
            max_tokens: 30,
            emb_dim: 32,
            noise_floor: 0.3,
            noise_rare: 2.0,
        }
    }
}

fn split_tokens(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in line.split_whitespace() {
        let trimmed = word.trim_end_matches(|c: char| c.is_ascii_punctuation());
        if !trimmed.is_empty() {
            out.push(trimmed.to_owned());
        }
        out.extend(word[trimmed.len()..].chars().map(String::from));
    }
    out
}

/// The fable text as lowercase token lists, one sentence per line.
pub fn source_sentences() -> Vec<Vec<String>> {
    FABLES.lines().filter(|l| !l.trim().is_empty()).map(split_tokens).collect()
}

/// Word bigram chain with `<s>`/`</s>` boundaries.
#[derive(Debug, Clone)]
pub struct BigramChain {
    next: HashMap<String, Vec<(String, u32)>>,
}

impl BigramChain {
    pub fn fit(sentences: &[Vec<String>]) -> Self {
        let mut counts: HashMap<String, BTreeMap<String, u32>> = HashMap::new();
        for s in sentences {
            let padded = std::iter::once(BOS).chain(s.iter().map(String::as_str)).chain(std::iter::once(EOS));
            let padded: Vec<&str> = padded.collect();
            for w in padded.windows(2) {
                *counts.entry(w[0].to_owned()).or_default().entry(w[1].to_owned()).or_default() += 1;
            }
        }
        let next = counts.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect();
        BigramChain { next }
    }

    fn step(&self, prev: &str, r: &mut Rng) -> &str {
        let options = &self.next[prev];
        let total: u32 = options.iter().map(|o| o.1).sum();
        let mut pick = r.random_range(0..total);
        for (w, c) in options {
            if pick < *c {
                return w;
            }
            pick -= c;
        }
        unreachable!("pick below total")
    }

    /// Samples one sentence with a length in `[min, max]` tokens.
    pub fn sample(&self, r: &mut Rng, min: usize, max: usize) -> Vec<String> {
        loop {
            let mut out = Vec::new();
            let mut prev = BOS;
            loop {
                let w = self.step(prev, r);
                if w == EOS || out.len() > max {
                    break;
                }
                out.push(w.to_owned());
                prev = w;
            }
            if (min..=max).contains(&out.len()) {
                return out;
            }
        }
    }
}

fn is_word(tok: &str) -> bool {
    tok.chars().any(char::is_alphanumeric)
}

fn capitalize(tok: &str) -> String {
    let mut c = tok.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Raw text line: capitalized first word, conventional spacing.
pub fn render(tokens: &[String]) -> String {
    let mut toks = tokens.to_vec();
    if let Some(first) = toks.first_mut() {
        *first = capitalize(first);
    }
    detokenize(&toks)
}

/// Word-substitution cipher over lowercase word types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cipher {
    pub table: BTreeMap<String, String>,
}

fn pseudo_word(len: usize, r: &mut Rng) -> String {
    const CONS: &[u8] = b"bcdfghjklmnprstvz";
    const VOWELS: &[u8] = b"aeiouy";
    let syllables = len.div_ceil(2).clamp(1, 5);
    let mut s = String::new();
    for _ in 0..syllables {
        s.push(CONS[r.random_range(0..CONS.len())] as char);
        s.push(VOWELS[r.random_range(0..VOWELS.len())] as char);
    }
    if r.random_bool(0.4) {
        s.push(CONS[r.random_range(0..CONS.len())] as char);
    }
    s
}

impl Cipher {
    /// Punctuation maps to itself; further word types are kept identical
    /// until `identical_fraction` of all types are; the rest get fresh
    /// pseudo-words.
    pub fn build(types: &BTreeSet<String>, identical_fraction: f64, seed: u64) -> Self {
        let mut r = rng::rng(seed);
        let target = (identical_fraction * types.len() as f64).round() as usize;
        let punct: Vec<&String> = types.iter().filter(|t| !is_word(t)).collect();
        let mut words: Vec<&String> = types.iter().filter(|t| is_word(t)).collect();
        words.shuffle(&mut r);
        let keep = target.saturating_sub(punct.len()).min(words.len());
        let mut table = BTreeMap::new();
        let mut used: BTreeSet<String> = types.clone();
        for t in punct.iter().chain(&words[..keep]) {
            table.insert((*t).clone(), (*t).clone());
        }
        let mut rest: Vec<&String> = words[keep..].to_vec();
        rest.sort();
        for t in rest {
            let mut c = pseudo_word(t.chars().count(), &mut r);
            while used.contains(&c) {
                c = pseudo_word(t.chars().count() + 1, &mut r);
            }
            used.insert(c.clone());
            table.insert(t.clone(), c);
        }
        Cipher { table }
    }

    pub fn apply(&self, tokens: &[String]) -> Vec<String> {
        tokens.iter().map(|t| self.table.get(t).cloned().unwrap_or_else(|| t.clone())).collect()
    }

    pub fn identical_fraction(&self) -> f64 {
        self.table.iter().filter(|(a, b)| a == b).count() as f64 / self.table.len() as f64
    }

    /// `high<TAB>low` lines for lowercase and capitalized forms.
    pub fn lexicon_text(&self) -> String {
        let mut out = String::new();
        for (a, b) in &self.table {
            out.push_str(&format!("{a}\t{b}\t1\n"));
            if is_word(a) {
                out.push_str(&format!("{}\t{}\t1\n", capitalize(a), capitalize(b)));
            }
        }
        out
    }
}

fn random_orthogonal(d: usize, r: &mut Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// Synthetic embedding tables: high rows are Gaussian; low rows are the
/// matching high rows plus noise, rotated by a hidden orthogonal matrix.
pub fn synthetic_embeddings(
    cipher: &Cipher,
    counts: &HashMap<String, usize>,
    cfg: &DemoConfig,
) -> (EmbeddingTable, EmbeddingTable, DMatrix<f64>) {
    let d = cfg.emb_dim;
    let mut r = rng::rng(rng::derive_named(cfg.seed, "embeddings"));
    let rotation = random_orthogonal(d, &mut r);
    let words: Vec<&String> = cipher.table.keys().collect();
    let high = DMatrix::from_fn(words.len(), d, |_, _| r.sample::<f64, _>(StandardNormal));
    let mut low = high.clone();
    for (i, w) in words.iter().enumerate() {
        let c = counts.get(*w).copied().unwrap_or(1).max(1) as f64;
        let sigma = cfg.noise_floor + cfg.noise_rare / c.sqrt();
        let norm = high.row(i).norm();
        for j in 0..d {
            low[(i, j)] += sigma * norm / (d as f64).sqrt() * r.sample::<f64, _>(StandardNormal);
        }
    }
    let low = low * &rotation;
    let high_table =
        EmbeddingTable::new(words.iter().map(|w| (*w).clone()).collect(), high).expect("valid embedding table");
    let low_table =
        EmbeddingTable::new(words.iter().map(|w| cipher.table[*w].clone()).collect(), low).expect("valid embedding table");
    (high_table, low_table, rotation)
}

#[derive(Debug, Clone)]
pub struct DemoData {
    pub high_train: Vec<String>,
    pub low_train: Vec<String>,
    pub valid_high: Vec<String>,
    pub valid_low: Vec<String>,
    pub test_high: Vec<String>,
    pub test_low: Vec<String>,
    pub cipher: Cipher,
    pub emb_high: EmbeddingTable,
    pub emb_low: EmbeddingTable,
}

pub fn generate(cfg: &DemoConfig) -> DemoData {
    let source = source_sentences();
    let chain = BigramChain::fit(&source);
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in source.iter().flatten() {
        *counts.entry(t.clone()).or_default() += 1;
    }
    let types: BTreeSet<String> = counts.keys().cloned().collect();
    let cipher = Cipher::build(&types, cfg.identical_fraction, rng::derive_named(cfg.seed, "cipher"));
    let sample = |name: &str, n: usize| -> Vec<Vec<String>> {
        let mut r = rng::rng(rng::derive_named(cfg.seed, name));
        (0..n).map(|_| chain.sample(&mut r, cfg.min_tokens, cfg.max_tokens)).collect()
    };
    let high = sample("high-train", cfg.train_lines);
    let low = sample("low-train", cfg.train_lines);
    let valid = sample("valid", cfg.valid_lines);
    let test = sample("test", cfg.test_lines);
    let plain = |v: &[Vec<String>]| v.iter().map(|s| render(s)).collect::<Vec<_>>();
    let ciphered = |v: &[Vec<String>]| v.iter().map(|s| render(&cipher.apply(s))).collect::<Vec<_>>();
    let (emb_high, emb_low, _) = synthetic_embeddings(&cipher, &counts, cfg);
    DemoData {
        high_train: plain(&high),
        low_train: ciphered(&low),
        valid_high: plain(&valid),
        valid_low: ciphered(&valid),
        test_high: plain(&test),
        test_low: ciphered(&test),
        emb_high,
        emb_low,
        cipher,
    }
}

/// File locations written by [`write_demo`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoPaths {
    pub high_train: PathBuf,
    pub low_train: PathBuf,
    pub valid_high: PathBuf,
    pub valid_low: PathBuf,
    pub test_high: PathBuf,
    pub test_low: PathBuf,
    pub emb_high: PathBuf,
    pub emb_low: PathBuf,
    pub true_lexicon: PathBuf,
}

fn write_lines(path: &Path, lines: &[String]) -> std::io::Result<()> {
    let mut text = lines.join("\n");
    text.push('\n');
    fs::write(path, text)
}

pub fn write_demo(dir: &Path, cfg: &DemoConfig) -> std::io::Result<DemoPaths> {
    fs::create_dir_all(dir)?;
    let data = generate(cfg);
    let p = |name: &str| dir.join(name);
    let paths = DemoPaths {
        high_train: p("train.high"),
        low_train: p("train.low"),
        valid_high: p("valid.high"),
        valid_low: p("valid.low"),
        test_high: p("test.high"),
        test_low: p("test.low"),
        emb_high: p("emb.high.vec"),
        emb_low: p("emb.low.vec"),
        true_lexicon: p("lexicon.true.tsv"),
    };
    write_lines(&paths.high_train, &data.high_train)?;
    write_lines(&paths.low_train, &data.low_train)?;
    write_lines(&paths.valid_high, &data.valid_high)?;
    write_lines(&paths.valid_low, &data.valid_low)?;
    write_lines(&paths.test_high, &data.test_high)?;
    write_lines(&paths.test_low, &data.test_low)?;
    fs::write(&paths.emb_high, data.emb_high.to_text())?;
    fs::write(&paths.emb_low, data.emb_low.to_text())?;
    fs::write(&paths.true_lexicon, data.cipher.lexicon_text())?;
    Ok(paths)
}

/// Pipeline config sized for the demo corpus on one CPU core.
pub fn demo_config(paths: &DemoPaths, workdir: PathBuf, seed: u64) -> PipelineConfig {
    let s = Schedule {
        pretrain_mass_steps: 600,
        finetune_mass_steps: 600,
        finetune_with_adapters: false,
        unmt_steps: 600,
        pseudo_steps: 4000,
        curriculum_trials: 4,
        curriculum_updates: 50,
        curriculum_final_steps: 200,
        offline_bt_steps: 200,
        offline_bt_lines: 500,
        dropout_steps: 1000,
        validate_every: 500,
        valid_limit: 100,
    };
    PipelineConfig {
        workdir,
        seed,
        paths: Paths {
            high_train: paths.high_train.clone(),
            low_train: paths.low_train.clone(),
            valid_high: paths.valid_high.clone(),
            valid_low: paths.valid_low.clone(),
            test_high: paths.test_high.clone(),
            test_low: paths.test_low.clone(),
            emb_high: paths.emb_high.clone(),
            emb_low: paths.emb_low.clone(),
            true_lexicon: Some(paths.true_lexicon.clone()),
        },
        languages: Languages::default(),
        subword: SubwordConfig { n_merges_high: 400, n_merges_joint: 2000, max_tokens: 40, ..Default::default() },
        lexicon: LexiconConfig::default(),
        model: ModelConfig { max_len: 48, ..ModelConfig::desk(0) },
        train: TrainConfig {
            adam: AdamConfig { base_lr: 3e-3, warmup_steps: 200, ..Default::default() },
            // BT from a model that still ignores its source drowns out the
            // pseudo-parallel signal at 1:1.
            supervised_per_bt: 3,
            ..Default::default()
        },
        schedule: s,
        systems: Systems::default(),
        decode: DecodeParams { max_len: 46, ..Default::default() },
        extra_eval: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DemoConfig {
        DemoConfig { train_lines: 50, valid_lines: 5, test_lines: 5, ..Default::default() }
    }

    #[test]
    fn every_initial_word_also_occurs_mid_sentence() {
        let s = source_sentences();
        let mid: BTreeSet<&String> = s.iter().flat_map(|x| x.iter().skip(1)).collect();
        for x in &s {
            assert!(mid.contains(&x[0]), "{}", x[0]);
        }
    }

    #[test]
    fn cipher_is_injective_with_target_identity_rate() {
        let d = generate(&small());
        let images: BTreeSet<&String> = d.cipher.table.values().collect();
        assert_eq!(images.len(), d.cipher.table.len());
        assert!((d.cipher.identical_fraction() - 0.12).abs() < 0.01);
    }

    #[test]
    fn parallel_sets_are_token_aligned() {
        let d = generate(&small());
        for (h, l) in d.test_high.iter().zip(&d.test_low) {
            assert_eq!(h.split_whitespace().count(), l.split_whitespace().count());
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small());
        let b = generate(&small());
        assert_eq!(a.high_train, b.high_train);
        assert_eq!(a.low_train, b.low_train);
        assert_eq!(a.emb_low.to_text(), b.emb_low.to_text());
    }

    #[test]
    fn render_spacing() {
        let t: Vec<String> = ["the", "fox", ",", "sad", "."].iter().map(|s| s.to_string()).collect();
        assert_eq!(render(&t), "The fox, sad.");
    }
}
