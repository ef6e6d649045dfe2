use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bitext::Direction;
use crate::error::{Error, Result};
use crate::model::{IncrementalDecoder, Model};
use crate::rng::Rng;
use crate::subword::{BOS, EOS, MASK, PAD};

/// Tokens that may never be generated.
const BANNED: [u32; 3] = [PAD, BOS, MASK];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Sample,
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub mode: DecodeMode,
    pub temperature: f64,
    pub beam_size: usize,
    /// Maximum number of generated tokens, `</s>` included.
    pub max_len: usize,
    pub length_penalty: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            mode: DecodeMode::Beam,
            temperature: 0.95,
            beam_size: 5,
            max_len: 100,
            length_penalty: 0.0,
        }
    }
}

impl DecodeParams {
    pub fn greedy(max_len: usize) -> Self {
        DecodeParams { mode: DecodeMode::Greedy, max_len, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 || self.max_len == 0 {
            return Err(Error::InvalidConfig("beam_size and max_len must be at least 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidConfig(format!("temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }
}

/// Next-token scorer over a set of live rows.
pub trait StepScorer {
    fn vocab_size(&self) -> usize;
    fn num_rows(&self) -> usize;
    /// Consumes one token per row and returns next-token log-probabilities
    /// (rows × vocab), or `None` when no further positions are available.
    fn step(&mut self, tokens: &[u32]) -> Option<Array2<f64>>;
    /// Keeps (and possibly duplicates) the rows at `indices`, in order.
    fn select_rows(&mut self, indices: &[usize]);
}

pub struct ModelScorer<'m> {
    decoder: IncrementalDecoder<'m>,
    vocab: usize,
}

impl<'m> ModelScorer<'m> {
    pub fn new(model: &'m Model, sources: &[Vec<u32>], dir: Direction) -> Result<Self> {
        Ok(ModelScorer {
            decoder: IncrementalDecoder::new(model, sources, dir.src, dir.tgt)?,
            vocab: model.config.vocab_size,
        })
    }
}

impl StepScorer for ModelScorer<'_> {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn num_rows(&self) -> usize {
        self.decoder.num_rows()
    }

    fn step(&mut self, tokens: &[u32]) -> Option<Array2<f64>> {
        self.decoder.step(tokens)
    }

    fn select_rows(&mut self, indices: &[usize]) {
        self.decoder.select_rows(indices);
    }
}

/// Averages member probabilities. Computed as
/// `lp₀ + ln(1 + Σᵢ (exp(lpᵢ − lp₀) − 1) / k)`, which is exact when all
/// members agree.
pub struct EnsembleScorer<S> {
    members: Vec<S>,
}

impl<S: StepScorer> EnsembleScorer<S> {
    pub fn new(members: Vec<S>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::InvalidConfig("ensemble needs at least one model".into()));
        };
        let v = first.vocab_size();
        if let Some(m) = members.iter().find(|m| m.vocab_size() != v) {
            return Err(Error::VocabMismatch(format!("ensemble members have {} and {} outputs", v, m.vocab_size())));
        }
        Ok(EnsembleScorer { members })
    }
}

impl<S: StepScorer> StepScorer for EnsembleScorer<S> {
    fn vocab_size(&self) -> usize {
        self.members[0].vocab_size()
    }

    fn num_rows(&self) -> usize {
        self.members[0].num_rows()
    }

    fn step(&mut self, tokens: &[u32]) -> Option<Array2<f64>> {
        let mut outs = Vec::with_capacity(self.members.len());
        for m in &mut self.members {
            outs.push(m.step(tokens)?);
        }
        let k = outs.len() as f64;
        let mut base = outs.swap_remove(0);
        let mut acc = Array2::<f64>::zeros(base.raw_dim());
        for o in &outs {
            ndarray::Zip::from(&mut acc).and(o).and(&base).for_each(|a, &x, &b| *a += (x - b).exp_m1());
        }
        ndarray::Zip::from(&mut base).and(&acc).for_each(|b, &a| *b += (a / k).ln_1p());
        Some(base)
    }

    fn select_rows(&mut self, indices: &[usize]) {
        for m in &mut self.members {
            m.select_rows(indices);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    /// Generated tokens without the final `</s>`.
    pub tokens: Vec<u32>,
    /// Sum of token log-probabilities, `</s>` included when generated.
    pub score: f64,
    /// `max_len` was reached before `</s>`.
    pub truncated: bool,
}

fn mask_banned(row: &mut [f64]) {
    for &b in &BANNED {
        if let Some(v) = row.get_mut(b as usize) {
            *v = f64::NEG_INFINITY;
        }
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Shared loop for per-row token choice (greedy or sampling).
fn pointwise<S: StepScorer>(scorer: &mut S, max_len: usize, mut choose: impl FnMut(&[f64]) -> usize) -> Vec<DecodeOutput> {
    let n = scorer.num_rows();
    let mut outs: Vec<DecodeOutput> = (0..n)
        .map(|_| DecodeOutput { tokens: Vec::new(), score: 0.0, truncated: true })
        .collect();
    let mut live: Vec<usize> = (0..n).collect();
    let mut feed = vec![BOS; n];
    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        let Some(mut lp) = scorer.step(&feed) else { break };
        let mut keep = Vec::with_capacity(live.len());
        let mut next_feed = Vec::with_capacity(live.len());
        for (r, &orig) in live.iter().enumerate() {
            let mut row = lp.row_mut(r);
            let row = row.as_slice_mut().expect("contiguous row");
            mask_banned(row);
            let t = choose(row);
            let out = &mut outs[orig];
            out.score += row[t];
            if t as u32 == EOS {
                out.truncated = false;
            } else {
                out.tokens.push(t as u32);
                keep.push(r);
                next_feed.push(t as u32);
            }
        }
        if keep.len() != live.len() {
            scorer.select_rows(&keep);
            live = keep.iter().map(|&r| live[r]).collect();
        }
        feed = next_feed;
    }
    outs
}

pub fn greedy<S: StepScorer>(scorer: &mut S, max_len: usize) -> Vec<DecodeOutput> {
    pointwise(scorer, max_len, argmax)
}

/// Draws each token from `softmax(logp / temperature)`.
pub fn sample<S: StepScorer>(scorer: &mut S, max_len: usize, temperature: f64, rng: &mut Rng) -> Vec<DecodeOutput> {
    let mut weights = Vec::new();
    pointwise(scorer, max_len, |row| {
        let m = row[argmax(row)];
        weights.clear();
        weights.extend(row.iter().map(|&v| ((v - m) / temperature).exp()));
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (i, &w) in weights.iter().enumerate() {
            if u < w {
                return i;
            }
            u -= w;
        }
        argmax(row)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub score: f64,
    pub finished: bool,
}

fn normalized(score: f64, len: usize, alpha: f64) -> f64 {
    if alpha == 0.0 {
        score
    } else {
        score / ((5.0 + len as f64) / 6.0).powf(alpha)
    }
}

/// Beam search over a scorer holding exactly one row. At each step the
/// `beam` best expansions survive; those ending in `</s>` are set aside as
/// finished. Hypotheses alive at `max_len` are kept as truncated. Returns
/// all finished and truncated hypotheses, best first by length-penalized
/// score.
pub fn beam_search<S: StepScorer>(scorer: &mut S, beam: usize, max_len: usize, length_penalty: f64) -> Vec<Hypothesis> {
    assert_eq!(scorer.num_rows(), 1, "beam search decodes one source at a time");
    let beam = beam.max(1);
    let mut live = vec![Hypothesis { tokens: Vec::new(), score: 0.0, finished: false }];
    let mut done: Vec<Hypothesis> = Vec::new();
    let mut feed = vec![BOS];
    for _ in 0..max_len {
        let Some(mut lp) = scorer.step(&feed) else { break };
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (r, h) in live.iter().enumerate() {
            let mut row = lp.row_mut(r);
            let row = row.as_slice_mut().expect("contiguous row");
            mask_banned(row);
            cands.extend(row.iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(t, &v)| (h.score + v, r, t)));
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0));
        cands.truncate(beam);
        let mut next = Vec::with_capacity(beam);
        let mut keep = Vec::with_capacity(beam);
        feed.clear();
        for (score, r, t) in cands {
            let mut tokens = live[r].tokens.clone();
            if t as u32 == EOS {
                done.push(Hypothesis { tokens, score, finished: true });
            } else {
                tokens.push(t as u32);
                next.push(Hypothesis { tokens, score, finished: false });
                keep.push(r);
                feed.push(t as u32);
            }
        }
        live = next;
        if live.is_empty() {
            break;
        }
        scorer.select_rows(&keep);
    }
    done.extend(live);
    done.sort_by(|a, b| {
        let na = normalized(a.score, a.tokens.len() + a.finished as usize, length_penalty);
        let nb = normalized(b.score, b.tokens.len() + b.finished as usize, length_penalty);
        nb.total_cmp(&na)
    });
    done
}

fn run<S: StepScorer>(
    mut make: impl FnMut(&[Vec<u32>]) -> Result<S>,
    sources: &[Vec<u32>],
    dp: &DecodeParams,
    rng: &mut Rng,
) -> Result<Vec<DecodeOutput>> {
    dp.validate()?;
    if sources.is_empty() {
        return Ok(Vec::new());
    }
    match dp.mode {
        DecodeMode::Greedy => Ok(greedy(&mut make(sources)?, dp.max_len)),
        DecodeMode::Sample => Ok(sample(&mut make(sources)?, dp.max_len, dp.temperature, rng)),
        DecodeMode::Beam => sources
            .iter()
            .map(|s| {
                let mut sc = make(std::slice::from_ref(s))?;
                let best = beam_search(&mut sc, dp.beam_size, dp.max_len, dp.length_penalty)
                    .into_iter()
                    .next()
                    .expect("beam search yields at least one hypothesis");
                Ok(DecodeOutput { tokens: best.tokens, score: best.score, truncated: !best.finished })
            })
            .collect(),
    }
}

/// Decodes a batch of sources with one model.
pub fn decode_batch(model: &Model, sources: &[Vec<u32>], dir: Direction, dp: &DecodeParams, rng: &mut Rng) -> Result<Vec<DecodeOutput>> {
    run(|s| ModelScorer::new(model, s, dir), sources, dp, rng)
}

pub fn decode(model: &Model, source: &[u32], dir: Direction, dp: &DecodeParams, rng: &mut Rng) -> Result<DecodeOutput> {
    let mut out = decode_batch(model, &[source.to_vec()], dir, dp, rng)?;
    Ok(out.remove(0))
}

/// Decodes with the probability-averaged ensemble of `models`.
pub fn ensemble_decode(
    models: &[&Model],
    sources: &[Vec<u32>],
    dir: Direction,
    dp: &DecodeParams,
    rng: &mut Rng,
) -> Result<Vec<DecodeOutput>> {
    run(
        |s| {
            let members = models.iter().map(|m| ModelScorer::new(m, s, dir)).collect::<Result<Vec<_>>>()?;
            EnsembleScorer::new(members)
        },
        sources,
        dp,
        rng,
    )
}
