use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::bt::{online_bt_step, BtParams, GenerationMode};
use super::data::{ordered_batch, IdPair};
use super::mass::mass_mask;
use super::optim::{optimizer_step, AdamConfig, OptimState};
use crate::bitext::{Bitext, Direction, Lang, Provenance};
use crate::decode::{decode_batch, DecodeParams};
use crate::error::{Error, Result};
use crate::model::{Example, LossOutput, Model};
use crate::rng::{self, Rng};
use crate::subword::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Global gradient-norm clip; 0 disables.
    pub clip_norm: f64,
    pub mass_fraction: f64,
    pub bt: BtParams,
    /// Supervised pseudo-parallel batches per online BT batch, per direction.
    pub supervised_per_bt: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            adam: AdamConfig::default(),
            clip_norm: 1.0,
            mass_fraction: 0.5,
            bt: BtParams::default(),
            supervised_per_bt: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.mass_fraction > 0.0 && self.mass_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!("mass_fraction {} outside (0, 1)", self.mass_fraction)));
        }
        if self.supervised_per_bt == 0 {
            return Err(Error::InvalidConfig("supervised_per_bt must be positive".into()));
        }
        self.bt.validate()
    }
}

/// One validation event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub step: u64,
    pub direction: String,
    pub loss: f64,
    pub ppl: f64,
    pub lr: f64,
}

/// Owns a model and its optimizer state. Every update draws its batch from
/// a stream seeded by (seed, optimizer step), so training resumed from a
/// checkpoint continues exactly as an uninterrupted run would.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub opt: OptimState,
    pub config: TrainConfig,
    pub seed: u64,
    pub log: Vec<LogEvent>,
    pub modes: Vec<GenerationMode>,
    pub last_loss: f64,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig, seed: u64) -> Self {
        let opt = OptimState::new(config.adam.clone());
        Trainer::resume(model, opt, config, seed)
    }

    pub fn resume(model: Model, opt: OptimState, config: TrainConfig, seed: u64) -> Self {
        Trainer { model, opt, config, seed, log: Vec::new(), modes: Vec::new(), last_loss: f64::NAN }
    }

    pub fn step(&self) -> u64 {
        self.opt.step
    }

    fn step_rng(&self) -> Rng {
        rng::rng(rng::derive(self.seed, self.opt.step))
    }

    fn sample_indices(&self, n: usize, r: &mut Rng) -> Vec<usize> {
        (0..self.config.batch_size).map(|_| r.random_range(0..n)).collect()
    }

    /// Clips, applies one Adam update and returns the batch loss.
    pub fn apply(&mut self, mut out: LossOutput) -> Result<f64> {
        let clip = self.config.clip_norm;
        if clip > 0.0 {
            let norm = out.grads.global_norm();
            if norm > clip {
                out.grads.scale(clip / norm);
            }
        }
        optimizer_step(&mut self.model, &out.grads, &mut self.opt)?;
        self.last_loss = out.loss;
        Ok(out.loss)
    }

    /// Fragment-reconstruction update on a random batch from `corpus`.
    pub fn mass_step(&mut self, corpus: &[Vec<u32>], lang: Lang) -> Result<f64> {
        if corpus.is_empty() {
            return Err(Error::EmptyTrainingData);
        }
        let mut r = self.step_rng();
        let batch: Vec<Example> = self
            .sample_indices(corpus.len(), &mut r)
            .into_iter()
            .filter_map(|i| mass_mask(&corpus[i], self.config.mass_fraction, &mut r))
            .map(|m| m.into_example(lang))
            .collect();
        if batch.is_empty() {
            return Err(Error::EmptyTrainingData);
        }
        let out = self.model.forward_loss_backward(&batch)?;
        self.apply(out)
    }

    /// Online backtranslation update on a random batch of `corpus` (in `lang`).
    pub fn bt_step(&mut self, corpus: &[Vec<u32>], lang: Lang) -> Result<f64> {
        if corpus.is_empty() {
            return Err(Error::EmptyTrainingData);
        }
        let mut r = self.step_rng();
        let mono: Vec<Vec<u32>> =
            self.sample_indices(corpus.len(), &mut r).into_iter().map(|i| corpus[i].clone()).collect();
        let bt = online_bt_step(&self.model, &mono, lang, &self.config.bt, &mut r)?;
        self.modes.push(bt.mode);
        self.apply(bt.output)
    }

    /// Supervised update on `pairs[indices]`.
    pub fn pairs_step(&mut self, pairs: &[IdPair], indices: &[usize]) -> Result<f64> {
        let batch: Vec<Example> = indices.iter().map(|&i| pairs[i].example()).collect();
        if batch.is_empty() {
            return Err(Error::EmptyTrainingData);
        }
        let out = self.model.forward_loss_backward(&batch)?;
        self.apply(out)
    }

    /// Supervised update on a uniformly drawn batch among `candidates`.
    pub fn random_pairs_step(&mut self, pairs: &[IdPair], candidates: &[usize]) -> Result<f64> {
        if candidates.is_empty() {
            return Err(Error::EmptyTrainingData);
        }
        let mut r = self.step_rng();
        let idx: Vec<usize> =
            self.sample_indices(candidates.len(), &mut r).into_iter().map(|i| candidates[i]).collect();
        self.pairs_step(pairs, &idx)
    }

    /// Batch `k` of `order` consumed once in order, then reshuffled.
    pub fn ordered_step(&mut self, pairs: &[IdPair], order: &[usize], k: usize) -> Result<f64> {
        let idx = ordered_batch(order, self.config.batch_size, k, self.seed);
        self.pairs_step(pairs, &idx)
    }

    /// Records perplexity on `examples` as a log event.
    pub fn validate(&mut self, label: &str, examples: &[Example]) -> Result<f64> {
        let ppl = validate_examples(&self.model, examples, self.config.batch_size)?;
        self.log.push(LogEvent {
            step: self.opt.step,
            direction: label.to_owned(),
            loss: self.last_loss,
            ppl,
            lr: self.opt.lr_at(self.opt.step),
        });
        Ok(ppl)
    }
}

/// MASS over several corpora, alternating between them step by step.
pub fn train_mass(trainer: &mut Trainer, corpora: &[(Lang, &[Vec<u32>])], steps: usize) -> Result<()> {
    if corpora.is_empty() {
        return Err(Error::EmptyTrainingData);
    }
    for _ in 0..steps {
        let (lang, corpus) = corpora[trainer.step() as usize % corpora.len()];
        trainer.mass_step(corpus, lang)?;
    }
    Ok(())
}

/// Online backtranslation in both directions, interleaved with supervised
/// batches from `pseudo` when it has pairs for that direction. With `k`
/// supervised batches per BT batch a cycle is: BT on high-side text, `k`
/// supervised low→high, BT on low-side text, `k` supervised high→low.
pub fn train_unmt(trainer: &mut Trainer, mono: [&[Vec<u32>]; 2], pseudo: &[IdPair], steps: usize) -> Result<()> {
    let by_dir: [Vec<usize>; 2] = [0, 1].map(|d| (0..pseudo.len()).filter(|&i| pseudo[i].dir.index() == d).collect());
    let half = trainer.config.supervised_per_bt.max(1) + 1;
    for _ in 0..steps {
        let phase = trainer.step() as usize % (2 * half);
        let lang = if phase < half { Lang::HIGH } else { Lang::LOW };
        let sup_dir = Direction { src: lang.other(), tgt: lang };
        let cands = &by_dir[sup_dir.index()];
        if phase % half != 0 && !cands.is_empty() {
            trainer.random_pairs_step(pseudo, cands)?;
        } else {
            trainer.bt_step(mono[lang.index()], lang)?;
        }
    }
    Ok(())
}

/// Perplexity `exp(nll / tokens)` over `examples`.
pub fn validate_examples(model: &Model, examples: &[Example], batch_size: usize) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyValidationSet);
    }
    let (mut nll, mut tokens) = (0.0, 0usize);
    for chunk in examples.chunks(batch_size.max(1)) {
        let out = model.forward_loss(chunk)?;
        nll += out.nll();
        tokens += out.tokens;
    }
    Ok((nll / tokens as f64).exp())
}

/// Translation perplexity of `pairs` (source, target) in direction `dir`.
pub fn validate_ppl(model: &Model, pairs: &[(Vec<u32>, Vec<u32>)], dir: Direction, batch_size: usize) -> Result<f64> {
    let examples: Vec<Example> = pairs.iter().map(|(s, t)| Example::translation(s, t, dir)).collect();
    validate_examples(model, &examples, batch_size)
}

/// Translates a segmented corpus with `dir` and pairs each output with its
/// input as a pseudo-parallel bitext in the reverse direction.
pub fn offline_backtranslate(
    model: &Model,
    corpus: &[String],
    vocab: &Vocabulary,
    dir: Direction,
    dp: &DecodeParams,
    batch_size: usize,
    seed: u64,
) -> Result<Bitext> {
    let mut bitext = Bitext::new(dir.reverse());
    let limit = model.config.max_len.saturating_sub(1);
    let dp = DecodeParams { max_len: dp.max_len.min(limit).max(1), ..dp.clone() };
    for (b, chunk) in corpus.chunks(batch_size.max(1)).enumerate() {
        let ids: Vec<Vec<u32>> = chunk
            .iter()
            .map(|line| {
                let mut v = vocab.encode(&line.split_whitespace().collect::<Vec<_>>());
                v.truncate(limit);
                v
            })
            .collect();
        let out = decode_batch(model, &ids, dir, &dp, &mut rng::rng(rng::derive(seed, b as u64)))?;
        for (o, line) in out.iter().zip(chunk) {
            bitext.push(vocab.decode(&o.tokens).join(" "), line.clone(), Provenance::PseudoNmt);
        }
    }
    Ok(bitext)
}
