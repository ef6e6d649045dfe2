use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bitext::{Direction, Lang};
use crate::decode::{greedy, sample, ModelScorer};
use crate::error::{Error, Result};
use crate::model::{Example, LossOutput, Model};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BtParams {
    /// Probability that a batch is generated by sampling instead of greedily.
    pub sample_prob: f64,
    pub temperature: f64,
}

impl Default for BtParams {
    fn default() -> Self {
        BtParams { sample_prob: 0.5, temperature: 0.95 }
    }
}

impl BtParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sample_prob) || !(self.temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sample_prob {} must be in [0,1] and temperature {} positive",
                self.sample_prob, self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerationMode {
    Greedy,
    Sample,
}

pub fn choose_mode(bt: &BtParams, rng: &mut Rng) -> GenerationMode {
    if rng.random_bool(bt.sample_prob) {
        GenerationMode::Sample
    } else {
        GenerationMode::Greedy
    }
}

#[derive(Debug, Clone)]
pub struct BtStep {
    pub output: LossOutput,
    pub mode: GenerationMode,
    /// The training pairs: generated source, authentic target.
    pub batch: Vec<Example>,
}

/// Generation budget for translating `sources`, kept within the encoder's
/// limit so the output can be fed back as a source.
pub fn generation_limit(model: &Model, sources: &[Vec<u32>]) -> usize {
    let longest = sources.iter().map(Vec::len).max().unwrap_or(0);
    (2 * longest + 5).min(model.config.max_len.saturating_sub(1)).max(1)
}

/// Translates a monolingual batch in `lang` into the other language without
/// gradients, then takes one supervised forward/backward on
/// (translation → original).
pub fn online_bt_step(model: &Model, mono: &[Vec<u32>], lang: Lang, bt: &BtParams, rng: &mut Rng) -> Result<BtStep> {
    bt.validate()?;
    let gen_dir = Direction { src: lang, tgt: lang.other() };
    let mode = choose_mode(bt, rng);
    let limit = generation_limit(model, mono);
    let mut scorer = ModelScorer::new(model, mono, gen_dir)?;
    let generated = match mode {
        GenerationMode::Greedy => greedy(&mut scorer, limit),
        GenerationMode::Sample => sample(&mut scorer, limit, bt.temperature, rng),
    };
    let batch: Vec<Example> = generated
        .iter()
        .zip(mono)
        .map(|(g, orig)| Example::translation(&g.tokens, orig, gen_dir.reverse()))
        .collect();
    let output = model.forward_loss_backward(&batch)?;
    Ok(BtStep { output, mode, batch })
}

/// Standard cross-entropy step on aligned pairs in direction `dir`.
pub fn supervised_step(model: &Model, pairs: &[(Vec<u32>, Vec<u32>)], dir: Direction) -> Result<LossOutput> {
    let batch: Vec<Example> = pairs.iter().map(|(s, t)| Example::translation(s, t, dir)).collect();
    model.forward_loss_backward(&batch)
}
