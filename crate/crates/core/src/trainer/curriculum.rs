use std::cmp::Ordering;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::data::IdPair;
use super::loops::{validate_examples, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::model::{Example, Model};
use crate::rng;

/// Weights over (high→low fwd, high→low rev, low→high fwd, low→high rev).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumWeights(pub [f64; 4]);

impl CurriculumWeights {
    pub fn new(w: [f64; 4]) -> Result<Self> {
        if w.iter().any(|x| !(-1.0..=1.0).contains(x)) {
            return Err(Error::InvalidConfig(format!("curriculum weights {w:?} outside [-1, 1]")));
        }
        Ok(CurriculumWeights(w))
    }

    pub fn zero() -> Self {
        CurriculumWeights([0.0; 4])
    }
}

/// Length-normalized model scores of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub index: usize,
    /// Direction index of the pair.
    pub direction: usize,
    /// Mean log-prob of the target given the source.
    pub fwd: f64,
    /// Mean log-prob of the source given the target.
    pub rev: f64,
}

impl ScoredPair {
    pub fn composite(&self, w: &CurriculumWeights) -> f64 {
        let base = 2 * self.direction;
        w.0[base] * self.fwd + w.0[base + 1] * self.rev
    }
}

fn mean_logprobs(model: &Model, batch: &[Example]) -> Result<Vec<f64>> {
    let out = model.forward_loss(batch)?;
    Ok(out
        .token_logprobs
        .iter()
        .map(|lp| lp.iter().sum::<f64>() / lp.len() as f64)
        .collect())
}

/// Scores every pair in its own and the reverse direction.
pub fn curriculum_score(model: &Model, pairs: &[IdPair], batch_size: usize) -> Result<Vec<ScoredPair>> {
    let mut scored = Vec::with_capacity(pairs.len());
    for (chunk_idx, chunk) in pairs.chunks(batch_size.max(1)).enumerate() {
        let fwd: Vec<Example> = chunk.iter().map(IdPair::example).collect();
        let rev: Vec<Example> = chunk.iter().map(|p| p.reversed().example()).collect();
        let f = mean_logprobs(model, &fwd)?;
        let r = mean_logprobs(model, &rev)?;
        for (j, p) in chunk.iter().enumerate() {
            scored.push(ScoredPair {
                index: chunk_idx * batch_size.max(1) + j,
                direction: p.dir.index(),
                fwd: f[j],
                rev: r[j],
            });
        }
    }
    Ok(scored)
}

/// Positions of `scored` sorted by descending composite score; ties keep
/// input order.
pub fn order_by(scored: &[ScoredPair], w: &CurriculumWeights) -> Vec<usize> {
    let keys: Vec<f64> = scored.iter().map(|s| s.composite(w)).collect();
    let mut perm: Vec<usize> = (0..scored.len()).collect();
    perm.sort_by(|&a, &b| keys[b].partial_cmp(&keys[a]).unwrap_or(Ordering::Equal));
    perm
}

/// Suggest/observe interface for the weight search.
pub trait TrialStrategy {
    fn suggest(&mut self, trial: usize) -> CurriculumWeights;
    fn observe(&mut self, _weights: &CurriculumWeights, _objective: f64) {}
}

/// Uniform sampling from [-1, 1]^4.
#[derive(Debug, Clone)]
pub struct RandomSearch {
    pub seed: u64,
}

impl TrialStrategy for RandomSearch {
    fn suggest(&mut self, trial: usize) -> CurriculumWeights {
        let mut r = rng::rng(rng::derive(self.seed, trial as u64));
        CurriculumWeights(std::array::from_fn(|_| r.random_range(-1.0..=1.0)))
    }
}

/// Everything a trial needs: the base model, the pairs with their scores,
/// and the validation sets whose perplexities are summed.
pub struct CurriculumTask<'a> {
    pub base: &'a Model,
    pub pairs: &'a [IdPair],
    pub scores: &'a [ScoredPair],
    pub valid: &'a [Vec<Example>],
    pub train: &'a TrainConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub weights: CurriculumWeights,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: CurriculumWeights,
    pub trials: Vec<TrialRecord>,
}

/// Fine-tunes a copy of the base model on the ordered pairs with supervised
/// steps only and returns the summed validation perplexity.
pub fn run_trial(task: &CurriculumTask, weights: &CurriculumWeights, updates: usize) -> Result<f64> {
    if task.scores.len() != task.pairs.len() {
        return Err(Error::InvalidConfig(format!(
            "{} scores for {} pairs",
            task.scores.len(),
            task.pairs.len()
        )));
    }
    let order: Vec<usize> = order_by(task.scores, weights).into_iter().map(|i| task.scores[i].index).collect();
    let mut trainer = Trainer::new(task.base.clone(), task.train.clone(), task.seed);
    for k in 0..updates {
        trainer.ordered_step(task.pairs, &order, k)?;
    }
    task.valid
        .iter()
        .map(|v| validate_examples(&trainer.model, v, task.train.batch_size))
        .sum()
}

pub fn curriculum_search(
    task: &CurriculumTask,
    trial_budget: usize,
    updates_per_trial: usize,
    strategy: &mut dyn TrialStrategy,
) -> Result<SearchOutcome> {
    if trial_budget == 0 {
        return Err(Error::ZeroTrialBudget);
    }
    let mut trials = Vec::with_capacity(trial_budget);
    for t in 0..trial_budget {
        let weights = strategy.suggest(t);
        CurriculumWeights::new(weights.0)?;
        let objective = run_trial(task, &weights, updates_per_trial)?;
        strategy.observe(&weights, objective);
        trials.push(TrialRecord { trial: t, weights, objective });
    }
    let best = trials
        .iter()
        .min_by(|a, b| {
            let key = |x: f64| if x.is_nan() { f64::INFINITY } else { x };
            key(a.objective).total_cmp(&key(b.objective))
        })
        .map(|r| r.weights)
        .expect("budget is positive");
    Ok(SearchOutcome { best, trials })
}
