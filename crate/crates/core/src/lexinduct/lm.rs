use std::collections::HashMap;

use crate::error::{Error, Result};

pub const LM_BOS: &str = "<s>";
pub const LM_EOS: &str = "</s>";
pub const LM_UNK: &str = "<unk>";

const BOS_ID: u32 = 0;
const EOS_ID: u32 = 1;
const UNK_ID: u32 = 2;

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    next: HashMap<u32, u64>,
}

/// Word n-gram model with additive smoothing over the training words plus
/// `<unk>` and `</s>`. Histories are padded with `<s>`.
#[derive(Debug, Clone)]
pub struct NGramLm {
    order: usize,
    delta: f64,
    ids: HashMap<String, u32>,
    words: Vec<String>,
    contexts: HashMap<Vec<u32>, ContextCounts>,
}

pub fn train_lm<I, L, S>(corpus: I, order: usize, delta: f64) -> Result<NGramLm>
where
    I: IntoIterator<Item = L>,
    L: AsRef<[S]>,
    S: AsRef<str>,
{
    if order == 0 {
        return Err(Error::InvalidConfig("LM order must be at least 1".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidConfig(format!("LM smoothing must be positive, got {delta}")));
    }
    let mut lm = NGramLm {
        order,
        delta,
        ids: HashMap::new(),
        words: Vec::new(),
        contexts: HashMap::new(),
    };
    for w in [LM_BOS, LM_EOS, LM_UNK] {
        lm.intern(w);
    }
    let mut lines = 0usize;
    for line in corpus {
        lines += 1;
        let mut seq = vec![BOS_ID; order - 1];
        seq.extend(line.as_ref().iter().map(|w| lm.intern(w.as_ref())));
        seq.push(EOS_ID);
        for i in order - 1..seq.len() {
            let c = lm.contexts.entry(seq[i + 1 - order..i].to_vec()).or_default();
            c.total += 1;
            *c.next.entry(seq[i]).or_default() += 1;
        }
    }
    if lines == 0 {
        return Err(Error::EmptyTrainingData);
    }
    Ok(lm)
}

impl NGramLm {
    fn intern(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.ids.get(w) {
            return id;
        }
        let id = self.words.len() as u32;
        self.ids.insert(w.to_owned(), id);
        self.words.push(w.to_owned());
        id
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of predictable events: training words, `<unk>` and `</s>`.
    pub fn num_events(&self) -> usize {
        self.words.len() - 1
    }

    /// Every predictable event, `</s>` and `<unk>` included.
    pub fn events(&self) -> impl Iterator<Item = &str> {
        self.words[1..].iter().map(String::as_str)
    }

    /// Id used for `word`; unknown words share the `<unk>` id.
    pub fn word_id(&self, word: &str) -> u32 {
        self.ids.get(word).copied().filter(|&i| i != BOS_ID).unwrap_or(UNK_ID)
    }

    pub fn eos_id(&self) -> u32 {
        EOS_ID
    }

    /// Context for the next prediction after `history` (ids, most recent last).
    pub fn context(&self, history: &[u32]) -> Vec<u32> {
        let n = self.order - 1;
        let mut ctx = vec![BOS_ID; n.saturating_sub(history.len())];
        ctx.extend_from_slice(&history[history.len().saturating_sub(n)..]);
        ctx
    }

    /// `ln P(next | context)` where `context` has exactly `order − 1` ids.
    pub fn logprob_id(&self, context: &[u32], next: u32) -> f64 {
        debug_assert_eq!(context.len(), self.order - 1);
        let denom_events = self.delta * self.num_events() as f64;
        let (c, total) = match self.contexts.get(context) {
            Some(cc) => (cc.next.get(&next).copied().unwrap_or(0), cc.total),
            None => (0, 0),
        };
        ((c as f64 + self.delta) / (total as f64 + denom_events)).ln()
    }

    pub fn logprob_next<S: AsRef<str>>(&self, history: &[S], next: &str) -> f64 {
        let ids: Vec<u32> = history.iter().map(|w| self.word_id(w.as_ref())).collect();
        self.logprob_id(&self.context(&ids), self.word_id(next))
    }

    /// Sum of per-word log-probabilities plus the end-of-sentence term.
    pub fn sentence_logprob<S: AsRef<str>>(&self, sentence: &[S]) -> f64 {
        let mut ids: Vec<u32> = Vec::with_capacity(sentence.len() + 1);
        let mut total = 0.0;
        for w in sentence.iter().map(|w| self.word_id(w.as_ref())).chain([EOS_ID]) {
            total += self.logprob_id(&self.context(&ids), w);
            ids.push(w);
        }
        total
    }
}
