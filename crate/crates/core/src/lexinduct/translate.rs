use super::{NGramLm, TranslationLexicon};
use crate::bitext::{Bitext, Direction, Provenance};

/// Lexicon and target LM with beam settings.
#[derive(Debug, Clone)]
pub struct WordTranslator {
    pub lexicon: TranslationLexicon,
    pub lm: NGramLm,
    pub beam: usize,
    /// Weight of the cosine score; the LM log-prob gets `1 − lambda`.
    pub lambda: f64,
}

impl WordTranslator {
    pub fn translate<S: AsRef<str>>(&self, sentence: &[S]) -> Vec<String> {
        word_translate(sentence, &self.lexicon, &self.lm, self.beam, self.lambda)
    }
}

struct Hyp {
    score: f64,
    words: Vec<usize>,
    ids: Vec<u32>,
}

/// Monotone word-for-word translation. Each word becomes one of its lexicon
/// candidates, or is copied with cosine 1 when absent; the beam maximizes
/// `λ·cos + (1−λ)·ln P_lm` including the end-of-sentence term.
pub fn word_translate<S: AsRef<str>>(
    sentence: &[S],
    lexicon: &TranslationLexicon,
    lm: &NGramLm,
    beam: usize,
    lambda: f64,
) -> Vec<String> {
    let beam = beam.max(1);
    let options: Vec<Vec<(String, f64, u32)>> = sentence
        .iter()
        .map(|w| {
            let w = w.as_ref();
            match lexicon.get(w) {
                Some(c) if !c.is_empty() => c.iter().map(|(t, s)| (t.clone(), *s, lm.word_id(t))).collect(),
                _ => vec![(w.to_owned(), 1.0, lm.word_id(w))],
            }
        })
        .collect();

    let mut hyps = vec![Hyp {
        score: 0.0,
        words: Vec::new(),
        ids: Vec::new(),
    }];
    for opts in &options {
        let mut next = Vec::with_capacity(hyps.len() * opts.len());
        for h in &hyps {
            let ctx = lm.context(&h.ids);
            for (j, (_, cos, id)) in opts.iter().enumerate() {
                let score = h.score + lambda * cos + (1.0 - lambda) * lm.logprob_id(&ctx, *id);
                let mut words = h.words.clone();
                words.push(j);
                let mut ids = h.ids.clone();
                ids.push(*id);
                next.push(Hyp { score, words, ids });
            }
        }
        next.sort_by(|a, b| b.score.total_cmp(&a.score));
        next.truncate(beam);
        hyps = next;
    }
    let best = hyps
        .into_iter()
        .map(|h| {
            let end = (1.0 - lambda) * lm.logprob_id(&lm.context(&h.ids), lm.eos_id());
            (h.score + end, h.words)
        })
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("beam is never empty");
    best.1.iter().zip(&options).map(|(&j, o)| o[j].0.clone()).collect()
}

/// Translates each whitespace-tokenized line and pairs the translation
/// (source side) with the untouched input line (target side).
pub fn backtranslate_corpus<S: AsRef<str>>(corpus: &[S], translator: &WordTranslator, direction: Direction) -> Bitext {
    let mut out = Bitext::new(direction);
    for line in corpus {
        let line = line.as_ref();
        let words: Vec<&str> = line.split_whitespace().collect();
        out.push(translator.translate(&words).join(" "), line.to_owned(), Provenance::PseudoSmt);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexinduct::train_lm;

    fn translator() -> WordTranslator {
        let lexicon = TranslationLexicon::from_text("a\tx\t0.9\na\ty\t0.8\nb\tz\t1\n").unwrap();
        let lm = train_lm([["y", "z"], ["y", "z"], ["x", "q"]], 2, 0.1).unwrap();
        WordTranslator { lexicon, lm, beam: 4, lambda: 0.5 }
    }

    #[test]
    fn empty_and_copy() {
        let t = translator();
        assert!(t.translate::<&str>(&[]).is_empty());
        assert_eq!(t.translate(&["m", "n"]), vec!["m", "n"]);
    }

    #[test]
    fn lm_overrides_cosine() {
        assert_eq!(translator().translate(&["a", "b"]), vec!["y", "z"]);
    }

    #[test]
    fn backtranslation_keeps_targets() {
        let corpus = ["a b", "b  a", ""];
        let bt = backtranslate_corpus(&corpus, &translator(), Direction::LOW_TO_HIGH);
        assert_eq!(bt.targets().collect::<Vec<_>>(), corpus);
        assert!(bt.pairs.iter().all(|p| p.provenance == Provenance::PseudoSmt));
        assert_eq!(bt.pairs[1].source.split(' ').count(), 2);
    }
}
