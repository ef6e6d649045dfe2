use rand::Rng as _;

use crate::bitext::Lang;
use crate::model::Example;
use crate::rng::Rng;
use crate::subword::MASK;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSentence {
    /// Sentence with the span replaced by mask tokens.
    pub masked: Vec<u32>,
    /// The original span.
    pub fragment: Vec<u32>,
    pub start: usize,
}

/// Span length for a sentence of `len` tokens: `max(1, round(fraction·len))`.
pub fn span_length(len: usize, fraction: f64) -> usize {
    ((fraction * len as f64).round() as usize).clamp(1, len)
}

/// Masks a uniformly placed contiguous span. Sentences shorter than two
/// tokens are skipped (`None`).
pub fn mass_mask(sentence: &[u32], fraction: f64, rng: &mut Rng) -> Option<MaskedSentence> {
    let len = sentence.len();
    if len < 2 {
        return None;
    }
    let span = span_length(len, fraction);
    let start = rng.random_range(0..=len - span);
    let mut masked = sentence.to_vec();
    masked[start..start + span].fill(MASK);
    Some(MaskedSentence {
        masked,
        fragment: sentence[start..start + span].to_vec(),
        start,
    })
}

impl MaskedSentence {
    pub fn into_example(self, lang: Lang) -> Example {
        Example::fragment(self.masked, &self.fragment, self.start, lang)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn half_of_ten() {
        let s: Vec<u32> = (10..20).collect();
        let m = mass_mask(&s, 0.5, &mut rng::rng(1)).unwrap();
        assert_eq!(m.fragment.len(), 5);
        assert_eq!(&s[m.start..m.start + 5], m.fragment.as_slice());
        assert_eq!(m.masked.iter().filter(|&&t| t == MASK).count(), 5);
    }

    #[test]
    fn tiny_fraction_clamps_to_one() {
        assert_eq!(span_length(10, 1e-9), 1);
    }

    #[test]
    fn short_sentences_skipped() {
        assert!(mass_mask(&[7], 0.5, &mut rng::rng(0)).is_none());
    }
}
