use rand::seq::SliceRandom as _;

use crate::bitext::{Direction, Lang};
use crate::model::Example;
use crate::rng;

use super::mass::mass_mask;

/// A tokenized sentence pair with its direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdPair {
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
    pub dir: Direction,
}

impl IdPair {
    pub fn example(&self) -> Example {
        Example::translation(&self.src, &self.tgt, self.dir)
    }

    pub fn reversed(&self) -> IdPair {
        IdPair { src: self.tgt.clone(), tgt: self.src.clone(), dir: self.dir.reverse() }
    }
}

/// Item indices for batch `k` of a stream that walks `order` once, then
/// reshuffled copies of it, one per later epoch.
pub fn ordered_batch(order: &[usize], batch_size: usize, k: usize, seed: u64) -> Vec<usize> {
    let n = order.len();
    if n == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(batch_size);
    let mut cached: Option<(usize, Vec<usize>)> = None;
    for j in k * batch_size..(k + 1) * batch_size {
        let (epoch, pos) = (j / n, j % n);
        if epoch == 0 {
            out.push(order[pos]);
            continue;
        }
        if cached.as_ref().map(|c| c.0) != Some(epoch) {
            let mut perm = order.to_vec();
            perm.shuffle(&mut rng::rng(rng::derive(seed, epoch as u64)));
            cached = Some((epoch, perm));
        }
        out.push(cached.as_ref().unwrap().1[pos]);
    }
    out
}

/// Fixed masked examples for measuring fragment-reconstruction perplexity.
pub fn mass_examples(corpus: &[Vec<u32>], lang: Lang, fraction: f64, seed: u64) -> Vec<Example> {
    corpus
        .iter()
        .enumerate()
        .filter_map(|(i, s)| mass_mask(s, fraction, &mut rng::rng(rng::derive(seed, i as u64))))
        .map(|m| m.into_example(lang))
        .collect()
}
