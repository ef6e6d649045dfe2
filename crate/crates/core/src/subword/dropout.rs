use super::bpe::segment_with_rng;
use super::MergeTable;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutParams {
    pub p: f64,
    pub seed: u64,
}

impl DropoutParams {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidConfig(format!("dropout probability {p} outside [0, 1]")));
        }
        Ok(DropoutParams { p, seed })
    }

    pub fn deterministic() -> Self {
        DropoutParams { p: 0.0, seed: 0 }
    }
}

/// Which side of a bitext receives dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

fn segment_line<S: AsRef<str>>(words: &[S], table: &MergeTable, p: f64, seed: u64) -> Vec<String> {
    let mut rng = rng::rng(seed);
    words
        .iter()
        .flat_map(|w| segment_with_rng(w.as_ref(), table, p, &mut rng))
        .collect()
}

fn copy_seed(seed: u64, line: usize, copy: usize) -> u64 {
    rng::derive(rng::derive(seed, line as u64), copy as u64)
}

/// Emits every line `factor` times, each copy segmented with fresh dropout
/// randomness. Copies of a line are adjacent in the output.
pub fn oversample_with_dropout<S: AsRef<str>>(
    corpus: &[Vec<S>],
    factor: usize,
    table: &MergeTable,
    drop: &DropoutParams,
) -> Result<Vec<Vec<String>>> {
    if factor == 0 {
        return Err(Error::InvalidConfig("oversampling factor must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(corpus.len() * factor);
    for (i, line) in corpus.iter().enumerate() {
        for c in 0..factor {
            out.push(segment_line(line, table, drop.p, copy_seed(drop.seed, i, c)));
        }
    }
    Ok(out)
}

/// Bitext variant: only `side` gets dropout, the other side is segmented
/// deterministically with its own table.
pub fn oversample_bitext_with_dropout<S: AsRef<str>>(
    pairs: &[(Vec<S>, Vec<S>)],
    factor: usize,
    tables: (&MergeTable, &MergeTable),
    drop: &DropoutParams,
    side: Side,
) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    if factor == 0 {
        return Err(Error::InvalidConfig("oversampling factor must be at least 1".into()));
    }
    let (p_src, p_tgt) = match side {
        Side::Source => (drop.p, 0.0),
        Side::Target => (0.0, drop.p),
    };
    let mut out = Vec::with_capacity(pairs.len() * factor);
    for (i, (src, tgt)) in pairs.iter().enumerate() {
        for c in 0..factor {
            let seed = copy_seed(drop.seed, i, c);
            out.push((
                segment_line(src, tables.0, p_src, seed),
                segment_line(tgt, tables.1, p_tgt, seed),
            ));
        }
    }
    Ok(out)
}
