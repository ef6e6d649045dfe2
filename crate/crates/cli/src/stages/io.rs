use std::fs;
use std::path::Path;

use unmt_core::bitext::{Bitext, Direction};
use unmt_core::subword::{MergeTable, Segmenter, Vocabulary};
use unmt_core::trainer::IdPair;

use crate::error::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_lines(path: &Path) -> CliResult<Vec<String>> {
    Ok(read_text(path)?.lines().map(str::to_owned).collect())
}

pub fn write_lines<S: AsRef<str>>(path: &Path, lines: &[S]) -> CliResult<()> {
    let mut text = String::new();
    for l in lines {
        text.push_str(l.as_ref());
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn read_tokens(path: &Path) -> CliResult<Vec<Vec<String>>> {
    Ok(read_text(path)?.lines().map(|l| l.split_whitespace().map(str::to_owned).collect()).collect())
}

pub fn write_tokens(path: &Path, lines: &[Vec<String>]) -> CliResult<()> {
    write_lines(path, &lines.iter().map(|l| l.join(" ")).collect::<Vec<_>>())
}

pub fn write_json_lines<T: serde::Serialize>(path: &Path, items: &[T]) -> CliResult<()> {
    let mut text = String::new();
    for it in items {
        text.push_str(&serde_json::to_string(it)?);
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn read_table(path: &Path) -> CliResult<MergeTable> {
    Ok(MergeTable::from_text(&read_text(path)?)?)
}

pub fn read_vocab(path: &Path) -> CliResult<Vocabulary> {
    Ok(Vocabulary::from_text(&read_text(path)?)?)
}

/// Segments and truncates each tokenized line.
pub fn segment_lines(seg: &mut Segmenter, lines: &[Vec<String>], max_tokens: usize) -> Vec<Vec<String>> {
    lines
        .iter()
        .map(|l| {
            let mut s = seg.segment_sentence(l);
            s.truncate(max_tokens);
            s
        })
        .collect()
}

pub fn encode_lines(vocab: &Vocabulary, lines: &[Vec<String>]) -> Vec<Vec<u32>> {
    lines.iter().map(|l| vocab.encode(l)).collect()
}

/// Reads a segmented corpus file as ids, dropping empty lines.
pub fn read_ids(path: &Path, vocab: &Vocabulary) -> CliResult<Vec<Vec<u32>>> {
    Ok(encode_lines(vocab, &read_tokens(path)?).into_iter().filter(|l| !l.is_empty()).collect())
}

/// Word-level bitext segmented into id pairs.
pub fn bitext_pairs(bitext: &Bitext, seg: &mut Segmenter, vocab: &Vocabulary, max_tokens: usize) -> Vec<IdPair> {
    let split = |s: &str| vec![s.split_whitespace().map(str::to_owned).collect::<Vec<_>>()];
    bitext
        .pairs
        .iter()
        .filter_map(|p| {
            let src = encode_lines(vocab, &segment_lines(seg, &split(&p.source), max_tokens)).remove(0);
            let tgt = encode_lines(vocab, &segment_lines(seg, &split(&p.target), max_tokens)).remove(0);
            (!src.is_empty() && !tgt.is_empty()).then_some(IdPair { src, tgt, dir: bitext.direction })
        })
        .collect()
}

pub fn dir_tag(dir: Direction) -> &'static str {
    if dir == Direction::HIGH_TO_LOW {
        "h2l"
    } else {
        "l2h"
    }
}
