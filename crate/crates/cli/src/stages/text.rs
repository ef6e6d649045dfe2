use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use serde::Serialize;

use unmt_core::bitext::{Direction, Lang};
use unmt_core::decode::{bleu, BleuReport};
use unmt_core::subword::{self, build_vocab, join_subwords, Segmenter};
use unmt_core::textnorm::{
    normalize_and_tokenize, postprocess as restore, train_truecaser, truecase, CasingModel, LangRules,
};

use super::io::*;
use super::{Ctx, Stage};
use crate::error::{CliError, CliResult};

pub fn lang_rules(ctx: &Ctx, lang: Lang) -> LangRules {
    let l = &ctx.cfg.languages;
    LangRules::for_lang(if lang == Lang::HIGH { &l.high } else { &l.low })
}

fn side(lang: Lang) -> &'static str {
    if lang == Lang::HIGH {
        "high"
    } else {
        "low"
    }
}

/// Tokenizes and truecases the corpora; casing models come from each
/// language's training side.
pub fn preprocess(ctx: &Ctx) -> CliResult<()> {
    let p = &ctx.cfg.paths;
    for (lang, train, valid, test) in [
        (Lang::HIGH, &p.high_train, &p.valid_high, &p.test_high),
        (Lang::LOW, &p.low_train, &p.valid_low, &p.test_low),
    ] {
        let rules = lang_rules(ctx, lang);
        let tok = |path| -> CliResult<Vec<Vec<String>>> {
            Ok(read_lines(path)?.iter().map(|l| normalize_and_tokenize(l, &rules)).collect())
        };
        let train_tok: Vec<Vec<String>> = tok(train)?.into_iter().filter(|l| !l.is_empty()).collect();
        let casing = train_truecaser(&train_tok)?;
        let tc = |lines: Vec<Vec<String>>| -> Vec<Vec<String>> { lines.iter().map(|l| truecase(l, &casing)).collect() };
        let name = side(lang);
        write_tokens(&ctx.output(&format!("train.{name}.tok")), &tc(train_tok.clone()))?;
        write_tokens(&ctx.output(&format!("valid.{name}.tok")), &tc(tok(valid)?))?;
        write_tokens(&ctx.output(&format!("test.{name}.tok")), &tc(tok(test)?))?;
        write_text(&ctx.output(&format!("casing.{name}.txt")), &casing.to_text())?;
    }
    Ok(())
}

/// Learns the high-side table used for pretraining and the joint table
/// used after vocabulary extension.
pub fn learn_bpe(ctx: &Ctx) -> CliResult<()> {
    let high = read_tokens(&ctx.input(Stage::Preprocess, "train.high.tok"))?;
    let low = read_tokens(&ctx.input(Stage::Preprocess, "train.low.tok"))?;
    let sw = &ctx.cfg.subword;
    let table_high = subword::learn_bpe(high.iter().flatten(), sw.n_merges_high)?;
    let table_joint = subword::learn_bpe(high.iter().chain(&low).flatten(), sw.n_merges_joint)?;
    write_text(&ctx.output("bpe.high.txt"), &table_high.to_text())?;
    write_text(&ctx.output("bpe.joint.txt"), &table_joint.to_text())?;
    let mut seg = Segmenter::new(table_high);
    let train = segment_lines(&mut seg, &high, sw.max_tokens);
    let valid = segment_lines(&mut seg, &read_tokens(&ctx.input(Stage::Preprocess, "valid.high.tok"))?, sw.max_tokens);
    write_text(&ctx.output("vocab.high.txt"), &build_vocab(&train).to_text())?;
    write_tokens(&ctx.output("train.high.bpe"), &train)?;
    write_tokens(&ctx.output("valid.high.bpe"), &valid)
}

/// Segments everything with the joint table and extends the high-side
/// vocabulary with the joint one. The joint vocabulary also covers every
/// symbol BPE-dropout can emit: initial word symbols and merge results.
pub fn extend_vocab(ctx: &Ctx) -> CliResult<()> {
    let max = ctx.cfg.subword.max_tokens;
    let table = read_table(&ctx.input(Stage::LearnBpe, "bpe.joint.txt"))?;
    let mut coverage: BTreeSet<String> = table.merges().iter().map(|(a, b)| format!("{a}{b}")).collect();
    let mut seg = Segmenter::new(table);
    let mut train = Vec::new();
    for split in ["train", "valid", "test"] {
        for name in ["high", "low"] {
            let toks = read_tokens(&ctx.input(Stage::Preprocess, &format!("{split}.{name}.tok")))?;
            let segmented = segment_lines(&mut seg, &toks, max);
            write_tokens(&ctx.output(&format!("{split}.{name}.bpe")), &segmented)?;
            if split == "train" {
                coverage.extend(toks.iter().flatten().flat_map(|w| subword::word_symbols(w)));
                train.extend(segmented);
            }
        }
    }
    let base = read_vocab(&ctx.input(Stage::LearnBpe, "vocab.high.txt"))?;
    train.extend(coverage.into_iter().map(|t| vec![t]));
    let (extended, added) = subword::extend_vocab(&base, &build_vocab(&train))?;
    write_text(&ctx.output("vocab.txt"), &extended.to_text())?;
    write_lines(&ctx.output("added.txt"), &added.iter().map(|(t, i)| format!("{i}\t{t}")).collect::<Vec<_>>())
}

fn casing(ctx: &Ctx, lang: Lang) -> CliResult<CasingModel> {
    Ok(CasingModel::from_text(&read_text(&ctx.input(Stage::Preprocess, &format!("casing.{}.txt", side(lang))))?)?)
}

/// Hypothesis files produced upstream, as (system, direction, tokens).
fn hypotheses(ctx: &Ctx) -> CliResult<Vec<(String, Direction, Vec<Vec<String>>)>> {
    let mut out = Vec::new();
    for (stage, suffix, subwords) in
        [(Stage::PseudoSmt, ".tok", false), (Stage::Translate, ".bpe", true), (Stage::EnsembleTranslate, ".bpe", true)]
    {
        if !ctx.has_stage(stage) {
            continue;
        }
        let dir = ctx.root.join(stage.name());
        let mut names: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| CliError::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
            .filter(|n| n.starts_with("hyp.") && n.ends_with(suffix))
            .collect();
        names.sort();
        for name in names {
            // hyp.<system>.<h2l|l2h><suffix>
            let stem = &name["hyp.".len()..name.len() - suffix.len()];
            let Some((system, tag)) = stem.rsplit_once('.') else { continue };
            let direction = match tag {
                "h2l" => Direction::HIGH_TO_LOW,
                "l2h" => Direction::LOW_TO_HIGH,
                _ => continue,
            };
            let mut lines = read_tokens(&dir.join(&name))?;
            if subwords {
                lines = lines.iter().map(|l| join_subwords(l)).collect();
            }
            out.push((system.to_owned(), direction, lines));
        }
    }
    Ok(out)
}

/// Recases and detokenizes every hypothesis file into plain text.
pub fn postprocess(ctx: &Ctx) -> CliResult<()> {
    let p = &ctx.cfg.paths;
    let sources = [read_lines(&p.test_high)?, read_lines(&p.test_low)?];
    for (system, dir, lines) in hypotheses(ctx)? {
        let model = casing(ctx, dir.tgt)?;
        let rules = lang_rules(ctx, dir.tgt);
        let src = &sources[dir.src.index()];
        let text: Vec<String> = lines
            .iter()
            .enumerate()
            .map(|(i, toks)| restore(toks, src.get(i).map_or("", String::as_str), &model, &rules))
            .collect();
        write_lines(&ctx.output(&format!("{system}.{}.txt", dir_tag(dir))), &text)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Report {
    systems: BTreeMap<String, BTreeMap<String, BleuReport>>,
    extra: BTreeMap<String, BleuReport>,
}

/// Corpus BLEU of every postprocessed system against the raw references.
pub fn evaluate(ctx: &Ctx) -> CliResult<()> {
    let p = &ctx.cfg.paths;
    let mut report = Report { systems: BTreeMap::new(), extra: BTreeMap::new() };
    let mut summary = Vec::new();
    if ctx.has_stage(Stage::Postprocess) {
        let refs = [read_lines(&p.test_high)?, read_lines(&p.test_low)?];
        let dir = ctx.root.join(Stage::Postprocess.name());
        let mut names: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| CliError::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
            .filter(|n| n.ends_with(".txt"))
            .collect();
        names.sort();
        for name in names {
            let Some((system, tag)) = name.trim_end_matches(".txt").rsplit_once('.') else { continue };
            let tgt = match tag {
                "h2l" => Lang::LOW,
                "l2h" => Lang::HIGH,
                _ => continue,
            };
            let hyps = read_lines(&dir.join(&name))?;
            let b = bleu(&hyps, &refs[tgt.index()])?;
            summary.push(format!("{system}\t{tag}\t{:.2}", b.score));
            report.systems.entry(system.to_owned()).or_default().insert(tag.to_owned(), b);
        }
    }
    for e in &ctx.cfg.extra_eval {
        let b = bleu(&read_lines(&e.hyp)?, &read_lines(&e.reference)?)?;
        summary.push(format!("{}\t-\t{:.2}", e.name, b.score));
        report.extra.insert(e.name.clone(), b);
    }
    write_text(&ctx.output("report.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    write_lines(&ctx.output("report.tsv"), &summary)
}
