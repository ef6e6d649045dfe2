use unmt_core::bitext::Direction;
use unmt_core::lexinduct::{
    backtranslate_corpus, extract_identical_seed, induce_lexicon, procrustes_map, train_lm, EmbeddingTable,
    SeedDictionary, TranslationLexicon, WordTranslator,
};
use unmt_core::subword::build_vocab;

use super::io::*;
use super::{Ctx, Stage};
use crate::error::CliResult;

fn matrix_text(m: &nalgebra::DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|x| format!("{x:e}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Maps low-side embeddings into the high-side space using identical
/// strings as the seed, then builds cosine lexicons both ways.
pub fn embed_map(ctx: &Ctx) -> CliResult<()> {
    let p = &ctx.cfg.paths;
    let lc = &ctx.cfg.lexicon;
    let high = EmbeddingTable::from_text(&read_text(&p.emb_high)?)?;
    let low = EmbeddingTable::from_text(&read_text(&p.emb_low)?)?;
    let vh = build_vocab(&read_tokens(&ctx.input(Stage::Preprocess, "train.high.tok"))?);
    let vl = build_vocab(&read_tokens(&ctx.input(Stage::Preprocess, "train.low.tok"))?);
    let seed = extract_identical_seed(&vh, &vl, lc.seed_min_len)?;
    let seed = SeedDictionary {
        pairs: seed.pairs.into_iter().filter(|(a, b)| low.index_of(a).is_some() && high.index_of(b).is_some()).collect(),
    };
    let map = procrustes_map(&low, &high, &seed)?;
    let mapped = low.mapped(&map)?;
    let h2l = induce_lexicon(&high, &mapped, lc.candidates)?;
    let l2h = induce_lexicon(&mapped, &high, lc.candidates)?;
    write_lines(&ctx.output("seed.tsv"), &seed.pairs.iter().map(|(a, b)| format!("{a}\t{b}")).collect::<Vec<_>>())?;
    write_text(&ctx.output("map.txt"), &matrix_text(&map))?;
    write_text(&ctx.output("lexicon.h2l.tsv"), &h2l.to_text())?;
    write_text(&ctx.output("lexicon.l2h.tsv"), &l2h.to_text())
}

fn translate_file(ctx: &Ctx, tr: &WordTranslator, input: &str, output: &str) -> CliResult<()> {
    let lines = read_tokens(&ctx.input(Stage::Preprocess, input))?;
    write_tokens(&ctx.output(output), &lines.iter().map(|l| tr.translate(l)).collect::<Vec<_>>())
}

/// Word-by-word translation of the test sets, and pseudo-parallel data
/// from translating each monolingual corpus into the other language.
pub fn pseudo_smt(ctx: &Ctx) -> CliResult<()> {
    let lc = &ctx.cfg.lexicon;
    let high = read_lines(&ctx.input(Stage::Preprocess, "train.high.tok"))?;
    let low = read_lines(&ctx.input(Stage::Preprocess, "train.low.tok"))?;
    fn words(v: &[String]) -> Vec<Vec<&str>> {
        v.iter().map(|l| l.split_whitespace().collect()).collect()
    }
    let lm_high = train_lm(words(&high), lc.lm_order, lc.lm_delta)?;
    let lm_low = train_lm(words(&low), lc.lm_order, lc.lm_delta)?;
    let lexicon = |name: &str| -> CliResult<TranslationLexicon> {
        Ok(TranslationLexicon::from_text(&read_text(&ctx.input(Stage::EmbedMap, name))?)?)
    };
    let make = |lexicon, lm| WordTranslator { lexicon, lm, beam: lc.beam, lambda: lc.lambda };
    let h2l = make(lexicon("lexicon.h2l.tsv")?, lm_low.clone());
    let l2h = make(lexicon("lexicon.l2h.tsv")?, lm_high.clone());

    // Training pairs for high→low have translated low text as their source.
    backtranslate_corpus(&low, &l2h, Direction::HIGH_TO_LOW).write(&ctx.dir, "pseudo.h2l")?;
    backtranslate_corpus(&high, &h2l, Direction::LOW_TO_HIGH).write(&ctx.dir, "pseudo.l2h")?;
    translate_file(ctx, &h2l, "test.high.tok", "hyp.lexicon.h2l.tok")?;
    translate_file(ctx, &l2h, "test.low.tok", "hyp.lexicon.l2h.tok")?;

    if let Some(path) = &ctx.cfg.paths.true_lexicon {
        let truth = TranslationLexicon::from_text(&read_text(path)?)?;
        let inverse = TranslationLexicon::from_pairs(
            truth.iter().flat_map(|(s, c)| c.iter().map(move |(t, _)| (t.clone(), s.to_owned()))),
        );
        translate_file(ctx, &make(truth, lm_low), "test.high.tok", "hyp.oracle-lexicon.h2l.tok")?;
        translate_file(ctx, &make(inverse, lm_high), "test.low.tok", "hyp.oracle-lexicon.l2h.tok")?;
    }
    Ok(())
}
