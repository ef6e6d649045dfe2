use unmt_core::bitext::Direction;
use unmt_core::checkpoint;
use unmt_core::decode::{decode_batch, ensemble_decode, DecodeOutput};
use unmt_core::model::Model;
use unmt_core::rng;
use unmt_core::subword::Vocabulary;

use super::io::*;
use super::{Ctx, Stage};
use crate::error::CliResult;

const DIRECTIONS: [(Direction, &str); 2] = [(Direction::HIGH_TO_LOW, "high"), (Direction::LOW_TO_HIGH, "low")];

fn load_models(ctx: &Ctx, names: &[String], vocab: &Vocabulary) -> CliResult<Vec<(String, Model)>> {
    let hash = vocab.content_hash();
    names
        .iter()
        .map(|n| {
            let stage: Stage = n.parse()?;
            Ok((n.clone(), checkpoint::load(&ctx.input(stage, "model.ckpt"), Some(&hash))?.model))
        })
        .collect()
}

/// Translates the segmented test side of `dir` in batches. Empty lines stay
/// empty so hypotheses remain aligned with references.
fn translate_test(
    ctx: &Ctx,
    vocab: &Vocabulary,
    dir: Direction,
    side: &str,
    seed: u64,
    mut decode: impl FnMut(&[Vec<u32>], &mut rng::Rng) -> unmt_core::Result<Vec<DecodeOutput>>,
) -> CliResult<Vec<Vec<String>>> {
    let sources = encode_lines(vocab, &read_tokens(&ctx.input(Stage::ExtendVocab, &format!("test.{side}.bpe")))?);
    let batch = ctx.cfg.train.batch_size.max(1);
    let mut out = Vec::with_capacity(sources.len());
    for (b, chunk) in sources.chunks(batch).enumerate() {
        let mut r = rng::rng(rng::derive(rng::derive(seed, dir.index() as u64), b as u64));
        for (src, hyp) in chunk.iter().zip(decode(chunk, &mut r)?) {
            out.push(if src.is_empty() { Vec::new() } else { vocab.decode(&hyp.tokens) });
        }
    }
    Ok(out)
}

/// Decodes the test sets with every listed system.
pub fn translate(ctx: &Ctx) -> CliResult<()> {
    let vocab = read_vocab(&ctx.input(Stage::ExtendVocab, "vocab.txt"))?;
    for (name, model) in load_models(ctx, &ctx.cfg.systems.translate, &vocab)? {
        for (dir, side) in DIRECTIONS {
            let hyps = translate_test(ctx, &vocab, dir, side, ctx.seed, |s, r| {
                decode_batch(&model, s, dir, &ctx.cfg.decode, r)
            })?;
            write_tokens(&ctx.output(&format!("hyp.{name}.{}.bpe", dir_tag(dir))), &hyps)?;
        }
    }
    Ok(())
}

/// Decodes the test sets with the probability-averaged ensemble.
pub fn ensemble_translate(ctx: &Ctx) -> CliResult<()> {
    let vocab = read_vocab(&ctx.input(Stage::ExtendVocab, "vocab.txt"))?;
    let loaded = load_models(ctx, &ctx.cfg.systems.ensemble, &vocab)?;
    let models: Vec<&Model> = loaded.iter().map(|(_, m)| m).collect();
    for (dir, side) in DIRECTIONS {
        let hyps = translate_test(ctx, &vocab, dir, side, ctx.seed, |s, r| {
            ensemble_decode(&models, s, dir, &ctx.cfg.decode, r)
        })?;
        write_tokens(&ctx.output(&format!("hyp.ensemble.{}.bpe", dir_tag(dir))), &hyps)?;
    }
    Ok(())
}
