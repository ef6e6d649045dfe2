use unmt_core::bitext::{Bitext, Direction, Lang};
use unmt_core::checkpoint::{self, Checkpoint};
use unmt_core::model::{extend_embeddings, init_model, insert_adapters, Example, ModelConfig};
use unmt_core::rng;
use unmt_core::subword::{oversample_bitext_with_dropout, oversample_with_dropout, DropoutParams, Segmenter, Side, Vocabulary};
use unmt_core::trainer::{
    self, curriculum_score, mass_examples, offline_backtranslate, order_by, CurriculumTask, IdPair, RandomSearch,
    Trainer,
};

use super::io::*;
use super::{Ctx, Stage};
use crate::error::CliResult;

/// Extended vocabulary, joint segmenter, monolingual ids and validation
/// pairs in both directions.
struct Joint {
    vocab: Vocabulary,
    mono: [Vec<Vec<u32>>; 2],
    valid: [Vec<Example>; 2],
}

fn load_joint(ctx: &Ctx) -> CliResult<Joint> {
    let vocab = read_vocab(&ctx.input(Stage::ExtendVocab, "vocab.txt"))?;
    let mono = [
        read_ids(&ctx.input(Stage::ExtendVocab, "train.high.bpe"), &vocab)?,
        read_ids(&ctx.input(Stage::ExtendVocab, "train.low.bpe"), &vocab)?,
    ];
    let vh = encode_lines(&vocab, &read_tokens(&ctx.input(Stage::ExtendVocab, "valid.high.bpe"))?);
    let vl = encode_lines(&vocab, &read_tokens(&ctx.input(Stage::ExtendVocab, "valid.low.bpe"))?);
    let limit = ctx.cfg.schedule.valid_limit;
    let pairs: Vec<(&Vec<u32>, &Vec<u32>)> =
        vh.iter().zip(&vl).filter(|(h, l)| !h.is_empty() && !l.is_empty()).take(limit).collect();
    let valid = [
        pairs.iter().map(|(h, l)| Example::translation(h, l, Direction::HIGH_TO_LOW)).collect(),
        pairs.iter().map(|(h, l)| Example::translation(l, h, Direction::LOW_TO_HIGH)).collect(),
    ];
    Ok(Joint { vocab, mono, valid })
}

impl Joint {
    fn translation_sets(&self) -> Vec<(&'static str, &[Example])> {
        vec![("h2l", &self.valid[0]), ("l2h", &self.valid[1])]
    }

    /// Pseudo-SMT bitexts in both directions, segmented with the joint table.
    fn pseudo_smt(&self, ctx: &Ctx) -> CliResult<Vec<IdPair>> {
        let mut seg = Segmenter::new(read_table(&ctx.input(Stage::LearnBpe, "bpe.joint.txt"))?);
        let dir = ctx.root.join(Stage::PseudoSmt.name());
        let max = ctx.cfg.subword.max_tokens;
        let mut pairs = Vec::new();
        for (stem, d) in [("pseudo.h2l", Direction::HIGH_TO_LOW), ("pseudo.l2h", Direction::LOW_TO_HIGH)] {
            let b = Bitext::read(&dir, stem, d)?;
            pairs.extend(bitext_pairs(&b, &mut seg, &self.vocab, max));
        }
        Ok(pairs)
    }
}

fn load_model(ctx: &Ctx, stage: Stage, vocab: &Vocabulary) -> CliResult<Checkpoint> {
    Ok(checkpoint::load(&ctx.input(stage, "model.ckpt"), Some(&vocab.content_hash()))?)
}

fn finish(ctx: &Ctx, t: &Trainer, vocab: &Vocabulary) -> CliResult<()> {
    checkpoint::save(&ctx.output("model.ckpt"), &t.model, &t.opt, &vocab.content_hash())?;
    write_json_lines(&ctx.output("log.jsonl"), &t.log)
}

/// Runs `steps` updates in chunks, validating on every set after each chunk
/// and once before the first.
fn run_validated(
    ctx: &Ctx,
    t: &mut Trainer,
    steps: usize,
    valid: &[(&str, &[Example])],
    mut train: impl FnMut(&mut Trainer, usize) -> unmt_core::Result<()>,
) -> CliResult<()> {
    let every = ctx.cfg.schedule.validate_every.max(1);
    let validate = |t: &mut Trainer| -> CliResult<()> {
        for (label, v) in valid {
            if !v.is_empty() {
                t.validate(label, v)?;
            }
        }
        Ok(())
    };
    validate(t)?;
    let mut done = 0;
    while done < steps {
        let n = every.min(steps - done);
        train(t, n)?;
        done += n;
        validate(t)?;
    }
    Ok(())
}

fn trainer_for(ctx: &Ctx, model: unmt_core::model::Model) -> Trainer {
    Trainer::new(model, ctx.cfg.train.clone(), ctx.seed)
}

/// MASS on the high-resource side with its own vocabulary.
pub fn pretrain_mass(ctx: &Ctx) -> CliResult<()> {
    let vocab = read_vocab(&ctx.input(Stage::LearnBpe, "vocab.high.txt"))?;
    let corpus = read_ids(&ctx.input(Stage::LearnBpe, "train.high.bpe"), &vocab)?;
    let valid_ids = read_ids(&ctx.input(Stage::LearnBpe, "valid.high.bpe"), &vocab)?;
    let limit = ctx.cfg.schedule.valid_limit;
    let fraction = ctx.cfg.train.mass_fraction;
    let valid = mass_examples(&valid_ids[..valid_ids.len().min(limit)], Lang::HIGH, fraction, ctx.seed);
    let config = ModelConfig { vocab_size: vocab.len(), ..ctx.cfg.model.clone() };
    let mut t = trainer_for(ctx, init_model(&config, ctx.seed)?);
    run_validated(ctx, &mut t, ctx.cfg.schedule.pretrain_mass_steps, &[("mass-high", &valid)], |t, n| {
        trainer::train_mass(t, &[(Lang::HIGH, &corpus)], n)
    })?;
    finish(ctx, &t, &vocab)
}

/// Extends the embeddings to the joint vocabulary, optionally adds
/// adapters, and continues MASS on both languages alternately.
pub fn finetune_mass(ctx: &Ctx) -> CliResult<()> {
    let j = load_joint(ctx)?;
    let old = read_vocab(&ctx.input(Stage::LearnBpe, "vocab.high.txt"))?;
    let ck = load_model(ctx, Stage::PretrainMass, &old)?;
    let mut model = extend_embeddings(&ck.model, &old, &j.vocab, rng::derive(ctx.seed, 1))?;
    if ctx.cfg.schedule.finetune_with_adapters {
        model = insert_adapters(&model, rng::derive(ctx.seed, 2))?;
    }
    let limit = ctx.cfg.schedule.valid_limit;
    let fraction = ctx.cfg.train.mass_fraction;
    let vh: Vec<Vec<u32>> = j.valid[1].iter().take(limit).map(|e| e.dec_out[..e.dec_out.len() - 1].to_vec()).collect();
    let vl: Vec<Vec<u32>> = j.valid[0].iter().take(limit).map(|e| e.dec_out[..e.dec_out.len() - 1].to_vec()).collect();
    let valid_high = mass_examples(&vh, Lang::HIGH, fraction, ctx.seed);
    let valid_low = mass_examples(&vl, Lang::LOW, fraction, ctx.seed);
    let mut t = trainer_for(ctx, model);
    let [high, low] = &j.mono;
    run_validated(
        ctx,
        &mut t,
        ctx.cfg.schedule.finetune_mass_steps,
        &[("mass-high", &valid_high), ("mass-low", &valid_low)],
        |t, n| trainer::train_mass(t, &[(Lang::HIGH, high), (Lang::LOW, low)], n),
    )?;
    finish(ctx, &t, &j.vocab)
}

/// Online backtranslation in both directions with every tensor trainable.
pub fn train_unmt(ctx: &Ctx) -> CliResult<()> {
    let j = load_joint(ctx)?;
    let mut ck = load_model(ctx, Stage::FinetuneMass, &j.vocab)?;
    ck.model.params.clear_freeze();
    let mut t = trainer_for(ctx, ck.model);
    let [high, low] = &j.mono;
    run_validated(ctx, &mut t, ctx.cfg.schedule.unmt_steps, &j.translation_sets(), |t, n| {
        trainer::train_unmt(t, [high, low], &[], n)
    })?;
    finish(ctx, &t, &j.vocab)
}

/// Online backtranslation alternating with pseudo-SMT supervised batches.
pub fn finetune_pseudo(ctx: &Ctx) -> CliResult<()> {
    let j = load_joint(ctx)?;
    let pairs = j.pseudo_smt(ctx)?;
    let ck = load_model(ctx, Stage::TrainUnmt, &j.vocab)?;
    let mut t = trainer_for(ctx, ck.model);
    let [high, low] = &j.mono;
    run_validated(ctx, &mut t, ctx.cfg.schedule.pseudo_steps, &j.translation_sets(), |t, n| {
        trainer::train_unmt(t, [high, low], &pairs, n)
    })?;
    finish(ctx, &t, &j.vocab)
}

/// Searches curriculum weights on the pseudo-SMT data, then fine-tunes
/// with the best ordering, alternating ordered batches with online
/// backtranslation.
pub fn curriculum_search(ctx: &Ctx) -> CliResult<()> {
    let j = load_joint(ctx)?;
    let pairs = j.pseudo_smt(ctx)?;
    let from: Stage = ctx.cfg.systems.curriculum_from.parse()?;
    let base = load_model(ctx, from, &j.vocab)?.model;
    let s = &ctx.cfg.schedule;
    let batch = ctx.cfg.train.batch_size;
    let scores = curriculum_score(&base, &pairs, batch)?;
    let valid = [j.valid[0].clone(), j.valid[1].clone()];
    let task = CurriculumTask {
        base: &base,
        pairs: &pairs,
        scores: &scores,
        valid: &valid,
        train: &ctx.cfg.train,
        seed: ctx.seed,
    };
    let mut strategy = RandomSearch { seed: rng::derive(ctx.seed, 1) };
    let outcome = trainer::curriculum_search(&task, s.curriculum_trials, s.curriculum_updates, &mut strategy)?;
    write_text(&ctx.output("weights.json"), &(serde_json::to_string_pretty(&outcome.best)? + "\n"))?;
    write_json_lines(&ctx.output("trials.jsonl"), &outcome.trials)?;

    let order: Vec<usize> = order_by(&scores, &outcome.best).into_iter().map(|i| scores[i].index).collect();
    let mut t = trainer_for(ctx, base);
    let [high, low] = &j.mono;
    run_validated(ctx, &mut t, s.curriculum_final_steps, &j.translation_sets(), |t, n| {
        for _ in 0..n {
            let step = t.step() as usize;
            if step % 2 == 0 {
                t.ordered_step(&pairs, &order, step / 2)?;
            } else {
                let lang = if (step / 2) % 2 == 0 { Lang::HIGH } else { Lang::LOW };
                t.bt_step(if lang == Lang::HIGH { high } else { low }, lang)?;
            }
        }
        Ok(())
    })?;
    finish(ctx, &t, &j.vocab)
}

/// Translates both monolingual corpora with a trained model and fine-tunes
/// on the result alongside online backtranslation.
pub fn offline_bt(ctx: &Ctx) -> CliResult<()> {
    let j = load_joint(ctx)?;
    let from: Stage = ctx.cfg.systems.offline_bt_from.parse()?;
    let base = load_model(ctx, from, &j.vocab)?.model;
    let s = &ctx.cfg.schedule;
    let batch = ctx.cfg.train.batch_size;
    let mut pairs = Vec::new();
    for (name, lang) in [("high", Lang::HIGH), ("low", Lang::LOW)] {
        let mut lines = read_lines(&ctx.input(Stage::ExtendVocab, &format!("train.{name}.bpe")))?;
        lines.retain(|l| !l.trim().is_empty());
        if s.offline_bt_lines > 0 {
            lines.truncate(s.offline_bt_lines);
        }
        let dir = Direction { src: lang, tgt: lang.other() };
        let seed = rng::derive(ctx.seed, lang.index() as u64);
        let bitext = offline_backtranslate(&base, &lines, &j.vocab, dir, &ctx.cfg.decode, batch, seed)?;
        let stem = format!("pseudo-nmt.{}", dir_tag(dir.reverse()));
        bitext.write(&ctx.dir, &stem)?;
        pairs.extend(segmented_pairs(&bitext, &j.vocab, ctx.cfg.subword.max_tokens));
    }
    let mut t = trainer_for(ctx, base);
    let [high, low] = &j.mono;
    run_validated(ctx, &mut t, s.offline_bt_steps, &j.translation_sets(), |t, n| {
        trainer::train_unmt(t, [high, low], &pairs, n)
    })?;
    finish(ctx, &t, &j.vocab)
}

/// Id pairs from a bitext whose sides are already segmented.
fn segmented_pairs(bitext: &Bitext, vocab: &Vocabulary, max: usize) -> Vec<IdPair> {
    let ids = |s: &str| {
        let mut v = vocab.encode(&s.split_whitespace().collect::<Vec<_>>());
        v.truncate(max);
        v
    };
    bitext
        .pairs
        .iter()
        .map(|p| IdPair { src: ids(&p.source), tgt: ids(&p.target), dir: bitext.direction })
        .filter(|p| !p.src.is_empty() && !p.tgt.is_empty())
        .collect()
}

/// Oversamples the low-side monolingual text and the pseudo-SMT pairs with
/// BPE-dropout on the low side only, then fine-tunes.
pub fn bpe_dropout_finetune(ctx: &Ctx) -> CliResult<()> {
    let j = load_joint(ctx)?;
    let from: Stage = ctx.cfg.systems.dropout_from.parse()?;
    let base = load_model(ctx, from, &j.vocab)?.model;
    let sw = &ctx.cfg.subword;
    let table = read_table(&ctx.input(Stage::LearnBpe, "bpe.joint.txt"))?;
    let drop = DropoutParams::new(sw.dropout_p, ctx.seed)?;
    let low_words = read_tokens(&ctx.input(Stage::Preprocess, "train.low.tok"))?;
    let low_drop: Vec<Vec<String>> = oversample_with_dropout(&low_words, sw.oversample, &table, &drop)?
        .into_iter()
        .map(|mut l| {
            l.truncate(sw.max_tokens);
            l
        })
        .collect();
    let low_ids: Vec<Vec<u32>> = encode_lines(&j.vocab, &low_drop).into_iter().filter(|l| !l.is_empty()).collect();

    let dir = ctx.root.join(Stage::PseudoSmt.name());
    let mut pairs = Vec::new();
    for (stem, d, side) in [
        ("pseudo.h2l", Direction::HIGH_TO_LOW, Side::Target),
        ("pseudo.l2h", Direction::LOW_TO_HIGH, Side::Source),
    ] {
        let b = Bitext::read(&dir, stem, d)?;
        let words: Vec<(Vec<String>, Vec<String>)> = b
            .pairs
            .iter()
            .map(|p| {
                let split = |s: &str| s.split_whitespace().map(str::to_owned).collect::<Vec<_>>();
                (split(&p.source), split(&p.target))
            })
            .collect();
        let seg = oversample_bitext_with_dropout(&words, sw.oversample, (&table, &table), &drop, side)?;
        for (s, t) in seg {
            let mut src = j.vocab.encode(&s);
            let mut tgt = j.vocab.encode(&t);
            src.truncate(sw.max_tokens);
            tgt.truncate(sw.max_tokens);
            if !src.is_empty() && !tgt.is_empty() {
                pairs.push(IdPair { src, tgt, dir: d });
            }
        }
    }
    let mut t = trainer_for(ctx, base);
    let high = &j.mono[0];
    run_validated(ctx, &mut t, ctx.cfg.schedule.dropout_steps, &j.translation_sets(), |t, n| {
        trainer::train_unmt(t, [high, &low_ids], &pairs, n)
    })?;
    finish(ctx, &t, &j.vocab)
}
