//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line.
//! Tests hold a shared lock so timings are not skewed by each other.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::seq::SliceRandom as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use unmt_cli::config::PipelineConfig;
use unmt_cli::demo::{demo_config, write_demo, DemoConfig};
use unmt_cli::run_stages;
use unmt_cli::stages::{Stage, ALL};
use unmt_cli::workdir::StageManifest;
use unmt_core::bitext::{Direction, Lang};
use unmt_core::checkpoint;
use unmt_core::decode::{bleu, decode_batch, ensemble_decode, DecodeMode, DecodeParams};
use unmt_core::lexinduct::{procrustes_map, EmbeddingTable, SeedDictionary};
use unmt_core::model::{extend_embeddings, init_model, insert_adapters, Example, Model, ModelConfig};
use unmt_core::rng;
use unmt_core::subword::{
    build_vocab, extend_vocab, learn_bpe, segment, segment_with_rng, DropoutParams, Segmenter, END_OF_WORD,
};
use unmt_core::trainer::{
    curriculum_score, curriculum_search, mass_mask, online_bt_step, order_by, train_unmt, AdamConfig, BtParams,
    CurriculumTask, CurriculumWeights, GenerationMode, IdPair, RandomSearch, TrainConfig, Trainer,
};

static SERIAL: Mutex<()> = Mutex::new(());

/// Runs one criterion under the shared lock and prints its verdict line.
fn criterion(n: u32, title: &str, check: impl FnOnce() -> Result<String, String>) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let result = check();
    let secs = start.elapsed().as_secs_f64();
    match &result {
        Ok(detail) => println!("criterion {n}: PASS {title} ({detail}; {secs:.1}s)"),
        Err(detail) => println!("criterion {n}: FAIL {title} ({detail}; {secs:.1}s)"),
    }
    if let Err(detail) = result {
        panic!("criterion {n} failed: {detail}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tiny_config(layers: usize, d: usize, vocab: usize, adapters: bool) -> ModelConfig {
    ModelConfig {
        n_layers_enc: layers,
        n_layers_dec: layers,
        d_model: d,
        d_ffn: 2 * d,
        n_heads: 2,
        max_len: 24,
        adapters_enabled: adapters,
        d_adapter: 3,
        ..ModelConfig::desk(vocab)
    }
}

/// Adds uniform noise to every tensor so no gradient path is trivially zero.
fn perturb(m: &mut Model, seed: u64, scale: f64) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = m.params.names().map(str::to_owned).collect();
    for n in names {
        let mut t = m.params.get(&n).unwrap().clone();
        t.iter_mut().for_each(|x| *x += r.random_range(-scale..scale));
        m.params.set(&n, t).unwrap();
    }
}

fn random_batch(r: &mut ChaCha8Rng, n: usize, vocab: u32) -> Vec<Example> {
    (0..n)
        .map(|i| {
            let src: Vec<u32> = (0..r.random_range(1..7)).map(|_| r.random_range(5..vocab)).collect();
            let tgt: Vec<u32> = (0..r.random_range(0..6)).map(|_| r.random_range(5..vocab)).collect();
            let dir = if i % 2 == 0 { Direction::HIGH_TO_LOW } else { Direction::LOW_TO_HIGH };
            Example::translation(&src, &tgt, dir)
        })
        .collect()
}

#[test]
fn criterion_01_bpe_matches_brute_force() {
    criterion(1, "BPE merge tables equal the brute-force oracle", || {
        let start = Instant::now();
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for i in 0..20 {
            let distinct = r.random_range(20..=200);
            let merges = r.random_range(1..=50);
            let corpus = oracles::random_corpus(100 + i, distinct, distinct * 4);
            let got = learn_bpe(&corpus, merges).map_err(|e| e.to_string())?;
            let want = oracles::brute_force_bpe(&corpus, merges);
            ensure(got.merges() == want.as_slice(), || format!("corpus {i}: tables differ"))?;
        }
        let secs = start.elapsed().as_secs_f64();
        ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
        Ok("20 corpora".into())
    });
}

#[test]
fn criterion_02_dropout_limits() {
    criterion(2, "BPE-dropout limits and reconstruction", || {
        let corpus = oracles::random_corpus(7, 200, 3000);
        let table = learn_bpe(&corpus, 150).map_err(|e| e.to_string())?;
        let mut det = Segmenter::new(table.clone());
        let words = oracles::random_corpus(8, 10_000, 10_000);
        let zero = DropoutParams::new(0.0, 3).unwrap();
        let one = DropoutParams::new(1.0, 3).unwrap();
        for w in &words {
            ensure(segment(w, &table, &zero) == det.segment_word(w), || format!("p=0 differs on {w}"))?;
            ensure(segment(w, &table, &one) == oracles::apply_in_rank_order(w, &[]), || {
                format!("p=1 is not characters on {w}")
            })?;
        }
        let mut runner = TestRunner::new(PropConfig { cases: 10_000, failure_persistence: None, ..PropConfig::default() });
        runner
            .run(&("[a-eé]{1,12}", 0.0f64..=1.0, any::<u64>()), |(word, p, seed)| {
                let segs = segment_with_rng(&word, &table, p, &mut rng::rng(seed));
                let joined = segs.concat();
                prop_assert_eq!(joined.strip_suffix(END_OF_WORD), Some(word.as_str()));
                Ok(())
            })
            .map_err(|e| e.to_string())?;
        Ok(format!("{} words, 10000 property cases", words.len()))
    });
}

#[test]
fn criterion_03_vocab_extension_stability() {
    criterion(3, "vocabulary extension keeps ids and old logits", || {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        for case in 0..10u64 {
            let word = |r: &mut ChaCha8Rng| format!("w{}", r.random_range(0..60));
            let base_lines: Vec<Vec<String>> = (0..40).map(|_| vec![word(&mut r)]).collect();
            let joint_lines: Vec<Vec<String>> = (0..40).map(|_| vec![word(&mut r), format!("x{}", r.random_range(0..30))]).collect();
            let base = build_vocab(&base_lines);
            let joint = build_vocab(&joint_lines);
            let (ext, _) = extend_vocab(&base, &joint).map_err(|e| e.to_string())?;
            for (t, _) in base.tokens() {
                ensure(ext.id(t) == base.id(t), || format!("case {case}: {t} moved"))?;
            }
            let cfg = ModelConfig { tie_output: false, ..tiny_config(2, 8, base.len(), false) };
            let m = init_model(&cfg, case).map_err(|e| e.to_string())?;
            let m2 = extend_embeddings(&m, &base, &ext, case + 1).map_err(|e| e.to_string())?;
            let batch = random_batch(&mut r, 6, base.len() as u32);
            let before = m.logits(&batch).map_err(|e| e.to_string())?;
            let after = m2.logits(&batch).map_err(|e| e.to_string())?;
            for (b, a) in before.iter().zip(&after) {
                let old = a.slice(ndarray::s![.., ..base.len()]);
                ensure(b == &old, || format!("case {case}: logits over old ids changed"))?;
            }
        }
        Ok("10 vocabulary pairs".into())
    });
}

fn gradient_check(layers: usize, adapters: bool) -> f64 {
    let mut model = init_model(&tiny_config(layers, 8, 11, adapters), 7).unwrap();
    perturb(&mut model, 8, 0.5);
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let batch = random_batch(&mut r, 4, 11);
    let out = model.forward_loss_backward(&batch).unwrap();
    let coords: Vec<(String, usize)> =
        model.params.iter().flat_map(|(n, t)| (0..t.len()).map(move |i| (n.to_owned(), i))).collect();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (name, idx) = &coords[r.random_range(0..coords.len())];
        let base = model.params.get(name).unwrap().clone();
        let eval = |delta: f64| {
            let mut m = model.clone();
            let mut t = base.clone();
            t.as_slice_mut().unwrap()[*idx] += delta;
            m.params.set(name, t).unwrap();
            m.forward_loss(&batch).unwrap().loss
        };
        let numeric = (eval(h) - eval(-h)) / (2.0 * h);
        let analytic = out.grads.get(name).map_or(0.0, |g| g.as_slice().unwrap()[*idx]);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn criterion_04_gradient_check() {
    criterion(4, "analytic gradients match central differences", || {
        let start = Instant::now();
        let mut worst: f64 = 0.0;
        for (layers, adapters) in [(1, false), (2, false), (1, true), (2, true)] {
            worst = worst.max(gradient_check(layers, adapters));
        }
        let secs = start.elapsed().as_secs_f64();
        ensure(worst < 1e-4, || format!("max relative error {worst:e}"))?;
        ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
        Ok(format!("max relative error {worst:.2e}"))
    });
}

#[test]
fn criterion_05_freeze_invariance() {
    criterion(5, "frozen tensors untouched; adapter insertion preserves outputs", || {
        let mut base = init_model(&tiny_config(2, 16, 12, false), 6).unwrap();
        perturb(&mut base, 5, 0.2);
        let model = insert_adapters(&base, 7).map_err(|e| e.to_string())?;
        let probe = random_batch(&mut ChaCha8Rng::seed_from_u64(4), 8, 12);
        ensure(base.log_probs(&probe).unwrap() == model.log_probs(&probe).unwrap(), || {
            "insertion changed the forward output".into()
        })?;
        let frozen: Vec<(String, _)> =
            model.params.frozen().iter().map(|n| (n.clone(), model.params.get(n).unwrap().clone())).collect();
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let mut sentences = |n: usize| -> Vec<Vec<u32>> {
            (0..n).map(|_| (0..r.random_range(1..7)).map(|_| r.random_range(5..12)).collect()).collect()
        };
        let high = sentences(30);
        let low = sentences(30);
        let pseudo: Vec<IdPair> = high
            .iter()
            .zip(&low)
            .map(|(h, l)| IdPair { src: h.clone(), tgt: l.clone(), dir: Direction::HIGH_TO_LOW })
            .collect();
        let train = TrainConfig {
            batch_size: 4,
            adam: AdamConfig { base_lr: 1e-2, warmup_steps: 10, ..Default::default() },
            ..Default::default()
        };
        let mut t = Trainer::new(model, train, 1);
        train_unmt(&mut t, [&high, &low], &pseudo, 100).map_err(|e| e.to_string())?;
        for (name, before) in &frozen {
            ensure(t.model.params.get(name).unwrap() == before, || format!("{name} changed"))?;
        }
        let adapter = t.model.params.get("enc.0.adapter.up.w").unwrap();
        ensure(adapter.iter().any(|&x| x != 0.0), || "adapters did not train".into())?;
        Ok(format!("{} frozen tensors over 100 steps", frozen.len()))
    });
}

#[test]
fn criterion_06_procrustes_recovery() {
    criterion(6, "Procrustes recovers a planted rotation", || {
        let (n, d) = (500, 32);
        let to_matrix = |rows: &[Vec<f64>]| nalgebra::DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        let x_rows = oracles::random_rows(n, d, 11);
        let rot = oracles::random_orthogonal(d, 12);
        let y_rows = oracles::matmul(&x_rows, &rot);
        let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let x = EmbeddingTable::new(words.clone(), to_matrix(&x_rows)).map_err(|e| e.to_string())?;
        let y = EmbeddingTable::new(words.clone(), to_matrix(&y_rows)).map_err(|e| e.to_string())?;
        let seed = SeedDictionary { pairs: words.iter().map(|w| (w.clone(), w.clone())).collect() };
        let w = procrustes_map(&x, &y, &seed).map_err(|e| e.to_string())?;
        let err = (&w - to_matrix(&rot)).norm();
        let ortho = (w.transpose() * &w - nalgebra::DMatrix::identity(d, d)).norm();
        ensure(err < 1e-6, || format!("|W - R| = {err:e}"))?;
        ensure(ortho < 1e-8, || format!("|WtW - I| = {ortho:e}"))?;
        Ok(format!("|W - R| = {err:.1e}, |WtW - I| = {ortho:.1e}"))
    });
}

#[test]
fn criterion_07_ensemble_identity() {
    criterion(7, "ensemble of copies and beam 1 match single greedy", || {
        let mut m = init_model(&tiny_config(1, 16, 13, false), 1).unwrap();
        perturb(&mut m, 2, 0.3);
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let srcs: Vec<Vec<u32>> =
            (0..100).map(|_| (0..r.random_range(1..8)).map(|_| r.random_range(5..13)).collect()).collect();
        let dir = Direction::HIGH_TO_LOW;
        let mut g = rng::rng(0);
        let greedy = decode_batch(&m, &srcs, dir, &DecodeParams::greedy(12), &mut g).unwrap();
        let b1 = DecodeParams { mode: DecodeMode::Beam, beam_size: 1, max_len: 12, ..Default::default() };
        let beam = decode_batch(&m, &srcs, dir, &b1, &mut g).unwrap();
        ensure(greedy.iter().zip(&beam).all(|(a, b)| a.tokens == b.tokens), || "beam 1 differs from greedy".into())?;
        for dp in [DecodeParams::greedy(12), DecodeParams { max_len: 12, beam_size: 4, ..Default::default() }] {
            let single = decode_batch(&m, &srcs, dir, &dp, &mut g).unwrap();
            for k in 2..=3 {
                let copies = vec![&m; k];
                let ens = ensemble_decode(&copies, &srcs, dir, &dp, &mut g).unwrap();
                ensure(single.iter().zip(&ens).all(|(a, b)| a.tokens == b.tokens), || {
                    format!("{k} copies differ under {:?}", dp.mode)
                })?;
            }
        }
        Ok("100 inputs, greedy and beam 4, k = 2 and 3".into())
    });
}

#[test]
fn criterion_08_bleu_correctness() {
    criterion(8, "BLEU identity, hand example and bounds", || {
        let refs = ["the cat sat on the mat .", "a dog barked", "x"];
        let same = bleu(&refs, &refs).map_err(|e| e.to_string())?.score;
        ensure(same == 100.0, || format!("score(ref, ref) = {same}"))?;
        // One unigram match out of four, no higher-order matches, equal
        // lengths: precisions 1/4, 1/6, 1/8, 1/8 after add-one smoothing.
        let expected = 100.0 * ((1.0 / 4.0) * (1.0 / 6.0) * (1.0 / 8.0) * (1.0 / 8.0f64)).powf(0.25);
        let hand = bleu(&["the the the the"], &["the cat sat down"]).map_err(|e| e.to_string())?.score;
        ensure((hand - expected).abs() < 5e-5, || format!("hand example {hand} vs {expected}"))?;
        let mut runner = TestRunner::new(PropConfig { cases: 2000, failure_persistence: None, ..PropConfig::default() });
        runner
            .run(&(prop::collection::vec(("[a-c ,.]{0,14}", "[a-c ,.]{0,14}"), 1..6)), |pairs| {
                let (h, r): (Vec<String>, Vec<String>) = pairs.into_iter().unzip();
                let s = bleu(&h, &r).unwrap().score;
                prop_assert!((0.0..=100.0).contains(&s), "score {}", s);
                Ok(())
            })
            .map_err(|e| e.to_string())?;
        Ok(format!("hand example {hand:.4}, 2000 fuzz cases"))
    });
}

#[test]
fn criterion_09_sampling_and_mass_positions() {
    criterion(9, "sampling frequency and MASS start positions within 3 sigma", || {
        let model = init_model(&tiny_config(1, 8, 11, false), 3).unwrap();
        let bt = BtParams { sample_prob: 0.5, temperature: 0.95 };
        let n = 10_000;
        let mut sampled = 0usize;
        for i in 0..n {
            let step = online_bt_step(&model, &[vec![5, 6]], Lang::HIGH, &bt, &mut rng::rng(rng::derive(11, i)))
                .map_err(|e| e.to_string())?;
            sampled += (step.mode == GenerationMode::Sample) as usize;
        }
        let sigma = (n as f64 * 0.25).sqrt();
        ensure((sampled as f64 - 5000.0).abs() <= 3.0 * sigma, || format!("sampled {sampled} of {n}"))?;

        let sentence: Vec<u32> = (10..20).collect();
        let mut counts = [0usize; 6];
        let mut r = rng::rng(42);
        for _ in 0..n {
            counts[mass_mask(&sentence, 0.5, &mut r).unwrap().start] += 1;
        }
        let p = 1.0 / 6.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            ensure((c as f64 - n as f64 * p).abs() <= 3.0 * sigma, || format!("start counts {counts:?}"))?;
        }
        Ok(format!("sampled {sampled}/{n}, start counts {counts:?}"))
    });
}

/// Clean pairs are a token cipher of random source sentences; noise pairs
/// have the cipher of an unrelated sentence with its words shuffled.
fn planted_pairs(n_clean: usize, n_noise: usize, seed: u64) -> (Vec<IdPair>, Vec<bool>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let sentence = |r: &mut ChaCha8Rng| -> Vec<u32> { (0..r.random_range(3..8)).map(|_| r.random_range(5..25)).collect() };
    let cipher = |s: &[u32]| -> Vec<u32> { s.iter().map(|t| t + 20).collect() };
    let mut items: Vec<(IdPair, bool)> = Vec::new();
    for _ in 0..n_clean {
        let s = sentence(&mut r);
        items.push((IdPair { tgt: cipher(&s), src: s, dir: Direction::HIGH_TO_LOW }, true));
    }
    for _ in 0..n_noise {
        let s = sentence(&mut r);
        let mut t = cipher(&sentence(&mut r));
        t.shuffle(&mut r);
        items.push((IdPair { src: s, tgt: t, dir: Direction::HIGH_TO_LOW }, false));
    }
    items.shuffle(&mut r);
    items.into_iter().unzip()
}

#[test]
fn criterion_10_curriculum_sanity() {
    criterion(10, "curriculum ordering and planted clean-first search", || {
        let start = Instant::now();
        let cfg = ModelConfig { max_len: 16, ..tiny_config(1, 16, 45, false) };
        let train = TrainConfig {
            batch_size: 4,
            adam: AdamConfig { base_lr: 3e-3, warmup_steps: 20, ..Default::default() },
            ..Default::default()
        };
        // Trained on held-out clean pairs until scores separate clean from noise.
        let (warm, _) = planted_pairs(400, 0, 1);
        let mut t = Trainer::new(init_model(&cfg, 2).unwrap(), train.clone(), 3);
        let all: Vec<usize> = (0..warm.len()).collect();
        for _ in 0..1000 {
            t.random_pairs_step(&warm, &all).map_err(|e| e.to_string())?;
        }
        let base = t.model;

        // 200 updates of 4 pairs consume exactly the first half of the order.
        let (pairs, clean) = planted_pairs(800, 800, 4);
        let scores = curriculum_score(&base, &pairs, 32).map_err(|e| e.to_string())?;
        let identity: Vec<usize> = (0..pairs.len()).collect();
        ensure(order_by(&scores, &CurriculumWeights::zero()) == identity, || "zero weights reorder".into())?;
        let w = CurriculumWeights::new([0.7, -0.2, 0.4, 0.1]).unwrap();
        let w_scaled = CurriculumWeights::new([0.35, -0.1, 0.2, 0.05]).unwrap();
        ensure(order_by(&scores, &w) == order_by(&scores, &w_scaled), || "rescaling changes order".into())?;

        let (valid_pairs, _) = planted_pairs(40, 0, 5);
        // Only the trained direction; the untouched reverse adds noise unrelated to data quality.
        let valid = vec![valid_pairs.iter().map(IdPair::example).collect::<Vec<_>>()];
        let task = CurriculumTask { base: &base, pairs: &pairs, scores: &scores, valid: &valid, train: &train, seed: 6 };
        let outcome = curriculum_search(&task, 8, 200, &mut RandomSearch { seed: 7 }).map_err(|e| e.to_string())?;
        let order = order_by(&scores, &outcome.best);
        let half = order.len() / 2;
        let clean_first = order[..half].iter().filter(|&&i| clean[scores[i].index]).count();
        let frac = clean_first as f64 / clean.iter().filter(|&&c| c).count() as f64;
        let secs = start.elapsed().as_secs_f64();
        ensure(frac >= 0.7, || format!("clean fraction in first half {frac:.3}, weights {:?}", outcome.best))?;
        ensure(secs < 900.0, || format!("took {secs:.0}s"))?;
        Ok(format!("clean pairs in first half {:.1}%", 100.0 * frac))
    });
}

fn read_report(workdir: &Path) -> BTreeMap<String, BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(workdir.join("evaluate/report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut out = BTreeMap::new();
    for (system, tags) in v["systems"].as_object().unwrap() {
        let scores = tags.as_object().unwrap().iter().map(|(t, r)| (t.clone(), r["score"].as_f64().unwrap())).collect();
        out.insert(system.clone(), scores);
    }
    out
}

#[test]
fn criterion_11_cipher_end_to_end() {
    criterion(11, "cipher experiment: oracle lexicon, full recipe, BPE-dropout", || {
        let start = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let demo = DemoConfig::default();
        let paths = write_demo(dir.path(), &demo).map_err(|e| e.to_string())?;
        let mut cfg = demo_config(&paths, dir.path().join("work"), demo.seed);
        cfg.systems.translate = vec!["finetune-pseudo".into(), "bpe-dropout-finetune".into()];
        let stages = [
            Stage::Preprocess,
            Stage::LearnBpe,
            Stage::ExtendVocab,
            Stage::EmbedMap,
            Stage::PseudoSmt,
            Stage::PretrainMass,
            Stage::FinetuneMass,
            Stage::TrainUnmt,
            Stage::FinetunePseudo,
            Stage::BpeDropoutFinetune,
            Stage::Translate,
            Stage::Postprocess,
            Stage::Evaluate,
        ];
        run_stages(&cfg, &stages, |s, st| eprintln!("{s}: {st} at {:.0}s", start.elapsed().as_secs_f64()))
            .map_err(|e| e.to_string())?;
        let report = read_report(&cfg.workdir);
        let score = |system: &str, tag: &str| report[system][tag];
        let mut lines = Vec::new();
        let mut failures = Vec::new();
        for tag in ["h2l", "l2h"] {
            let oracle = score("oracle-lexicon", tag);
            let lexicon = score("lexicon", tag);
            let recipe = score("finetune-pseudo", tag);
            let dropout = score("bpe-dropout-finetune", tag);
            lines.push(format!(
                "{tag}: oracle {oracle:.2}, lexicon {lexicon:.2}, recipe {recipe:.2}, dropout {dropout:.2}"
            ));
            if oracle < 95.0 {
                failures.push(format!("{tag} oracle lexicon {oracle:.2} < 95"));
            }
            if recipe < lexicon + 5.0 {
                failures.push(format!("{tag} recipe {recipe:.2} < lexicon {lexicon:.2} + 5"));
            }
            if dropout < recipe - 1.0 {
                failures.push(format!("{tag} dropout {dropout:.2} < recipe {recipe:.2} - 1"));
            }
        }
        let secs = start.elapsed().as_secs_f64();
        if secs >= 3600.0 {
            failures.push(format!("took {secs:.0}s"));
        }
        let summary = lines.join("; ");
        if failures.is_empty() {
            Ok(summary)
        } else {
            Err(format!("{summary}; {}", failures.join(", ")))
        }
    });
}

/// Every stage, sized to finish in a few minutes.
fn small_config(data: &Path, workdir: &Path) -> PipelineConfig {
    let demo = DemoConfig { train_lines: 300, valid_lines: 20, test_lines: 20, ..DemoConfig::default() };
    let paths = write_demo(data, &demo).unwrap();
    let mut cfg = demo_config(&paths, workdir.to_owned(), 5);
    cfg.model = ModelConfig { d_model: 16, d_ffn: 32, n_heads: 2, n_layers_enc: 1, n_layers_dec: 1, d_adapter: 8, ..cfg.model };
    cfg.train.batch_size = 8;
    let s = &mut cfg.schedule;
    s.pretrain_mass_steps = 20;
    s.finetune_mass_steps = 20;
    s.finetune_with_adapters = true;
    s.unmt_steps = 12;
    s.pseudo_steps = 12;
    s.curriculum_trials = 2;
    s.curriculum_updates = 5;
    s.curriculum_final_steps = 8;
    s.offline_bt_steps = 8;
    s.offline_bt_lines = 20;
    s.dropout_steps = 8;
    s.validate_every = 10;
    s.valid_limit = 10;
    cfg.decode.beam_size = 2;
    cfg.decode.max_len = 12;
    cfg
}

fn manifests(workdir: &Path) -> BTreeMap<String, StageManifest> {
    ALL.iter()
        .map(|s| {
            let text = std::fs::read_to_string(workdir.join(s.name()).join("manifest.json")).unwrap();
            (s.name().to_owned(), serde_json::from_str(&text).unwrap())
        })
        .collect()
}

#[test]
fn criterion_12_determinism_and_resume() {
    criterion(12, "identical artifacts across runs; resume equals uninterrupted", || {
        let tmp = tempfile::tempdir().unwrap();
        let runs: Vec<BTreeMap<String, StageManifest>> = ["a", "b"]
            .iter()
            .map(|name| {
                let root = tmp.path().join(name);
                let cfg = small_config(&root.join("data"), &root.join("work"));
                run_stages(&cfg, &ALL, |_, _| {}).unwrap();
                manifests(&cfg.workdir)
            })
            .collect();
        let mut files = 0;
        for (stage, a) in &runs[0] {
            let b = &runs[1][stage];
            ensure(a.outputs == b.outputs, || format!("{stage} outputs differ"))?;
            files += a.outputs.len();
        }

        // A second pass over the same workdir is a no-op.
        let root = tmp.path().join("a");
        let cfg = small_config(&root.join("data"), &root.join("work"));
        let statuses = run_stages(&cfg, &ALL, |_, _| {}).map_err(|e| e.to_string())?;
        ensure(statuses.iter().all(|(_, s)| s.to_string() == "up-to-date"), || "rerun was not a no-op".into())?;

        // Resume through a serialized checkpoint matches uninterrupted training.
        let model = init_model(&tiny_config(1, 16, 30, false), 1).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let mut mono = |lo: u32| -> Vec<Vec<u32>> {
            (0..40).map(|_| (0..r.random_range(1..7)).map(|_| r.random_range(lo..lo + 12)).collect()).collect()
        };
        let (high, low) = (mono(5), mono(17));
        let train = TrainConfig { batch_size: 4, ..Default::default() };
        let mut full = Trainer::new(model.clone(), train.clone(), 9);
        train_unmt(&mut full, [&high, &low], &[], 12).map_err(|e| e.to_string())?;
        let mut first = Trainer::new(model, train.clone(), 9);
        train_unmt(&mut first, [&high, &low], &[], 6).map_err(|e| e.to_string())?;
        let bytes = checkpoint::to_bytes(&first.model, &first.opt, "v").map_err(|e| e.to_string())?;
        let ck = checkpoint::from_bytes(&bytes, Some("v")).map_err(|e| e.to_string())?;
        let mut resumed = Trainer::resume(ck.model, ck.opt, train, 9);
        train_unmt(&mut resumed, [&high, &low], &[], 6).map_err(|e| e.to_string())?;
        ensure(resumed.model == full.model, || "resumed weights differ".into())?;
        ensure(resumed.opt == full.opt, || "resumed optimizer state differs".into())?;
        Ok(format!("{} stages, {files} artifact hashes equal", ALL.len()))
    });
}
