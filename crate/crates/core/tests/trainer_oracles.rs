use approx::assert_abs_diff_eq;
use ndarray::{arr1, Axis};
use proptest::prelude::*;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use unmt_core::bitext::{Direction, Lang, Provenance};
use unmt_core::checkpoint;
use unmt_core::decode::DecodeParams;
use unmt_core::model::{init_model, insert_adapters, Example, Gradients, Model, ModelConfig, Parameters};
use unmt_core::rng;
use unmt_core::subword::{build_vocab, EOS};
use unmt_core::trainer::*;
use unmt_core::Error;

fn toy_config(vocab: usize, d: usize, layers: usize) -> ModelConfig {
    ModelConfig {
        n_layers_enc: layers,
        n_layers_dec: layers,
        d_model: d,
        d_ffn: 2 * d,
        n_heads: 2,
        max_len: 24,
        d_adapter: 4,
        ..ModelConfig::desk(vocab)
    }
}

fn toy_train(lr: f64, warmup: u64, batch: usize) -> TrainConfig {
    TrainConfig {
        batch_size: batch,
        adam: AdamConfig { base_lr: lr, warmup_steps: warmup, ..Default::default() },
        ..Default::default()
    }
}

fn random_sentences(seed: u64, n: usize, lo: usize, hi: usize, vocab: u32) -> Vec<Vec<u32>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..r.random_range(lo..hi)).map(|_| r.random_range(5..vocab)).collect()).collect()
}

fn scalar_model(value: f64) -> Model {
    let mut params = Parameters::default();
    params.insert("w", arr1(&[value]).into_dyn());
    Model { config: ModelConfig::desk(11), params }
}

#[test]
fn adam_three_steps_match_hand_recurrence() {
    let cfg = AdamConfig { base_lr: 0.01, warmup_steps: 2, beta1: 0.9, beta2: 0.98, eps: 1e-9 };
    let grads = [0.3, -1.2, 0.05];
    let mut model = scalar_model(0.5);
    let mut opt = OptimState::new(cfg);
    for g in grads {
        let mut gr = Gradients::default();
        gr.insert("w", arr1(&[g]).into_dyn());
        optimizer_step(&mut model, &gr, &mut opt).unwrap();
    }
    // step 1: lr = 0.01 * min(1/2, sqrt(2)) = 0.005
    let m1 = 0.1 * 0.3;
    let v1 = 0.02 * 0.09;
    let p1 = 0.5 - 0.005 * (m1 / 0.1) / ((v1 / 0.02f64).sqrt() + 1e-9);
    // step 2: lr = 0.01
    let m2 = 0.9 * m1 + 0.1 * -1.2;
    let v2 = 0.98 * v1 + 0.02 * 1.44;
    let p2 = p1 - 0.01 * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.9604f64)).sqrt() + 1e-9);
    // step 3: lr = 0.01 * sqrt(2/3)
    let m3 = 0.9 * m2 + 0.1 * 0.05;
    let v3 = 0.98 * v2 + 0.02 * 0.0025;
    let lr3 = 0.01 * (2.0f64 / 3.0).sqrt();
    let p3 = p2 - lr3 * (m3 / (1.0 - 0.729)) / ((v3 / (1.0 - 0.941192f64)).sqrt() + 1e-9);
    assert_eq!(opt.step, 3);
    assert_abs_diff_eq!(model.params.get("w").unwrap()[[0]], p3, epsilon = 1e-14);
}

#[test]
fn optimizer_rejects_shape_mismatch() {
    let mut model = scalar_model(0.0);
    let mut gr = Gradients::default();
    gr.insert("w", arr1(&[1.0, 2.0]).into_dyn());
    let mut opt = OptimState::new(AdamConfig::default());
    assert!(matches!(optimizer_step(&mut model, &gr, &mut opt), Err(Error::ShapeMismatch { .. })));
    assert_eq!(opt.step, 0);
}

#[test]
fn mass_start_positions_uniform() {
    let sentence: Vec<u32> = (10..20).collect();
    let n = 10_000;
    let mut counts = [0usize; 6];
    let mut r = rng::rng(42);
    for _ in 0..n {
        counts[mass_mask(&sentence, 0.5, &mut r).unwrap().start] += 1;
    }
    let p = 1.0 / 6.0;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
    }
}

proptest! {
    #[test]
    fn mass_span_contiguous_with_formula(len in 2usize..60, fraction in 0.001f64..0.999, seed in any::<u64>()) {
        let s: Vec<u32> = (0..len as u32).map(|i| i + 5).collect();
        let m = mass_mask(&s, fraction, &mut rng::rng(seed)).unwrap();
        let span = ((fraction * len as f64).round() as usize).max(1);
        prop_assert_eq!(m.fragment.len(), span);
        prop_assert_eq!(&s[m.start..m.start + span], m.fragment.as_slice());
        prop_assert_eq!(&m.masked[..m.start], &s[..m.start]);
        prop_assert_eq!(&m.masked[m.start + span..], &s[m.start + span..]);
        prop_assert!(m.masked[m.start..m.start + span].iter().all(|&t| t == unmt_core::subword::MASK));
    }
}

fn bt_model() -> Model {
    init_model(&toy_config(11, 8, 1), 3).unwrap()
}

#[test]
fn sampling_frequency_within_binomial_bound() {
    let model = bt_model();
    let bt = BtParams { sample_prob: 0.5, temperature: 0.95 };
    let mono = vec![vec![5u32, 6]];
    let n = 10_000;
    let mut sampled = 0usize;
    for i in 0..n {
        let step = online_bt_step(&model, &mono, Lang::HIGH, &bt, &mut rng::rng(rng::derive(11, i))).unwrap();
        sampled += (step.mode == GenerationMode::Sample) as usize;
    }
    let sigma = (n as f64 * 0.25).sqrt();
    assert!((sampled as f64 - 5000.0).abs() <= 3.0 * sigma, "sampled {sampled}");
}

#[test]
fn zero_sample_prob_always_greedy() {
    let model = bt_model();
    let bt = BtParams { sample_prob: 0.0, temperature: 0.95 };
    for i in 0..200 {
        let step = online_bt_step(&model, &[vec![5, 7, 9]], Lang::LOW, &bt, &mut rng::rng(i)).unwrap();
        assert_eq!(step.mode, GenerationMode::Greedy);
    }
}

#[test]
fn bt_pairs_target_original_and_carry_no_generation_gradient() {
    let model = bt_model();
    let mono = random_sentences(5, 6, 1, 8, 11);
    let bt = BtParams::default();
    let step = online_bt_step(&model, &mono, Lang::HIGH, &bt, &mut rng::rng(8)).unwrap();
    for (ex, orig) in step.batch.iter().zip(&mono) {
        assert_eq!(&ex.dec_out[..orig.len()], orig.as_slice());
        assert_eq!(ex.dec_out[orig.len()], EOS);
        assert_eq!(&ex.dec_in[1..], orig.as_slice());
        assert_eq!((ex.src_lang, ex.tgt_lang), (Lang::LOW, Lang::HIGH));
    }
    // The gradient equals that of a plain supervised pass over the
    // generated pairs treated as fixed data.
    let fixed = model.forward_loss_backward(&step.batch).unwrap();
    assert_eq!(step.output.grads, fixed.grads);
    assert_eq!(step.output.loss, fixed.loss);
}

fn token_accuracy(model: &Model, batch: &[Example]) -> f64 {
    let lps = model.log_probs(batch).unwrap();
    let (mut hit, mut total) = (0usize, 0usize);
    for (lp, ex) in lps.iter().zip(batch) {
        for (row, &gold) in lp.axis_iter(Axis(0)).zip(&ex.dec_out) {
            let arg = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            hit += (arg as u32 == gold) as usize;
            total += 1;
        }
    }
    hit as f64 / total as f64
}

fn copy_pairs() -> Vec<IdPair> {
    random_sentences(21, 50, 2, 7, 14)
        .into_iter()
        .map(|s| IdPair { src: s.clone(), tgt: s, dir: Direction::HIGH_TO_LOW })
        .collect()
}

fn train_copy(steps: usize) -> Model {
    let pairs = copy_pairs();
    let all: Vec<usize> = (0..pairs.len()).collect();
    let mut t = Trainer::new(init_model(&toy_config(14, 32, 1), 4).unwrap(), toy_train(3e-3, 50, 25), 9);
    for _ in 0..steps {
        t.random_pairs_step(&pairs, &all).unwrap();
    }
    t.model
}

#[test]
fn copy_task_overfits() {
    let model = train_copy(600);
    let batch: Vec<Example> = copy_pairs().iter().map(IdPair::example).collect();
    let acc = token_accuracy(&model, &batch);
    assert!(acc > 0.99, "accuracy {acc}");
    let pairs: Vec<(Vec<u32>, Vec<u32>)> = copy_pairs().into_iter().map(|p| (p.src, p.tgt)).collect();
    let ppl = validate_ppl(&model, &pairs, Direction::HIGH_TO_LOW, 16).unwrap();
    assert!(ppl < 1.5, "ppl {ppl}");
}

fn uniform_model() -> Model {
    let mut m = init_model(&ModelConfig { label_smoothing: 0.0, ..toy_config(11, 8, 1) }, 5).unwrap();
    for name in ["out.w", "out.b"] {
        let z = m.params.get(name).unwrap().mapv(|_| 0.0);
        m.params.set(name, z).unwrap();
    }
    m
}

#[test]
fn uniform_model_perplexity_is_vocab_size() {
    let m = uniform_model();
    let pairs: Vec<_> = random_sentences(1, 20, 1, 6, 11).into_iter().map(|s| (s.clone(), s)).collect();
    let ppl = validate_ppl(&m, &pairs, Direction::LOW_TO_HIGH, 7).unwrap();
    assert!((ppl - 11.0).abs() < 0.01, "{ppl}");
    let out = supervised_step(&m, &pairs[..5], Direction::LOW_TO_HIGH).unwrap();
    assert!((out.loss - 11f64.ln()).abs() < 1e-3);
}

#[test]
fn perplexity_at_least_one_and_empty_rejected() {
    let m = bt_model();
    for seed in 0..5 {
        let pairs: Vec<_> = random_sentences(seed, 10, 0, 6, 11).into_iter().map(|s| (s.clone(), s)).collect();
        assert!(validate_ppl(&m, &pairs, Direction::HIGH_TO_LOW, 4).unwrap() >= 1.0);
    }
    assert!(matches!(validate_ppl(&m, &[], Direction::HIGH_TO_LOW, 4), Err(Error::EmptyValidationSet)));
}

#[test]
fn supervised_ratio_sets_bt_share() {
    let high = random_sentences(2, 20, 1, 6, 12);
    let low = random_sentences(3, 20, 1, 6, 12);
    let pseudo: Vec<IdPair> = high
        .iter()
        .zip(&low)
        .flat_map(|(h, l)| {
            let p = IdPair { src: h.clone(), tgt: l.clone(), dir: Direction::HIGH_TO_LOW };
            [p.reversed(), p]
        })
        .collect();
    for (k, steps, bt) in [(1, 16, 8), (3, 16, 4), (3, 10, 3)] {
        let train = TrainConfig { supervised_per_bt: k, ..toy_train(1e-3, 10, 4) };
        let mut t = Trainer::new(init_model(&toy_config(12, 8, 1), 1).unwrap(), train, 2);
        train_unmt(&mut t, [&high, &low], &pseudo, steps).unwrap();
        assert_eq!(t.modes.len(), bt, "k={k} steps={steps}");
    }
    // Without pseudo pairs every step is a BT step.
    let mut t = Trainer::new(init_model(&toy_config(12, 8, 1), 1).unwrap(), toy_train(1e-3, 10, 4), 2);
    train_unmt(&mut t, [&high, &low], &[], 6).unwrap();
    assert_eq!(t.modes.len(), 6);
}

#[test]
fn frozen_tensors_untouched_by_mixed_schedule() {
    let base = init_model(&toy_config(12, 16, 1), 6).unwrap();
    let model = insert_adapters(&base, 7).unwrap();
    let frozen: Vec<(String, _)> =
        model.params.frozen().iter().map(|n| (n.clone(), model.params.get(n).unwrap().clone())).collect();
    assert!(!frozen.is_empty());
    let high = random_sentences(2, 30, 1, 7, 12);
    let low = random_sentences(3, 30, 1, 7, 12);
    let pseudo: Vec<IdPair> = high
        .iter()
        .zip(&low)
        .enumerate()
        .map(|(i, (h, l))| {
            let p = IdPair { src: h.clone(), tgt: l.clone(), dir: Direction::HIGH_TO_LOW };
            if i % 2 == 0 { p } else { p.reversed() }
        })
        .collect();
    let mut t = Trainer::new(model, toy_train(1e-2, 10, 4), 1);
    train_unmt(&mut t, [&high, &low], &pseudo, 100).unwrap();
    assert_eq!(t.step(), 100);
    for (name, before) in &frozen {
        assert_eq!(t.model.params.get(name).unwrap(), before, "{name} drifted");
    }
    let trained = t.model.params.get("enc.0.adapter.up.w").unwrap();
    assert!(trained.iter().any(|&x| x != 0.0));
}

fn markov_corpus(seed: u64, n: usize, vocab: u32) -> Vec<Vec<u32>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = r.random_range(4..10);
            let mut s = vec![r.random_range(5..vocab)];
            while s.len() < len {
                let prev = *s.last().unwrap();
                let next = if r.random_bool(0.8) { 5 + (prev - 5 + 1) % (vocab - 5) } else { r.random_range(5..vocab) };
                s.push(next);
            }
            s
        })
        .collect()
}

#[test]
fn mass_validation_perplexity_decreases() {
    let corpus = markov_corpus(4, 1000, 30);
    let valid = mass_examples(&markov_corpus(5, 100, 30), Lang::HIGH, 0.5, 77);
    let mut t = Trainer::new(init_model(&toy_config(30, 32, 1), 8).unwrap(), toy_train(2e-3, 50, 16), 2);
    let mut ppls = vec![t.validate("high", &valid).unwrap()];
    for _ in 0..2 {
        train_mass(&mut t, &[(Lang::HIGH, &corpus)], 200).unwrap();
        ppls.push(t.validate("high", &valid).unwrap());
    }
    assert!(ppls[0] > ppls[1] && ppls[1] > ppls[2], "{ppls:?}");
    assert_eq!(t.log.iter().map(|e| e.step).collect::<Vec<_>>(), vec![0, 200, 400]);
}

fn sp(index: usize, direction: usize, fwd: f64, rev: f64) -> ScoredPair {
    ScoredPair { index, direction, fwd, rev }
}

#[test]
fn planted_scores_match_sort_oracle() {
    let mut r = ChaCha8Rng::seed_from_u64(31);
    let scored: Vec<ScoredPair> = (0..20)
        .map(|i| sp(i, r.random_range(0..2), -r.random_range(0.0..5.0), -r.random_range(0.0..5.0)))
        .collect();
    let w = CurriculumWeights([0.7, -0.2, 0.1, 0.9]);
    // Oracle: insertion sort on (composite desc, index asc).
    let key = |s: &ScoredPair| {
        let (a, b) = if s.direction == 0 { (0.7, -0.2) } else { (0.1, 0.9) };
        a * s.fwd + b * s.rev
    };
    let mut oracle: Vec<usize> = Vec::new();
    for i in 0..scored.len() {
        let pos = oracle.iter().position(|&j| key(&scored[j]) < key(&scored[i])).unwrap_or(oracle.len());
        oracle.insert(pos, i);
    }
    assert_eq!(order_by(&scored, &w), oracle);
}

proptest! {
    #[test]
    fn order_invariant_under_positive_scaling(
        seed in any::<u64>(),
        w in prop::array::uniform4(-1.0f64..1.0),
        c in 0.01f64..1.0,
    ) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let scored: Vec<ScoredPair> = (0..40)
            .map(|i| sp(i, r.random_range(0..2), -r.random_range(0.0..8.0), -r.random_range(0.0..8.0)))
            .collect();
        let base = order_by(&scored, &CurriculumWeights(w));
        prop_assert_eq!(order_by(&scored, &CurriculumWeights(w.map(|x| x * c))), base);
        prop_assert_eq!(order_by(&scored, &CurriculumWeights::zero()), (0..40).collect::<Vec<_>>());
    }
}

fn curriculum_fixture() -> (Model, Vec<IdPair>, Vec<Vec<Example>>) {
    let base = init_model(&toy_config(14, 16, 1), 12).unwrap();
    let pairs: Vec<IdPair> = random_sentences(40, 24, 1, 6, 14)
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let p = IdPair { src: s.clone(), tgt: s.iter().rev().copied().collect(), dir: Direction::HIGH_TO_LOW };
            if i % 3 == 0 { p.reversed() } else { p }
        })
        .collect();
    let valid = vec![
        pairs[..4].iter().map(IdPair::example).collect(),
        pairs[4..8].iter().map(|p| p.reversed().example()).collect(),
    ];
    (base, pairs, valid)
}

#[test]
fn curriculum_trials_deterministic_and_budget_checked() {
    let (base, pairs, valid) = curriculum_fixture();
    let scores = curriculum_score(&base, &pairs, 5).unwrap();
    assert_eq!(scores.len(), pairs.len());
    assert!(scores.iter().all(|s| s.fwd.is_finite() && s.rev.is_finite() && s.fwd < 0.0));
    let train = toy_train(1e-2, 5, 4);
    let task = CurriculumTask { base: &base, pairs: &pairs, scores: &scores, valid: &valid, train: &train, seed: 3 };
    let w = CurriculumWeights([0.5, -0.5, 0.25, 1.0]);
    let a = run_trial(&task, &w, 10).unwrap();
    let b = run_trial(&task, &w, 10).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    assert!(matches!(
        curriculum_search(&task, 0, 10, &mut RandomSearch { seed: 1 }),
        Err(Error::ZeroTrialBudget)
    ));
    let out = curriculum_search(&task, 3, 5, &mut RandomSearch { seed: 1 }).unwrap();
    let best = out.trials.iter().min_by(|x, y| x.objective.total_cmp(&y.objective)).unwrap();
    assert_eq!(out.best, best.weights);
}

#[test]
fn offline_backtranslation_keeps_targets() {
    let corpus: Vec<String> = vec!["a b c".into(), "c  a".into(), "b".into()];
    let vocab = build_vocab(corpus.iter().map(|l| l.split_whitespace().collect::<Vec<_>>()));
    let model = init_model(&toy_config(vocab.len(), 8, 1), 2).unwrap();
    let dp = DecodeParams::greedy(10);
    let bt = offline_backtranslate(&model, &corpus, &vocab, Direction::LOW_TO_HIGH, &dp, 2, 5).unwrap();
    assert_eq!(bt.direction, Direction::HIGH_TO_LOW);
    assert_eq!(bt.targets().collect::<Vec<_>>(), corpus.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(bt.pairs.iter().all(|p| p.provenance == Provenance::PseudoNmt));
    let empty = offline_backtranslate(&model, &[], &vocab, Direction::LOW_TO_HIGH, &dp, 2, 5).unwrap();
    assert!(empty.is_empty());
}

#[test]
fn resume_matches_uninterrupted_training() {
    let corpus = markov_corpus(9, 200, 20);
    let model = init_model(&toy_config(20, 16, 1), 1).unwrap();
    let mut full = Trainer::new(model, toy_train(2e-3, 5, 8), 4);
    train_mass(&mut full, &[(Lang::HIGH, &corpus)], 5).unwrap();
    let bytes = checkpoint::to_bytes(&full.model, &full.opt, "v").unwrap();
    train_mass(&mut full, &[(Lang::HIGH, &corpus)], 10).unwrap();

    let ck = checkpoint::from_bytes(&bytes, Some("v")).unwrap();
    assert_eq!(ck.step(), 5);
    let mut resumed = Trainer::resume(ck.model, ck.opt, toy_train(2e-3, 5, 8), 4);
    train_mass(&mut resumed, &[(Lang::HIGH, &corpus)], 10).unwrap();
    assert_eq!(resumed.last_loss.to_bits(), full.last_loss.to_bits());
    assert_eq!(resumed.model, full.model);
}
