//! Pipeline stages. Each stage reads upstream artifacts, writes its own
//! under `workdir/<stage>/` and finishes with a manifest.

mod io;
mod lexicon;
mod text;
mod train;
mod translate;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::json;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::workdir::{combine, hash_bytes, hash_file, hash_outputs, StageManifest, Workdir};
use unmt_core::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Preprocess,
    LearnBpe,
    ExtendVocab,
    EmbedMap,
    PseudoSmt,
    PretrainMass,
    FinetuneMass,
    TrainUnmt,
    FinetunePseudo,
    CurriculumSearch,
    OfflineBt,
    BpeDropoutFinetune,
    Translate,
    EnsembleTranslate,
    Postprocess,
    Evaluate,
}

/// Every stage in an order that satisfies all dependencies.
pub const ALL: [Stage; 16] = [
    Stage::Preprocess,
    Stage::LearnBpe,
    Stage::ExtendVocab,
    Stage::EmbedMap,
    Stage::PseudoSmt,
    Stage::PretrainMass,
    Stage::FinetuneMass,
    Stage::TrainUnmt,
    Stage::FinetunePseudo,
    Stage::CurriculumSearch,
    Stage::OfflineBt,
    Stage::BpeDropoutFinetune,
    Stage::Translate,
    Stage::EnsembleTranslate,
    Stage::Postprocess,
    Stage::Evaluate,
];

/// Stages that leave a `model.ckpt` over the extended vocabulary.
pub const MODEL_STAGES: [Stage; 6] = [
    Stage::FinetuneMass,
    Stage::TrainUnmt,
    Stage::FinetunePseudo,
    Stage::CurriculumSearch,
    Stage::OfflineBt,
    Stage::BpeDropoutFinetune,
];

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::LearnBpe => "learn-bpe",
            Stage::ExtendVocab => "extend-vocab",
            Stage::EmbedMap => "embed-map",
            Stage::PseudoSmt => "pseudo-smt",
            Stage::PretrainMass => "pretrain-mass",
            Stage::FinetuneMass => "finetune-mass",
            Stage::TrainUnmt => "train-unmt",
            Stage::FinetunePseudo => "finetune-pseudo",
            Stage::CurriculumSearch => "curriculum-search",
            Stage::OfflineBt => "offline-bt",
            Stage::BpeDropoutFinetune => "bpe-dropout-finetune",
            Stage::Translate => "translate",
            Stage::EnsembleTranslate => "ensemble-translate",
            Stage::Postprocess => "postprocess",
            Stage::Evaluate => "evaluate",
        }
    }

    fn position(self) -> usize {
        ALL.iter().position(|&s| s == self).expect("listed")
    }

    /// Required and optional upstream stages.
    pub fn dependencies(self, cfg: &PipelineConfig) -> CliResult<(Vec<Stage>, Vec<Stage>)> {
        use Stage::*;
        let model = |name: &str| -> CliResult<Stage> {
            let s: Stage = name.parse()?;
            if !MODEL_STAGES.contains(&s) || s.position() >= self.position() {
                return Err(CliError::Config(format!("{} cannot start from {name}", self.name())));
            }
            Ok(s)
        };
        let models = |names: &[String]| names.iter().map(|n| model(n)).collect::<CliResult<Vec<_>>>();
        let sys = &cfg.systems;
        let required = match self {
            Preprocess => vec![],
            LearnBpe => vec![Preprocess],
            ExtendVocab => vec![Preprocess, LearnBpe],
            EmbedMap => vec![Preprocess],
            PseudoSmt => vec![Preprocess, EmbedMap],
            PretrainMass => vec![LearnBpe],
            FinetuneMass => vec![LearnBpe, ExtendVocab, PretrainMass],
            TrainUnmt => vec![ExtendVocab, FinetuneMass],
            FinetunePseudo => vec![LearnBpe, ExtendVocab, PseudoSmt, TrainUnmt],
            CurriculumSearch => [vec![LearnBpe, ExtendVocab, PseudoSmt], models(&[sys.curriculum_from.clone()])?].concat(),
            OfflineBt => [vec![ExtendVocab], models(&[sys.offline_bt_from.clone()])?].concat(),
            BpeDropoutFinetune => {
                [vec![Preprocess, LearnBpe, ExtendVocab, PseudoSmt], models(&[sys.dropout_from.clone()])?].concat()
            }
            Translate => [vec![ExtendVocab], models(&sys.translate)?].concat(),
            EnsembleTranslate => [vec![ExtendVocab], models(&sys.ensemble)?].concat(),
            Postprocess => vec![Preprocess],
            Evaluate => vec![],
        };
        let optional = match self {
            Postprocess => vec![PseudoSmt, Translate, EnsembleTranslate],
            Evaluate => vec![Postprocess],
            _ => vec![],
        };
        Ok((dedup(required), optional))
    }

    /// Files outside the workdir, by role.
    fn external_inputs(self, cfg: &PipelineConfig) -> Vec<(String, PathBuf)> {
        let p = &cfg.paths;
        let named = |v: &[(&str, &PathBuf)]| v.iter().map(|(k, p)| (k.to_string(), (*p).clone())).collect();
        match self {
            Stage::Preprocess => named(&[
                ("high_train", &p.high_train),
                ("low_train", &p.low_train),
                ("valid_high", &p.valid_high),
                ("valid_low", &p.valid_low),
                ("test_high", &p.test_high),
                ("test_low", &p.test_low),
            ]),
            Stage::EmbedMap => named(&[("emb_high", &p.emb_high), ("emb_low", &p.emb_low)]),
            Stage::PseudoSmt => p.true_lexicon.iter().map(|t| ("true_lexicon".to_string(), t.clone())).collect(),
            Stage::Postprocess => named(&[("test_high", &p.test_high), ("test_low", &p.test_low)]),
            Stage::Evaluate => {
                let mut v: Vec<(String, PathBuf)> = named(&[("test_high", &p.test_high), ("test_low", &p.test_low)]);
                for e in &cfg.extra_eval {
                    v.push((format!("extra:{}:hyp", e.name), e.hyp.clone()));
                    v.push((format!("extra:{}:ref", e.name), e.reference.clone()));
                }
                v
            }
            _ => Vec::new(),
        }
    }

    /// The part of the config this stage's outputs depend on.
    fn config_slice(self, cfg: &PipelineConfig) -> serde_json::Value {
        use Stage::*;
        let s = &cfg.schedule;
        let training = |extra: serde_json::Value| {
            json!({
                "model": cfg.model,
                "train": cfg.train,
                "subword_max_tokens": cfg.subword.max_tokens,
                "validate_every": s.validate_every,
                "valid_limit": s.valid_limit,
                "stage": extra,
            })
        };
        match self {
            Preprocess => json!({ "languages": cfg.languages }),
            LearnBpe => json!({ "subword": cfg.subword }),
            ExtendVocab => json!({ "max_tokens": cfg.subword.max_tokens }),
            EmbedMap => json!({ "seed_min_len": cfg.lexicon.seed_min_len, "candidates": cfg.lexicon.candidates }),
            PseudoSmt => json!({ "lexicon": cfg.lexicon }),
            PretrainMass => training(json!({ "steps": s.pretrain_mass_steps })),
            FinetuneMass => {
                training(json!({ "steps": s.finetune_mass_steps, "adapters": s.finetune_with_adapters }))
            }
            TrainUnmt => training(json!({ "steps": s.unmt_steps })),
            FinetunePseudo => training(json!({ "steps": s.pseudo_steps })),
            CurriculumSearch => training(json!({
                "from": cfg.systems.curriculum_from,
                "trials": s.curriculum_trials,
                "updates": s.curriculum_updates,
                "final_steps": s.curriculum_final_steps,
            })),
            OfflineBt => training(json!({
                "from": cfg.systems.offline_bt_from,
                "steps": s.offline_bt_steps,
                "lines": s.offline_bt_lines,
                "decode": cfg.decode,
            })),
            BpeDropoutFinetune => training(json!({
                "from": cfg.systems.dropout_from,
                "steps": s.dropout_steps,
                "dropout_p": cfg.subword.dropout_p,
                "oversample": cfg.subword.oversample,
            })),
            Translate => json!({ "systems": cfg.systems.translate, "decode": cfg.decode, "languages": cfg.languages }),
            EnsembleTranslate => json!({ "systems": cfg.systems.ensemble, "decode": cfg.decode }),
            Postprocess => json!({ "languages": cfg.languages }),
            Evaluate => json!({ "extra": cfg.extra_eval.iter().map(|e| &e.name).collect::<Vec<_>>() }),
        }
    }

    fn execute(self, ctx: &Ctx) -> CliResult<()> {
        use Stage::*;
        match self {
            Preprocess => text::preprocess(ctx),
            LearnBpe => text::learn_bpe(ctx),
            ExtendVocab => text::extend_vocab(ctx),
            EmbedMap => lexicon::embed_map(ctx),
            PseudoSmt => lexicon::pseudo_smt(ctx),
            PretrainMass => train::pretrain_mass(ctx),
            FinetuneMass => train::finetune_mass(ctx),
            TrainUnmt => train::train_unmt(ctx),
            FinetunePseudo => train::finetune_pseudo(ctx),
            CurriculumSearch => train::curriculum_search(ctx),
            OfflineBt => train::offline_bt(ctx),
            BpeDropoutFinetune => train::bpe_dropout_finetune(ctx),
            Translate => translate::translate(ctx),
            EnsembleTranslate => translate::ensemble_translate(ctx),
            Postprocess => text::postprocess(ctx),
            Evaluate => text::evaluate(ctx),
        }
    }
}

fn dedup(v: Vec<Stage>) -> Vec<Stage> {
    let mut out: Vec<Stage> = Vec::with_capacity(v.len());
    for s in v {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        ALL.iter().copied().find(|st| st.name() == s).ok_or_else(|| CliError::UnknownStage(s.to_owned()))
    }
}

/// What a stage sees while running.
pub struct Ctx<'a> {
    pub cfg: &'a PipelineConfig,
    pub root: &'a Path,
    pub stage: Stage,
    pub dir: PathBuf,
    pub seed: u64,
}

impl Ctx<'_> {
    pub fn input(&self, stage: Stage, file: &str) -> PathBuf {
        self.root.join(stage.name()).join(file)
    }

    pub fn output(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    pub fn has_stage(&self, stage: Stage) -> bool {
        self.root.join(stage.name()).join(crate::workdir::MANIFEST).exists()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

impl fmt::Display for StageStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageStatus::Ran => "done",
            StageStatus::UpToDate => "up-to-date",
        })
    }
}

/// Runs `stage` unless its manifest shows identical inputs and intact
/// outputs.
pub fn run_stage(wd: &Workdir, cfg: &PipelineConfig, stage: Stage) -> CliResult<StageStatus> {
    cfg.validate()?;
    let (required, optional) = stage.dependencies(cfg)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("config".to_owned(), hash_bytes(stage.config_slice(cfg).to_string().as_bytes()));
    inputs.insert("seed".to_owned(), cfg.seed.to_string());
    for dep in &required {
        let m = wd.manifest(dep.name())?.ok_or_else(|| CliError::MissingDependency {
            stage: stage.name().to_owned(),
            missing: dep.name().to_owned(),
        })?;
        inputs.insert(format!("stage:{dep}"), m.output_digest());
    }
    for dep in &optional {
        if let Some(m) = wd.manifest(dep.name())? {
            inputs.insert(format!("stage:{dep}"), m.output_digest());
        }
    }
    for (role, path) in stage.external_inputs(cfg) {
        if !path.exists() {
            return Err(CliError::MissingInput { stage: stage.name().to_owned(), path });
        }
        inputs.insert(format!("file:{role}"), hash_file(&path)?);
    }
    let input_hash = combine(&inputs);
    let dir = wd.stage_dir(stage.name());
    if let Some(m) = wd.manifest(stage.name())? {
        if m.input_hash == input_hash && m.outputs_intact(&dir) {
            return Ok(StageStatus::UpToDate);
        }
    }
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let ctx = Ctx { cfg, root: wd.root(), stage, dir: dir.clone(), seed: rng::derive_named(cfg.seed, stage.name()) };
    stage.execute(&ctx)?;
    let manifest = StageManifest { stage: stage.name().to_owned(), input_hash, inputs, outputs: hash_outputs(&dir)? };
    manifest.write(&dir)?;
    Ok(StageStatus::Ran)
}
