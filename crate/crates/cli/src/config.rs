use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use unmt_core::decode::DecodeParams;
use unmt_core::model::ModelConfig;
use unmt_core::trainer::TrainConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub high_train: PathBuf,
    pub low_train: PathBuf,
    pub valid_high: PathBuf,
    pub valid_low: PathBuf,
    pub test_high: PathBuf,
    pub test_low: PathBuf,
    pub emb_high: PathBuf,
    pub emb_low: PathBuf,
    /// Optional reference lexicon (`high<TAB>low<TAB>score`), translated as
    /// an extra word-by-word system.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_lexicon: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Languages {
    pub high: String,
    pub low: String,
}

impl Default for Languages {
    fn default() -> Self {
        Languages { high: "de".into(), low: "hsb".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubwordConfig {
    /// Merges learned on the high-resource side for pretraining.
    pub n_merges_high: usize,
    /// Merges learned on both sides after vocabulary extension.
    pub n_merges_joint: usize,
    pub dropout_p: f64,
    /// Copies of the pseudo-parallel data, each with fresh dropout.
    pub oversample: usize,
    /// Sentences longer than this many subwords are truncated.
    pub max_tokens: usize,
}

impl Default for SubwordConfig {
    fn default() -> Self {
        SubwordConfig { n_merges_high: 32_000, n_merges_joint: 32_000, dropout_p: 0.1, oversample: 4, max_tokens: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LexiconConfig {
    pub seed_min_len: usize,
    pub candidates: usize,
    pub lm_order: usize,
    pub lm_delta: f64,
    pub beam: usize,
    pub lambda: f64,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        LexiconConfig { seed_min_len: 1, candidates: 5, lm_order: 3, lm_delta: 0.1, beam: 5, lambda: 0.5 }
    }
}

/// Update counts per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub pretrain_mass_steps: usize,
    pub finetune_mass_steps: usize,
    /// Insert adapters before the bilingual MASS stage.
    pub finetune_with_adapters: bool,
    pub unmt_steps: usize,
    pub pseudo_steps: usize,
    pub curriculum_trials: usize,
    pub curriculum_updates: usize,
    pub curriculum_final_steps: usize,
    pub offline_bt_steps: usize,
    /// Monolingual lines decoded per side by offline-bt; 0 means all.
    pub offline_bt_lines: usize,
    pub dropout_steps: usize,
    pub validate_every: usize,
    pub valid_limit: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            pretrain_mass_steps: 2000,
            finetune_mass_steps: 2000,
            finetune_with_adapters: false,
            unmt_steps: 2000,
            pseudo_steps: 2000,
            curriculum_trials: 8,
            curriculum_updates: 200,
            curriculum_final_steps: 500,
            offline_bt_steps: 500,
            offline_bt_lines: 0,
            dropout_steps: 500,
            validate_every: 500,
            valid_limit: 200,
        }
    }
}

/// Which checkpoints later stages start from and translate with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Systems {
    pub curriculum_from: String,
    pub offline_bt_from: String,
    pub dropout_from: String,
    pub translate: Vec<String>,
    pub ensemble: Vec<String>,
}

impl Default for Systems {
    fn default() -> Self {
        Systems {
            curriculum_from: "finetune-pseudo".into(),
            offline_bt_from: "finetune-pseudo".into(),
            dropout_from: "finetune-pseudo".into(),
            translate: vec!["finetune-pseudo".into(), "bpe-dropout-finetune".into()],
            ensemble: vec!["finetune-pseudo".into(), "bpe-dropout-finetune".into()],
        }
    }
}

/// An extra hypothesis/reference pair for the evaluate stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraEval {
    pub name: String,
    pub hyp: PathBuf,
    pub reference: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub workdir: PathBuf,
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub languages: Languages,
    #[serde(default)]
    pub subword: SubwordConfig,
    #[serde(default)]
    pub lexicon: LexiconConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub systems: Systems,
    #[serde(default)]
    pub decode: DecodeParams,
    #[serde(default)]
    pub extra_eval: Vec<ExtraEval>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)?;
        Ok(cfg.resolve_relative(path.parent().unwrap_or(Path::new("."))))
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| CliError::io(path, e))
    }

    /// Relative paths in a config file are relative to the file.
    fn resolve_relative(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.workdir);
        let ps = &mut self.paths;
        for p in [
            &mut ps.high_train,
            &mut ps.low_train,
            &mut ps.valid_high,
            &mut ps.valid_low,
            &mut ps.test_high,
            &mut ps.test_low,
            &mut ps.emb_high,
            &mut ps.emb_low,
        ] {
            fix(p);
        }
        if let Some(p) = ps.true_lexicon.as_mut() {
            fix(p);
        }
        for e in &mut self.extra_eval {
            fix(&mut e.hyp);
            fix(&mut e.reference);
        }
        self
    }

    pub fn validate(&self) -> CliResult<()> {
        self.train.validate()?;
        self.decode.validate()?;
        if self.subword.max_tokens + 2 > self.model.max_len {
            return Err(CliError::Config(format!(
                "subword.max_tokens {} needs model.max_len of at least {}",
                self.subword.max_tokens,
                self.subword.max_tokens + 2
            )));
        }
        if self.subword.oversample == 0 {
            return Err(CliError::Config("subword.oversample must be positive".into()));
        }
        Ok(())
    }
}
