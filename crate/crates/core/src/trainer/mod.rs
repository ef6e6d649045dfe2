//! Training objectives, optimizer and loops.

mod bt;
mod curriculum;
mod data;
mod loops;
mod mass;
mod optim;

pub use bt::{choose_mode, generation_limit, online_bt_step, supervised_step, BtParams, BtStep, GenerationMode};
pub use curriculum::{
    curriculum_score, curriculum_search, order_by, run_trial, CurriculumTask, CurriculumWeights, RandomSearch,
    ScoredPair, SearchOutcome, TrialRecord, TrialStrategy,
};
pub use data::{mass_examples, ordered_batch, IdPair};
pub use loops::{
    offline_backtranslate, train_mass, train_unmt, validate_examples, validate_ppl, LogEvent, TrainConfig, Trainer,
};
pub use mass::{mass_mask, span_length, MaskedSentence};
pub use optim::{optimizer_step, AdamConfig, OptimState};
