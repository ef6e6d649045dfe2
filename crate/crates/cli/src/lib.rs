//! Stage-oriented driver for the unsupervised MT pipeline. Each stage
//! writes its artifacts under `workdir/<stage>/` with a manifest of input
//! and output hashes, so re-running an unchanged stage is a no-op.

pub mod config;
pub mod demo;
pub mod error;
pub mod stages;
pub mod workdir;

use config::PipelineConfig;
use error::CliResult;
use stages::{run_stage, Stage, StageStatus};
use workdir::Workdir;

/// Runs `stages` in order under one workdir lock, reporting each status
/// through `report`.
pub fn run_stages(
    cfg: &PipelineConfig,
    stages: &[Stage],
    mut report: impl FnMut(Stage, StageStatus),
) -> CliResult<Vec<(Stage, StageStatus)>> {
    let wd = Workdir::lock(&cfg.workdir)?;
    let mut out = Vec::with_capacity(stages.len());
    for &stage in stages {
        let status = run_stage(&wd, cfg, stage)?;
        report(stage, status);
        out.push((stage, status));
    }
    Ok(out)
}
