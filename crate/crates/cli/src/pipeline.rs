//! All stages in sequence on one run directory.

use std::path::Path;

use avgflow_train::{LrSchedule, TimeSampler, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::export::plot_export;
use crate::run::{
    eval, finetune, import_dataset, one_step_error, reflow_pairs, sample, train, EvalOptions, EvalReport,
    PairOptions, RunDir, SampleOptions, Stage, StageRecord,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub stage1: TrainConfig,
    pub reflow: TrainConfig,
    pub distill: TrainConfig,
    pub reflow_pairs: PairOptions,
    pub distill_pairs: PairOptions,
    /// Held-out teacher endpoints for the one-step error of distillation.
    pub one_step: PairOptions,
    pub eval: EvalOptions,
    pub sample: SampleOptions,
}

impl Default for PipelineConfig {
    /// The reference run on the bundled 32-molecule set.
    fn default() -> Self {
        let stage1 = TrainConfig {
            schedule: LrSchedule::Cosine {
                warmup_steps: 200,
                init: 1e-6,
                peak: 1e-3,
                final_lr: 1e-6,
            },
            ..TrainConfig::default()
        };
        let finetune = TrainConfig {
            epochs: 100,
            t_sampler: TimeSampler::Exponential { lambda: -1.2 },
            schedule: LrSchedule::Cosine {
                warmup_steps: 50,
                init: 1e-6,
                peak: 5e-4,
                final_lr: 1e-6,
            },
            ..TrainConfig::default()
        };
        Self {
            stage1,
            reflow: finetune.clone(),
            distill: finetune,
            reflow_pairs: PairOptions { steps: 100, pairs_per_graph: 16, seed: 5 },
            distill_pairs: PairOptions { steps: 100, pairs_per_graph: 16, seed: 6 },
            one_step: PairOptions { steps: 100, pairs_per_graph: 2, seed: 99 },
            eval: EvalOptions { seed: 11, ..EvalOptions::default() },
            sample: SampleOptions { seed: 3, ..SampleOptions::default() },
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| CliError::Parse {
            path: "pipeline config".into(),
            message: e.to_string(),
        })?;
        for t in [&c.stage1, &c.reflow, &c.distill] {
            t.validate()?;
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub stage1_val_loss_initial: f64,
    pub stage1_val_loss_final: f64,
    pub evals: Vec<EvalReport>,
    /// One-step RMSD to the reflow model's endpoints, before and after
    /// distillation.
    pub one_step_rmsd_before: f64,
    pub one_step_rmsd_after: f64,
}

impl PipelineSummary {
    pub fn eval(&self, stage: Stage) -> Option<&EvalReport> {
        self.evals.iter().find(|e| e.stage == stage.name())
    }
}

/// train -> eval -> reflow-pairs -> reflow -> eval -> reflow-pairs ->
/// distill -> eval -> sample -> plot-export. `dataset` is imported first
/// when given; otherwise the run directory must already hold one.
pub fn run_pipeline(
    run: &RunDir,
    dataset: Option<&Path>,
    config: &PipelineConfig,
    workers: usize,
) -> Result<PipelineSummary> {
    if let Some(src) = dataset {
        import_dataset(run, src)?;
    }
    let s1 = train(run, &config.stage1)?;
    let mut evals = vec![eval(run, Stage::Stage1, &config.eval, workers)?];
    reflow_pairs(run, Stage::Stage1, &config.reflow_pairs, workers)?;
    finetune(run, Stage::Reflow, &config.reflow)?;
    evals.push(eval(run, Stage::Reflow, &config.eval, workers)?);
    reflow_pairs(run, Stage::Reflow, &config.distill_pairs, workers)?;
    finetune(run, Stage::Distill, &config.distill)?;
    evals.push(eval(run, Stage::Distill, &config.eval, workers)?);
    let before = one_step_error(run, Stage::Reflow, Stage::Reflow, &config.one_step, workers)?;
    let after = one_step_error(run, Stage::Distill, Stage::Reflow, &config.one_step, workers)?;
    for stage in Stage::ALL {
        sample(run, stage, &config.sample, workers)?;
    }
    plot_export(run)?;
    let summary = PipelineSummary {
        stage1_val_loss_initial: s1.initial.val_loss,
        stage1_val_loss_final: s1.final_record().val_loss_ema,
        evals,
        one_step_rmsd_before: before,
        one_step_rmsd_after: after,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    let digest = run.write("summary.json", text.as_bytes())?;
    run.record(
        "pipeline",
        StageRecord {
            seed: config.stage1.seed,
            settings: serde_json::to_value(config).expect("config serializes"),
            inputs: Default::default(),
            outputs: [("summary.json".to_string(), digest)].into(),
        },
    )?;
    Ok(summary)
}
