//! Command-line surface: dataset generation, oracle checks, the three
//! training stages, sampling, evaluation, export and benchmarking.

pub mod bench;
pub mod error;
pub mod export;
pub mod oracle;
pub mod pipeline;
pub mod run;

use std::fs;
use std::path::{Path, PathBuf};

use avgflow_core::Solver;
use avgflow_train::{gen_synthetic_dataset, Dataset, TrainConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, Result};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineSummary};
pub use run::{RunDir, Stage};

/// Path of the bundled 32-molecule dataset, relative to the workspace root.
pub const BUNDLED_DATASET: &str = "data/synthetic32.json";

#[derive(Debug, Parser)]
#[command(name = "avgflow", version, about = "Averaged-flow conformer generation at desk scale")]
pub struct Cli {
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset.
    GenData(GenDataArgs),
    /// Compare the closed-form target with Monte-Carlo rotation averages.
    OracleCheck(OracleArgs),
    /// Stage 1 training.
    Train(TrainArgs),
    /// Integrate a trained stage to produce noise/sample couplings.
    ReflowPairs(PairArgs),
    /// Fine-tune stage 1 on its own couplings.
    Reflow(FinetuneArgs),
    /// Distill the reflowed model into a one-step map.
    Distill(FinetuneArgs),
    /// Generate conformers from a trained stage.
    Sample(SampleArgs),
    /// Coverage per step count and straightness, or score a sample file.
    Eval(EvalArgs),
    /// Time the target over a batch x conformer grid.
    BenchTarget(BenchArgs),
    /// Write flat CSV tables of curves, sweeps and trajectories.
    PlotExport(RunArg),
    /// Every stage in sequence with one configuration file.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct RunArg {
    /// Run directory.
    #[arg(long)]
    pub run: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub molecules: usize,
    #[arg(long, default_value_t = 5)]
    pub min_atoms: usize,
    #[arg(long, default_value_t = 16)]
    pub max_atoms: usize,
    #[arg(long, default_value_t = 1)]
    pub min_conformers: usize,
    #[arg(long, default_value_t = 4)]
    pub max_conformers: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    #[arg(long, default_value_t = 200_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Draw instances from this dataset instead of random point clouds.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Multiply the closed form by this factor (negative control).
    #[arg(long, default_value_t = 1.0)]
    pub tamper: f64,
    #[arg(long, default_value_t = 3.0)]
    pub z_limit: f64,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Dataset to copy into the run directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Training configuration (TOML); defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TeacherArg {
    Stage1,
    Reflow,
}

impl From<TeacherArg> for Stage {
    fn from(t: TeacherArg) -> Stage {
        match t {
            TeacherArg::Stage1 => Stage::Stage1,
            TeacherArg::Reflow => Stage::Reflow,
        }
    }
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// stage1 feeds `reflow`, reflow feeds `distill`.
    #[arg(long, value_enum, default_value = "stage1")]
    pub teacher: TeacherArg,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 32)]
    pub pairs_per_graph: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Stage1,
    Reflow,
    Distill,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Stage {
        match s {
            StageArg::Stage1 => Stage::Stage1,
            StageArg::Reflow => Stage::Reflow,
            StageArg::Distill => Stage::Distill,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Euler,
    Midpoint,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, value_enum)]
    pub stage: StageArg,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, value_enum, default_value = "euler")]
    pub solver: SolverArg,
    /// Samples per reference conformer.
    #[arg(long, default_value_t = 2)]
    pub ratio: usize,
    /// Comma-separated molecule indices; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub molecules: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep every intermediate state.
    #[arg(long)]
    pub trajectories: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Stage to sweep; required unless `--samples` is given.
    #[arg(long, value_enum)]
    pub stage: Option<StageArg>,
    /// Score this sample file against the run's dataset instead.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = avgflow_train::STEP_SWEEP)]
    pub steps: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub ratio: usize,
    #[arg(long, default_value_t = avgflow_core::DELTA_DRUGS)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub straightness_trajectories: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_SIZES)]
    pub batch_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_SIZES)]
    pub conformers: Vec<usize>,
    #[arg(long, default_value_t = bench::DEFAULT_NODES)]
    pub nodes: usize,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Dataset to copy into the run directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Pipeline configuration (TOML); the reference run when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(error::io_err(path))
}

fn with_workers(mut c: TrainConfig, workers: usize) -> TrainConfig {
    if workers > 0 {
        c.workers = workers;
    }
    c
}

/// Runs one command and returns what it prints on success.
pub fn execute(cli: Cli) -> Result<String> {
    let workers = cli.workers;
    match cli.command {
        Command::GenData(a) => {
            let d = gen_synthetic_dataset(
                a.molecules,
                a.min_atoms..=a.max_atoms,
                a.min_conformers..=a.max_conformers,
                a.seed,
            )?;
            d.save(&a.out)?;
            Ok(format!("wrote {} molecules to {}\n", d.len(), a.out.display()))
        }
        Command::OracleCheck(a) => {
            let opts = oracle::OracleOptions {
                instances: a.instances,
                samples: a.samples,
                seed: a.seed,
                tamper: a.tamper,
                z_limit: a.z_limit,
            };
            let dataset = a.dataset.as_deref().map(Dataset::load).transpose()?;
            let report = oracle::oracle_check(&opts, dataset.as_ref(), workers)?;
            if let Some(p) = &a.out {
                write_out(p, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
            }
            if report.passed {
                Ok(report.to_table())
            } else {
                eprint!("{}", report.to_table());
                Err(CliError::OracleFailed {
                    failed: report.failed,
                    total: report.results.len(),
                })
            }
        }
        Command::Train(a) => {
            let run = RunDir::create(&a.run)?;
            if let Some(d) = &a.dataset {
                run::import_dataset(&run, d)?;
            }
            let config = with_workers(run::load_train_config(a.config.as_deref(), TrainConfig::default())?, workers);
            let out = run::train(&run, &config)?;
            Ok(format!(
                "stage1: validation loss {:.4} -> {:.4} (EMA) after {} epochs\n",
                out.initial.val_loss,
                out.final_record().val_loss_ema,
                out.curve.len()
            ))
        }
        Command::ReflowPairs(a) => {
            let run = RunDir::create(&a.run)?;
            let opts = run::PairOptions {
                steps: a.steps,
                pairs_per_graph: a.pairs_per_graph,
                seed: a.seed,
            };
            let teacher: Stage = a.teacher.into();
            let pairs = run::reflow_pairs(&run, teacher, &opts, workers)?;
            Ok(format!("wrote {} pairs to {}\n", pairs.pairs.len(), run::pairs_file(teacher)))
        }
        Command::Reflow(a) => finetune_cmd(&a, Stage::Reflow, workers),
        Command::Distill(a) => finetune_cmd(&a, Stage::Distill, workers),
        Command::Sample(a) => {
            let run = RunDir::create(&a.run)?;
            let stage: Stage = a.stage.into();
            let opts = run::SampleOptions {
                steps: a.steps,
                solver: match a.solver {
                    SolverArg::Euler => Solver::Euler,
                    SolverArg::Midpoint => Solver::Midpoint,
                },
                ratio: a.ratio,
                molecules: a.molecules,
                seed: a.seed,
                trajectories: a.trajectories,
            };
            let set = run::sample(&run, stage, &opts, workers)?;
            let n: usize = set.molecules.iter().map(|m| m.conformers.len()).sum();
            Ok(format!("wrote {n} conformers to samples.{stage}.json\n"))
        }
        Command::Eval(a) => {
            let run = RunDir::create(&a.run)?;
            if let Some(p) = &a.samples {
                let set: run::SampleSet = run::parse_json(p)?;
                let report = run::score_samples(&run.dataset()?, &set, a.delta)?;
                return Ok(report.to_table());
            }
            let stage: Stage = a
                .stage
                .ok_or_else(|| CliError::Usage("eval needs --stage or --samples".into()))?
                .into();
            let opts = run::EvalOptions {
                steps: a.steps,
                ratio: a.ratio,
                delta: a.delta,
                seed: a.seed,
                straightness_trajectories: a.straightness_trajectories,
                ..run::EvalOptions::default()
            };
            Ok(run::eval(&run, stage, &opts, workers)?.to_table())
        }
        Command::BenchTarget(a) => {
            let cells = bench::bench_target(&a.batch_sizes, &a.conformers, a.nodes, a.repeats, a.seed, workers)?;
            let csv = bench::bench_csv(&cells);
            match &a.out {
                Some(p) => {
                    write_out(p, &csv)?;
                    Ok(format!("wrote {} cells to {}\n", cells.len(), p.display()))
                }
                None => Ok(csv),
            }
        }
        Command::PlotExport(a) => {
            let run = RunDir::create(&a.run)?;
            let files = export::plot_export(&run)?;
            Ok(files.iter().map(|p| format!("{}\n", p.display())).collect())
        }
        Command::Pipeline(a) => {
            let run = RunDir::create(&a.run)?;
            let mut config = match &a.config {
                Some(p) => PipelineConfig::from_toml(&run::read_text(p)?)?,
                None => PipelineConfig::default(),
            };
            for c in [&mut config.stage1, &mut config.reflow, &mut config.distill] {
                *c = with_workers(c.clone(), workers);
            }
            let summary = run_pipeline(&run, a.dataset.as_deref(), &config, workers)?;
            let mut s = format!(
                "stage1 validation loss {:.4} -> {:.4}\none-step RMSD before/after distillation {:.4} -> {:.4}\n",
                summary.stage1_val_loss_initial,
                summary.stage1_val_loss_final,
                summary.one_step_rmsd_before,
                summary.one_step_rmsd_after
            );
            for e in &summary.evals {
                s.push_str(&e.to_table());
            }
            Ok(s)
        }
    }
}

fn finetune_cmd(a: &FinetuneArgs, stage: Stage, workers: usize) -> Result<String> {
    let run = RunDir::create(&a.run)?;
    let config = with_workers(run::load_train_config(a.config.as_deref(), TrainConfig::finetune())?, workers);
    let out = run::finetune(&run, stage, &config)?;
    Ok(format!(
        "{stage}: validation loss {:.4} -> {:.4} (EMA) after {} epochs\n",
        out.initial.val_loss,
        out.final_record().val_loss_ema,
        out.curve.len()
    ))
}
