//! Run directories: every stage reads its inputs from and writes its
//! artifacts to one directory, and records what it did in `manifest.json`.
//!
//! Layout:
//!
//! ```text
//! manifest.json          stage -> {seed, settings, inputs, outputs}
//! dataset.json           copy of the training data
//! split.json             train/validation molecule indices
//! <stage>.ckpt           EMA weights of stage1 / reflow / distill
//! <stage>.raw.ckpt       raw weights
//! <stage>.curve.csv      per-epoch losses
//! pairs.<teacher>.json   couplings integrated from a teacher stage
//! samples.<stage>.json   generated conformers
//! eval.<stage>.json      coverage per step count and straightness
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use avgflow_core::baseline::sample_prior_with;
use avgflow_core::random::stream_rng;
use avgflow_core::{coverage_amr, Coords, MetricReport, Solver};
use avgflow_train::{
    coverage_sweep, curve_csv, featurize, generate_reflow_pairs, load_checkpoint, mean_straightness,
    one_step_rmsd, par_map, sample_with, save_checkpoint, train_distill, train_reflow, train_stage1,
    Checkpoint, CheckpointMeta, Dataset, ReflowPairSet, StepReport, TrainConfig, TrainOutcome,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const DATASET: &str = "dataset.json";
pub const SPLIT: &str = "split.json";
pub const MANIFEST_VERSION: u32 = 1;
pub const SAMPLES_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_train_config(path: Option<&Path>, default: TrainConfig) -> Result<TrainConfig> {
    match path {
        None => Ok(default),
        Some(p) => Ok(TrainConfig::from_toml(&read_text(p)?)?),
    }
}

/// The three trained models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Stage1,
    Reflow,
    Distill,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Stage1, Stage::Reflow, Stage::Distill];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::Reflow => "reflow",
            Stage::Distill => "distill",
        }
    }

    /// Subcommand that writes this stage's checkpoint.
    pub fn command(self) -> &'static str {
        match self {
            Stage::Stage1 => "train",
            Stage::Reflow => "reflow",
            Stage::Distill => "distill",
        }
    }

    pub fn checkpoint(self) -> String {
        format!("{}.ckpt", self.name())
    }

    /// Starting weights and the teacher of the pairs a fine-tuning stage
    /// trains on.
    fn parent(self) -> Option<Stage> {
        match self {
            Stage::Stage1 => None,
            Stage::Reflow => Some(Stage::Stage1),
            Stage::Distill => Some(Stage::Reflow),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}` (stage1, reflow, distill)"))
    }
}

pub fn pairs_file(teacher: Stage) -> String {
    format!("pairs.{}.json", teacher.name())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seed: u64,
    /// Configuration and flags that determine the outputs.
    pub settings: serde_json::Value,
    /// Input file -> SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file -> SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            schema_version: MANIFEST_VERSION,
            stages: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Path of an artifact that `stage` should have produced.
    pub fn require(&self, name: &str, stage: &'static str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::MissingUpstream {
                stage,
                artifact: p.display().to_string(),
            })
        }
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let p = self.path(MANIFEST);
        if !p.exists() {
            return Ok(Manifest::default());
        }
        let m: Manifest = parse_json(&p)?;
        if m.schema_version != MANIFEST_VERSION {
            return Err(CliError::Parse {
                path: p.display().to_string(),
                message: format!("manifest version {} (expected {MANIFEST_VERSION})", m.schema_version),
            });
        }
        Ok(m)
    }

    pub fn record(&self, stage: &str, rec: StageRecord) -> Result<()> {
        let mut m = self.manifest()?;
        m.stages.insert(stage.to_string(), rec);
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n";
        let p = self.path(MANIFEST);
        fs::write(&p, text).map_err(io_err(&p))
    }

    /// Writes `name` and returns its digest.
    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<String> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(io_err(&p))?;
        Ok(sha256_hex(bytes))
    }

    pub fn digest(&self, name: &str) -> Result<String> {
        Ok(sha256_hex(&read_file(&self.path(name))?))
    }

    pub fn dataset(&self) -> Result<Dataset> {
        Ok(Dataset::load(&self.require(DATASET, "train --dataset")?)?)
    }

    pub fn checkpoint(&self, stage: Stage) -> Result<Checkpoint> {
        Ok(load_checkpoint(&self.require(&stage.checkpoint(), stage.command())?)?)
    }

    pub fn split(&self) -> Result<Split> {
        parse_json(&self.require(SPLIT, "train")?)
    }

    fn inputs(&self, names: &[&str]) -> Result<BTreeMap<String, String>> {
        names
            .iter()
            .map(|n| Ok((n.to_string(), self.digest(n)?)))
            .collect()
    }
}

/// Copies `src` into the run directory in canonical form.
pub fn import_dataset(run: &RunDir, src: &Path) -> Result<Dataset> {
    let d = Dataset::load(src)?;
    let text = d.to_json();
    let out = run.write(DATASET, text.as_bytes())?;
    run.record(
        "dataset",
        StageRecord {
            seed: 0,
            settings: serde_json::json!({ "source": src.display().to_string() }),
            inputs: BTreeMap::from([(src.display().to_string(), sha256_hex(&read_file(src)?))]),
            outputs: BTreeMap::from([(DATASET.to_string(), out)]),
        },
    )?;
    Ok(d)
}

fn save_outcome(
    run: &RunDir,
    stage: Stage,
    out: &TrainOutcome,
    config: &TrainConfig,
    parent: Option<String>,
) -> Result<BTreeMap<String, String>> {
    let mut outputs = BTreeMap::new();
    for (suffix, weights, net) in [("ckpt", "ema", &out.ema), ("raw.ckpt", "raw", &out.raw)] {
        let name = format!("{}.{suffix}", stage.name());
        let ckpt = Checkpoint {
            net: net.clone(),
            meta: CheckpointMeta {
                stage: stage.name().into(),
                weights: weights.into(),
                seed: config.seed,
                epochs: config.epochs,
                parent: parent.clone(),
            },
        };
        save_checkpoint(&ckpt, &run.path(&name))?;
        outputs.insert(name.clone(), run.digest(&name)?);
    }
    let curve = format!("{}.curve.csv", stage.name());
    outputs.insert(curve.clone(), run.write(&curve, curve_csv(&out.initial, &out.curve).as_bytes())?);
    Ok(outputs)
}

fn config_settings(config: &TrainConfig) -> serde_json::Value {
    serde_json::to_value(config).expect("config serializes")
}

/// Stage 1 on the run's dataset.
pub fn train(run: &RunDir, config: &TrainConfig) -> Result<TrainOutcome> {
    let dataset = run.dataset()?;
    let out = train_stage1(&dataset, config)?;
    let split = Split {
        train: out.train_items.clone(),
        val: out.val_items.clone(),
    };
    let mut outputs = save_outcome(run, Stage::Stage1, &out, config, None)?;
    let split_text = serde_json::to_string_pretty(&split).expect("split serializes") + "\n";
    outputs.insert(SPLIT.into(), run.write(SPLIT, split_text.as_bytes())?);
    run.record(
        Stage::Stage1.command(),
        StageRecord {
            seed: config.seed,
            settings: config_settings(config),
            inputs: run.inputs(&[DATASET])?,
            outputs,
        },
    )?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairOptions {
    pub steps: usize,
    pub pairs_per_graph: usize,
    pub seed: u64,
}

impl Default for PairOptions {
    fn default() -> Self {
        Self {
            steps: 100,
            pairs_per_graph: 32,
            seed: 0,
        }
    }
}

/// Integrates the `teacher` checkpoint from prior draws on every training
/// molecule.
pub fn reflow_pairs(run: &RunDir, teacher: Stage, opts: &PairOptions, workers: usize) -> Result<ReflowPairSet> {
    let ckpt = run.checkpoint(teacher)?;
    let dataset = run.dataset()?;
    let split = run.split()?;
    let pairs = generate_reflow_pairs(&ckpt, &dataset, &split.train, opts.steps, opts.pairs_per_graph, opts.seed, workers)?;
    let name = pairs_file(teacher);
    let out = run.write(&name, pairs.to_json().as_bytes())?;
    run.record(
        &format!("reflow-pairs.{}", teacher.name()),
        StageRecord {
            seed: opts.seed,
            settings: serde_json::to_value(opts).expect("options serialize"),
            inputs: run.inputs(&[&teacher.checkpoint(), DATASET, SPLIT])?,
            outputs: BTreeMap::from([(name, out)]),
        },
    )?;
    Ok(pairs)
}

/// Reflow or distillation from the parent stage's EMA weights.
pub fn finetune(run: &RunDir, stage: Stage, config: &TrainConfig) -> Result<TrainOutcome> {
    let parent = stage
        .parent()
        .ok_or_else(|| CliError::Usage("stage1 is trained with `train`".into()))?;
    let start = run.checkpoint(parent)?;
    let pairs_name = pairs_file(parent);
    let pairs = ReflowPairSet::from_json(&read_text(&run.require(&pairs_name, "reflow-pairs")?)?)?;
    if pairs.teacher != start.digest()? {
        return Err(CliError::Usage(format!(
            "{pairs_name} was generated by a different {} checkpoint; rerun reflow-pairs",
            parent.name()
        )));
    }
    let dataset = run.dataset()?;
    let out = match stage {
        Stage::Reflow => train_reflow(&start.net, &pairs, &dataset, config)?,
        _ => train_distill(&start.net, &pairs, &dataset, config)?,
    };
    let outputs = save_outcome(run, stage, &out, config, Some(start.digest()?))?;
    run.record(
        stage.command(),
        StageRecord {
            seed: config.seed,
            settings: config_settings(config),
            inputs: run.inputs(&[&parent.checkpoint(), &pairs_name, DATASET])?,
            outputs,
        },
    )?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedMolecule {
    pub mol: usize,
    pub conformers: Vec<Coords<f64>>,
    /// Full state sequences, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<Vec<Vec<Coords<f64>>>>,
}

/// Generated conformers, indexed by dataset molecule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSet {
    pub schema_version: u32,
    pub stage: String,
    pub solver: Solver,
    pub steps: usize,
    pub seed: u64,
    pub molecules: Vec<GeneratedMolecule>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleOptions {
    pub steps: usize,
    pub solver: Solver,
    /// Samples per reference conformer.
    pub ratio: usize,
    /// Dataset molecules; all when `None`.
    pub molecules: Option<Vec<usize>>,
    pub seed: u64,
    pub trajectories: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            steps: 100,
            solver: Solver::Euler,
            ratio: 2,
            molecules: None,
            seed: 0,
            trajectories: false,
        }
    }
}

fn molecule_list(dataset: &Dataset, chosen: Option<&[usize]>) -> Result<Vec<usize>> {
    match chosen {
        None => Ok((0..dataset.len()).collect()),
        Some(list) => {
            if let Some(&m) = list.iter().find(|&&m| m >= dataset.len()) {
                return Err(CliError::Usage(format!(
                    "molecule {m} out of range for a {}-molecule dataset",
                    dataset.len()
                )));
            }
            Ok(list.to_vec())
        }
    }
}

pub fn sample(run: &RunDir, stage: Stage, opts: &SampleOptions, workers: usize) -> Result<SampleSet> {
    if opts.steps == 0 || opts.ratio == 0 {
        return Err(CliError::Usage("steps and ratio must be positive".into()));
    }
    let ckpt = run.checkpoint(stage)?;
    let dataset = run.dataset()?;
    let mols = molecule_list(&dataset, opts.molecules.as_deref())?;
    let mut rng = stream_rng(opts.seed, "sample-prior");
    let jobs: Vec<(usize, Coords<f64>)> = mols
        .iter()
        .flat_map(|&m| std::iter::repeat_n(m, opts.ratio * dataset.molecules[m].conformers.len()))
        .map(|m| (m, sample_prior_with(dataset.molecules[m].n_atoms(), &mut rng)))
        .collect();
    let net = &ckpt.net;
    let trajs = par_map(&jobs, workers, |(m, x0)| -> Result<Vec<Coords<f64>>> {
        let feats = featurize(&dataset.molecules[*m].graph, net.config.pe_width)?;
        Ok(sample_with(opts.solver, x0, opts.steps, |x, t| net.forward(&feats, x, t))?.states)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut molecules: Vec<GeneratedMolecule> = mols
        .iter()
        .map(|&mol| GeneratedMolecule {
            mol,
            conformers: Vec::new(),
            trajectories: opts.trajectories.then(Vec::new),
        })
        .collect();
    let slot: BTreeMap<usize, usize> = mols.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    for ((m, _), states) in jobs.iter().zip(trajs) {
        let g = &mut molecules[slot[m]];
        g.conformers.push(states.last().expect("nonempty").clone());
        if let Some(t) = g.trajectories.as_mut() {
            t.push(states);
        }
    }
    let set = SampleSet {
        schema_version: SAMPLES_VERSION,
        stage: stage.name().into(),
        solver: opts.solver,
        steps: opts.steps,
        seed: opts.seed,
        molecules,
    };
    let name = format!("samples.{}.json", stage.name());
    let out = run.write(&name, serde_json::to_string(&set).expect("samples serialize").as_bytes())?;
    run.record(
        &format!("sample.{}", stage.name()),
        StageRecord {
            seed: opts.seed,
            settings: serde_json::to_value(opts).expect("options serialize"),
            inputs: run.inputs(&[&stage.checkpoint(), DATASET])?,
            outputs: BTreeMap::from([(name, out)]),
        },
    )?;
    Ok(set)
}

/// Scores a sample set against the dataset conformers, averaged over
/// molecules.
pub fn score_samples(dataset: &Dataset, set: &SampleSet, delta: f64) -> Result<MetricReport> {
    if set.schema_version != SAMPLES_VERSION {
        return Err(CliError::Usage(format!(
            "sample schema version {} (expected {SAMPLES_VERSION})",
            set.schema_version
        )));
    }
    let reports = set
        .molecules
        .iter()
        .map(|g| {
            let truth = &dataset
                .molecules
                .get(g.mol)
                .ok_or_else(|| CliError::Usage(format!("sample refers to missing molecule {}", g.mol)))?
                .conformers;
            Ok(coverage_amr(&g.conformers, truth, delta)?)
        })
        .collect::<Result<Vec<_>>>()?;
    MetricReport::mean(&reports).ok_or_else(|| CliError::Usage("sample set is empty".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub steps: Vec<usize>,
    /// Generated conformers per reference conformer.
    pub ratio: usize,
    pub delta: f64,
    pub seed: u64,
    /// Trajectories averaged for straightness, and their step count.
    pub straightness_trajectories: usize,
    pub straightness_steps: usize,
    /// Dataset molecules; all when `None`.
    pub molecules: Option<Vec<usize>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            steps: avgflow_train::STEP_SWEEP.to_vec(),
            ratio: 2,
            delta: avgflow_core::DELTA_DRUGS,
            seed: 0,
            straightness_trajectories: 64,
            straightness_steps: 100,
            molecules: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub stage: String,
    pub sweep: Vec<StepReport>,
    pub straightness: f64,
}

impl EvalReport {
    pub fn at_steps(&self, steps: usize) -> Option<&MetricReport> {
        self.sweep.iter().find(|r| r.steps == steps).map(|r| &r.report)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{} (straightness {:.4})\n{:>6} {:>8} {:>8} {:>8} {:>8}\n",
            self.stage, self.straightness, "steps", "COV-R", "AMR-R", "COV-P", "AMR-P"
        );
        for r in &self.sweep {
            let m = &r.report;
            s.push_str(&format!(
                "{:>6} {:>8.2} {:>8.4} {:>8.2} {:>8.4}\n",
                r.steps, m.cov_r, m.amr_r, m.cov_p, m.amr_p
            ));
        }
        s
    }
}

/// Coverage per step count and mean straightness of one stage.
pub fn eval(run: &RunDir, stage: Stage, opts: &EvalOptions, workers: usize) -> Result<EvalReport> {
    if opts.steps.is_empty() || opts.steps.contains(&0) || opts.ratio == 0 {
        return Err(CliError::Usage("eval needs positive step counts and ratio".into()));
    }
    if opts.straightness_steps < 2 || opts.straightness_trajectories == 0 {
        return Err(CliError::Usage("straightness needs >= 2 steps and >= 1 trajectory".into()));
    }
    let ckpt = run.checkpoint(stage)?;
    let dataset = run.dataset()?;
    let mols = molecule_list(&dataset, opts.molecules.as_deref())?;
    let sweep = coverage_sweep(&ckpt.net, &dataset, &mols, &opts.steps, opts.ratio, opts.delta, opts.seed, workers)?;
    let straightness = mean_straightness(
        &ckpt.net,
        &dataset,
        &mols,
        opts.straightness_trajectories,
        opts.straightness_steps,
        opts.seed,
        workers,
    )?;
    let report = EvalReport {
        stage: stage.name().into(),
        sweep,
        straightness,
    };
    let name = format!("eval.{}.json", stage.name());
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    let out = run.write(&name, text.as_bytes())?;
    run.record(
        &format!("eval.{}", stage.name()),
        StageRecord {
            seed: opts.seed,
            settings: serde_json::to_value(opts).expect("options serialize"),
            inputs: run.inputs(&[&stage.checkpoint(), DATASET])?,
            outputs: BTreeMap::from([(name, out)]),
        },
    )?;
    Ok(report)
}

/// Mean one-step RMSD of `stage` against endpoints integrated from its
/// teacher with `opts.steps` steps on every dataset molecule.
pub fn one_step_error(run: &RunDir, stage: Stage, teacher: Stage, opts: &PairOptions, workers: usize) -> Result<f64> {
    let dataset = run.dataset()?;
    let all: Vec<usize> = (0..dataset.len()).collect();
    let held = generate_reflow_pairs(&run.checkpoint(teacher)?, &dataset, &all, opts.steps, opts.pairs_per_graph, opts.seed, workers)?;
    Ok(one_step_rmsd(&run.checkpoint(stage)?.net, &dataset, &held, workers)?)
}
