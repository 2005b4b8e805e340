//! Training loops: averaged-flow (or baseline) stage 1, reflow and distillation.
//!
//! All three share one loop. Random draws happen sequentially on the calling
//! thread; targets and gradients may fan out to worker threads, and results
//! are always combined in item order, so runs are bit-for-bit reproducible
//! for any worker count.

use avgflow_core::baseline::sample_prior_with;
use avgflow_core::random::{stream_rng, uniform_rotation, StreamRng};
use avgflow_core::target::T_CLAMP;
use avgflow_core::{
    avg_flow_target, baseline_target, integration_interpolant, BaselineKind,
    ConformerEnsemble, Coords, FlowQuery, InterpolantKind, Mat3, MetricSpec,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{Objective, TrainConfig};
use crate::data::Dataset;
use crate::error::{Result, TrainError};
use crate::features::{featurize, GraphFeatures};
use crate::loss::{chord_point, regression_loss};
use crate::model::VectorFieldNet;
use crate::optim::{clip_grad_norm, AdamW, Ema};
use crate::sampling::euler_sample;
use crate::timesample::TimeSampler;

pub const PAIR_SCHEMA_VERSION: u32 = 1;

/// One regression example: the field at `(x, t)` should equal `target`.
#[derive(Clone, Debug)]
pub struct Sample {
    pub mol: usize,
    pub x: Coords<f64>,
    pub t: f64,
    pub target: Coords<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_loss_ema: f64,
    pub field_error: Option<f64>,
    pub field_error_ema: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub raw: VectorFieldNet,
    pub ema: VectorFieldNet,
    /// Validation loss (and field error) of the starting weights.
    pub initial: EpochRecord,
    pub curve: Vec<EpochRecord>,
    pub train_items: Vec<usize>,
    pub val_items: Vec<usize>,
}

impl TrainOutcome {
    pub fn final_record(&self) -> &EpochRecord {
        self.curve.last().unwrap_or(&self.initial)
    }
}

/// CSV with header `epoch,lr,train_loss,val_loss,val_loss_ema,field_error,field_error_ema`.
/// Row `0` holds the starting weights; unavailable values are empty.
pub fn curve_csv(initial: &EpochRecord, curve: &[EpochRecord]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from("epoch,lr,train_loss,val_loss,val_loss_ema,field_error,field_error_ema\n");
    for r in std::iter::once(initial).chain(curve) {
        let train = if r.train_loss.is_nan() {
            String::new()
        } else {
            r.train_loss.to_string()
        };
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch,
            r.lr,
            train,
            r.val_loss,
            r.val_loss_ema,
            opt(r.field_error),
            opt(r.field_error_ema)
        ));
    }
    s
}

/// Maps `f` over `items` on up to `workers` scoped threads, preserving order.
pub fn par_map<T, U, F>(items: &[T], workers: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<U>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Per-item randomness, drawn on the calling thread.
#[derive(Clone, Debug)]
struct Draw {
    item: usize,
    conformer: usize,
    rotation: Mat3<f64>,
    x0: Option<Coords<f64>>,
    t: f64,
}

trait Task: Sync {
    /// Features of dataset molecule `mol`.
    fn features(&self, mol: usize) -> &GraphFeatures;
    fn draw(&self, item: usize, rng: &mut StreamRng) -> Draw;
    fn realize(&self, d: &Draw) -> Result<Sample>;
}

fn draw_time(sampler: &TimeSampler, rng: &mut StreamRng) -> f64 {
    sampler.sample(rng).min(T_CLAMP)
}

fn pick_conformer(weights: &[f64], rng: &mut StreamRng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    weights.len() - 1
}

struct Stage1Task<'a> {
    dataset: &'a Dataset,
    feats: Vec<GraphFeatures>,
    ensembles: Vec<ConformerEnsemble<f64>>,
    config: &'a TrainConfig,
    metric: MetricSpec<f64>,
}

impl Task for Stage1Task<'_> {
    fn features(&self, mol: usize) -> &GraphFeatures {
        &self.feats[mol]
    }

    fn draw(&self, item: usize, rng: &mut StreamRng) -> Draw {
        let m = &self.dataset.molecules[item];
        let conformer = pick_conformer(&m.weights, rng);
        let rotation = uniform_rotation(rng);
        let x0 = sample_prior_with(m.n_atoms(), rng);
        let t = draw_time(&self.config.t_sampler, rng);
        Draw {
            item,
            conformer,
            rotation,
            x0: Some(x0),
            t,
        }
    }

    fn realize(&self, d: &Draw) -> Result<Sample> {
        let ens = &self.ensembles[d.item];
        let x0 = d.x0.as_ref().expect("stage-1 draws carry noise");
        let x1 = ens.conformers()[d.conformer].rotate(&d.rotation);
        let t = d.t;
        let (x, target) = match self.config.objective {
            Objective::AvgFlow => {
                let local = if self.config.full_ensemble {
                    ens.clone()
                } else {
                    ens.single(d.conformer)
                };
                let x = match self.config.interpolant {
                    InterpolantKind::Linear => x0.lincomb(1.0 - t, &x1, t),
                    InterpolantKind::Integrated { steps } => {
                        integration_interpolant(x0, &local, &self.metric, t, steps)?
                    }
                };
                let u = avg_flow_target(&FlowQuery::new(t, x.clone())?, &local, &self.metric)?;
                (x, u)
            }
            Objective::CondOT | Objective::KabschOT => {
                let kind = if self.config.objective == Objective::CondOT {
                    BaselineKind::CondOT
                } else {
                    BaselineKind::KabschOT
                };
                let pair = baseline_target(kind, x0, &x1)?;
                (pair.interpolate(t), pair.velocity)
            }
        };
        Ok(Sample {
            mol: d.item,
            x,
            t,
            target,
        })
    }
}

/// Pairs drawn from a [`ReflowPairSet`]; `fixed_t` pins the time (distillation).
struct PairTask<'a> {
    pairs: &'a ReflowPairSet,
    feats: Vec<GraphFeatures>,
    sampler: TimeSampler,
    fixed_t: Option<f64>,
}

impl Task for PairTask<'_> {
    fn features(&self, mol: usize) -> &GraphFeatures {
        &self.feats[mol]
    }

    fn draw(&self, item: usize, rng: &mut StreamRng) -> Draw {
        let t = self.fixed_t.unwrap_or_else(|| draw_time(&self.sampler, rng));
        Draw {
            item,
            conformer: 0,
            rotation: Mat3::identity(),
            x0: None,
            t,
        }
    }

    fn realize(&self, d: &Draw) -> Result<Sample> {
        let p = &self.pairs.pairs[d.item];
        let (x, target) = chord_point(&p.x0, &p.x1, d.t);
        Ok(Sample {
            mol: p.mol,
            x,
            t: d.t,
            target,
        })
    }
}

fn realize_all<T: Task>(task: &T, draws: &[Draw], workers: usize) -> Result<Vec<Sample>> {
    par_map(draws, workers, |d| task.realize(d)).into_iter().collect()
}

fn mean_loss<T: Task>(task: &T, net: &VectorFieldNet, samples: &[Sample], workers: usize) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let losses = par_map(samples, workers, |s| {
        regression_loss(net, task.features(s.mol), &s.x, s.t, &s.target, None)
    });
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / samples.len() as f64)
}

/// Shared optimization loop over `train_items`; `val` and `probes` are fixed
/// evaluation sets.
fn fit<T: Task>(
    task: &T,
    start: &VectorFieldNet,
    config: &TrainConfig,
    train_items: Vec<usize>,
    val_items: Vec<usize>,
    val: &[Sample],
    probes: Option<&[Sample]>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_items.is_empty() {
        return Err(TrainError::Invalid("no training items".into()));
    }
    let workers = config.worker_count();
    let mut raw = start.clone();
    let mut ema = Ema::new(&raw.params, config.ema_decay, config.ema_warmup);
    let mut opt = AdamW::new(raw.params.len(), config.weight_decay);

    let evaluate = |epoch: usize, lr: f64, train_loss: f64, raw: &VectorFieldNet, ema: &VectorFieldNet| -> Result<EpochRecord> {
        let field = |net: &VectorFieldNet| -> Result<Option<f64>> {
            probes.map(|p| mean_loss(task, net, p, workers)).transpose()
        };
        Ok(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss: mean_loss(task, raw, val, workers)?,
            val_loss_ema: mean_loss(task, ema, val, workers)?,
            field_error: field(raw)?,
            field_error_ema: field(ema)?,
        })
    };
    let initial = evaluate(0, 0.0, f64::NAN, &raw, &raw)?;

    let per_epoch = train_items.len() * config.samples_per_molecule;
    let steps_per_epoch = per_epoch.div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let mut rng = stream_rng(config.seed, "epochs");
    let mut step = 0;
    let mut first_loss = None;
    let mut curve = Vec::with_capacity(config.epochs);
    let mut ema_net = raw.clone();
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = train_items
            .iter()
            .flat_map(|&i| std::iter::repeat_n(i, config.samples_per_molecule))
            .collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let draws: Vec<Draw> = order.iter().map(|&i| task.draw(i, &mut rng)).collect();
        let samples = realize_all(task, &draws, workers)?;

        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for batch in samples.chunks(config.batch_size) {
            let results = par_map(batch, workers, |s| {
                let mut g = vec![0.0; raw.params.len()];
                regression_loss(&raw, task.features(s.mol), &s.x, s.t, &s.target, Some(&mut g))
                    .map(|l| (l, g))
            });
            let mut grad = vec![0.0; raw.params.len()];
            for r in results {
                let (l, g) = r?;
                loss_sum += l;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            clip_grad_norm(&mut grad, config.grad_clip);
            lr = config.schedule.rate(step, total_steps);
            opt.step(&mut raw.params, &grad, lr);
            ema.update(&raw.params);
            step += 1;
        }
        let train_loss = loss_sum / samples.len() as f64;
        let reference = *first_loss.get_or_insert(train_loss);
        if !train_loss.is_finite() || (reference > 0.0 && train_loss > 1e3 * reference) {
            return Err(TrainError::Diverged {
                epoch,
                loss: train_loss,
                initial: reference,
            });
        }
        ema_net.params.clone_from(&ema.params);
        curve.push(evaluate(epoch, lr, train_loss, &raw, &ema_net)?);
    }
    Ok(TrainOutcome {
        raw,
        ema: ema_net,
        initial,
        curve,
        train_items,
        val_items,
    })
}

fn dataset_features(dataset: &Dataset, pe_width: usize) -> Result<Vec<GraphFeatures>> {
    dataset
        .molecules
        .iter()
        .map(|m| featurize(&m.graph, pe_width))
        .collect()
}

/// Fixed probes for the target-field error: points on the straight path to a
/// Haar-rotated conformer, scored against the exact averaged field of the
/// whole ensemble.
pub fn field_error_probes(
    dataset: &Dataset,
    molecules: &[usize],
    per_molecule: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    let mut rng = stream_rng(seed, "field-error");
    let metric = MetricSpec::euclidean();
    let mut out = Vec::with_capacity(molecules.len() * per_molecule);
    for &mol in molecules {
        let m = &dataset.molecules[mol];
        let ens = m.ensemble()?;
        for _ in 0..per_molecule {
            let k = pick_conformer(&m.weights, &mut rng);
            let r: Mat3<f64> = uniform_rotation(&mut rng);
            let x0 = sample_prior_with(m.n_atoms(), &mut rng);
            let t = rng.random::<f64>() * T_CLAMP;
            let x = x0.lincomb(1.0 - t, &ens.conformers()[k].rotate(&r), t);
            let target = avg_flow_target(&FlowQuery::new(t, x.clone())?, &ens, &metric)?;
            out.push(Sample { mol, x, t, target });
        }
    }
    Ok(out)
}

/// Mean `(1/N) ‖v - u‖²` of `net` over `probes`.
pub fn field_error(net: &VectorFieldNet, dataset: &Dataset, probes: &[Sample]) -> Result<f64> {
    let feats = dataset_features(dataset, net.config.pe_width)?;
    let mut sum = 0.0;
    for s in probes {
        sum += regression_loss(net, &feats[s.mol], &s.x, s.t, &s.target, None)?;
    }
    Ok(sum / probes.len().max(1) as f64)
}

/// Stage 1: regress the configured objective on the dataset.
///
/// Molecules are split into training and validation sets by
/// `config.val_fraction` and `config.seed`. Each epoch visits every training
/// molecule `samples_per_molecule` times with one conformer drawn by weight
/// (the whole ensemble enters the averaged target when `full_ensemble`).
pub fn train_stage1(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::Invalid("dataset is empty".into()));
    }
    let start = VectorFieldNet::init(config.model, config.seed)?;
    let task = Stage1Task {
        dataset,
        feats: dataset_features(dataset, config.model.pe_width)?,
        ensembles: dataset
            .molecules
            .iter()
            .map(|m| m.ensemble())
            .collect::<Result<_>>()?,
        config,
        metric: MetricSpec::euclidean(),
    };
    let (train, val) = dataset.split(config.val_fraction, config.seed);
    let mut rng = stream_rng(config.seed, "validation");
    let draws: Vec<Draw> = val
        .iter()
        .flat_map(|&i| std::iter::repeat_n(i, config.val_probes))
        .map(|i| task.draw(i, &mut rng))
        .collect();
    let val_samples = realize_all(&task, &draws, config.worker_count())?;
    let probes = if config.track_field_error {
        Some(field_error_probes(dataset, &val, config.val_probes, config.seed)?)
    } else {
        None
    };
    fit(&task, &start, config, train, val, &val_samples, probes.as_deref())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflowPair {
    /// Index of the molecule in the dataset.
    pub mol: usize,
    pub x0: Coords<f64>,
    pub x1: Coords<f64>,
}

/// Noise/sample couplings produced by a teacher model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflowPairSet {
    pub schema_version: u32,
    /// Euler steps used to integrate the teacher.
    pub steps: usize,
    pub seed: u64,
    /// SHA-256 of the teacher checkpoint.
    pub teacher: String,
    pub pairs: Vec<ReflowPair>,
}

impl ReflowPairSet {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pairs serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self =
            serde_json::from_str(text).map_err(|e| TrainError::Dataset(format!("pairs: {e}")))?;
        if p.schema_version != PAIR_SCHEMA_VERSION {
            return Err(TrainError::Dataset(format!(
                "pair schema version {} (expected {PAIR_SCHEMA_VERSION})",
                p.schema_version
            )));
        }
        Ok(p)
    }
}

/// Draws `pairs_per_graph` prior samples per listed molecule and integrates
/// the teacher field with `steps` Euler steps.
pub fn generate_reflow_pairs(
    teacher: &Checkpoint,
    dataset: &Dataset,
    molecules: &[usize],
    steps: usize,
    pairs_per_graph: usize,
    seed: u64,
    workers: usize,
) -> Result<ReflowPairSet> {
    if steps == 0 || pairs_per_graph == 0 {
        return Err(TrainError::Invalid(
            "reflow pairs need steps >= 1 and pairs_per_graph >= 1".into(),
        ));
    }
    let net = &teacher.net;
    let feats = dataset_features(dataset, net.config.pe_width)?;
    let mut rng = stream_rng(seed, "reflow-prior");
    let starts: Vec<(usize, Coords<f64>)> = molecules
        .iter()
        .flat_map(|&m| std::iter::repeat_n(m, pairs_per_graph))
        .map(|m| (m, sample_prior_with(dataset.molecules[m].n_atoms(), &mut rng)))
        .collect();
    let pairs = par_map(&starts, workers, |(mol, x0)| {
        euler_sample(net, &feats[*mol], x0, steps).map(|tr| ReflowPair {
            mol: *mol,
            x0: x0.clone(),
            x1: tr.last().clone(),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ReflowPairSet {
        schema_version: PAIR_SCHEMA_VERSION,
        steps,
        seed,
        teacher: teacher.digest()?,
        pairs,
    })
}

fn train_on_pairs(
    start: &VectorFieldNet,
    pairs: &ReflowPairSet,
    dataset: &Dataset,
    config: &TrainConfig,
    fixed_t: Option<f64>,
) -> Result<TrainOutcome> {
    if pairs.pairs.is_empty() {
        return Err(TrainError::Invalid("no reflow pairs".into()));
    }
    if start.config != config.model {
        return Err(TrainError::ConfigMismatch {
            found: format!("{:?}", start.config),
            expected: format!("{:?}", config.model),
        });
    }
    if let Some(p) = pairs.pairs.iter().find(|p| p.mol >= dataset.len()) {
        return Err(TrainError::Invalid(format!(
            "pair refers to molecule {} of a {}-molecule dataset",
            p.mol,
            dataset.len()
        )));
    }
    let task = PairTask {
        pairs,
        feats: dataset_features(dataset, config.model.pe_width)?,
        sampler: config.t_sampler,
        fixed_t,
    };
    let n = pairs.pairs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut stream_rng(config.seed, "split-pairs"));
    let n_val = if n < 2 {
        0
    } else {
        ((config.val_fraction * n as f64).round() as usize).min(n - 1)
    };
    let mut val = idx.split_off(n - n_val);
    idx.sort_unstable();
    val.sort_unstable();
    let mut rng = stream_rng(config.seed, "validation");
    let draws: Vec<Draw> = val.iter().map(|&i| task.draw(i, &mut rng)).collect();
    let val_samples = realize_all(&task, &draws, config.worker_count())?;
    fit(&task, start, config, idx, val, &val_samples, None)
}

/// Fine-tunes `start` on the chord between coupled pairs.
pub fn train_reflow(
    start: &VectorFieldNet,
    pairs: &ReflowPairSet,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_on_pairs(start, pairs, dataset, config, None)
}

/// Fine-tunes `start` so that one Euler step from `x0` lands on `x1`: the
/// reflow objective with `t` pinned to 0.
pub fn train_distill(
    start: &VectorFieldNet,
    pairs: &ReflowPairSet,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_on_pairs(start, pairs, dataset, config, Some(0.0))
}
