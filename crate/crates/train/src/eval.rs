//! Evaluation runs on a trained field: coverage per step count, trajectory
//! straightness and one-step transport error.

use avgflow_core::baseline::sample_prior_with;
use avgflow_core::random::stream_rng;
use avgflow_core::{coverage_amr, rmsd_kabsch, straightness, Coords, MetricReport};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Result;
use crate::features::featurize;
use crate::model::VectorFieldNet;
use crate::sampling::{euler_sample, one_step};
use crate::trainer::{par_map, ReflowPairSet};

/// Molecule-averaged coverage report for one sampler step count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub steps: usize,
    pub report: MetricReport,
}

/// Euler-samples `ratio x L` conformers per molecule (`L` = reference count)
/// from shared prior draws, once per entry of `steps`, and scores them
/// against the dataset conformers with threshold `delta`.
pub fn coverage_sweep(
    net: &VectorFieldNet,
    dataset: &Dataset,
    molecules: &[usize],
    steps: &[usize],
    ratio: usize,
    delta: f64,
    seed: u64,
    workers: usize,
) -> Result<Vec<StepReport>> {
    let mut rng = stream_rng(seed, "eval-prior");
    let jobs: Vec<(usize, Vec<Coords<f64>>)> = molecules
        .iter()
        .map(|&m| {
            let mol = &dataset.molecules[m];
            let k = ratio.max(1) * mol.conformers.len();
            (m, (0..k).map(|_| sample_prior_with(mol.n_atoms(), &mut rng)).collect())
        })
        .collect();
    let mut out = Vec::with_capacity(steps.len());
    for &s in steps {
        let reports = par_map(&jobs, workers, |(m, starts)| -> Result<MetricReport> {
            let mol = &dataset.molecules[*m];
            let feats = featurize(&mol.graph, net.config.pe_width)?;
            let generated = starts
                .iter()
                .map(|x0| Ok(euler_sample(net, &feats, x0, s)?.last().clone()))
                .collect::<Result<Vec<_>>>()?;
            Ok(coverage_amr(&generated, &mol.conformers, delta)?)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        out.push(StepReport {
            steps: s,
            report: MetricReport::mean(&reports).expect("at least one molecule"),
        });
    }
    Ok(out)
}

/// Mean straightness of `count` Euler trajectories with `steps` steps, drawn
/// round-robin over `molecules`.
pub fn mean_straightness(
    net: &VectorFieldNet,
    dataset: &Dataset,
    molecules: &[usize],
    count: usize,
    steps: usize,
    seed: u64,
    workers: usize,
) -> Result<f64> {
    let mut rng = stream_rng(seed, "straightness-prior");
    let jobs: Vec<(usize, Coords<f64>)> = (0..count)
        .map(|k| {
            let m = molecules[k % molecules.len()];
            (m, sample_prior_with(dataset.molecules[m].n_atoms(), &mut rng))
        })
        .collect();
    let values = par_map(&jobs, workers, |(m, x0)| -> Result<f64> {
        let feats = featurize(&dataset.molecules[*m].graph, net.config.pe_width)?;
        Ok(straightness(&euler_sample(net, &feats, x0, steps)?)?.value)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(values.iter().sum::<f64>() / values.len().max(1) as f64)
}

/// Mean Kabsch RMSD between `x0 + v(x0, 0)` and the paired `x1`.
pub fn one_step_rmsd(net: &VectorFieldNet, dataset: &Dataset, pairs: &ReflowPairSet, workers: usize) -> Result<f64> {
    let values = par_map(&pairs.pairs, workers, |p| -> Result<f64> {
        let feats = featurize(&dataset.molecules[p.mol].graph, net.config.pe_width)?;
        Ok(rmsd_kabsch(&one_step(net, &feats, &p.x0)?, &p.x1)?)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(values.iter().sum::<f64>() / values.len().max(1) as f64)
}
