//! Closed-form target against Monte-Carlo rotation averaging.

use avgflow_core::oracle::{compare_instance, oracle_instances, OracleComparison, OracleInstance, SUITE_TIMES};
use avgflow_core::random::stream_rng;
use avgflow_core::target::scaled_query;
use avgflow_core::MetricSpec;
use avgflow_train::{par_map, Dataset};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub instances: usize,
    pub samples: usize,
    pub seed: u64,
    /// Factor applied to the closed form before comparing; 1 leaves it intact.
    pub tamper: f64,
    /// Allowed deviation in standard errors.
    pub z_limit: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            instances: 20,
            samples: 200_000,
            seed: 2024,
            tamper: 1.0,
            z_limit: 3.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleReport {
    pub options: OracleOptions,
    pub passed: bool,
    pub failed: usize,
    pub results: Vec<OracleComparison>,
}

/// Instances built from dataset molecules instead of random point clouds;
/// metrics alternate Euclidean / harmonic on the molecule's own graph.
pub fn dataset_instances(dataset: &Dataset, count: usize, seed: u64) -> Result<Vec<OracleInstance>> {
    let mut rng = stream_rng(seed, "oracle-instances");
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let m = &dataset.molecules[i % dataset.len()];
        let ensemble = m.ensemble()?;
        let t = SUITE_TIMES[i % SUITE_TIMES.len()];
        let (metric, name) = if i % 2 == 0 {
            (MetricSpec::euclidean(), "euclidean")
        } else {
            (MetricSpec::harmonic(m.graph.clone()), "harmonic")
        };
        let coupling = rng.random_range(0.5..4.0);
        let query = scaled_query(&mut rng, t, &ensemble, &metric, coupling)?;
        out.push(OracleInstance {
            label: format!("#{i:02} {} {name} N={} K={} t={t}", m.id, m.n_atoms(), ensemble.len()),
            query,
            ensemble,
            metric,
        });
    }
    Ok(out)
}

pub fn oracle_check(opts: &OracleOptions, dataset: Option<&Dataset>, workers: usize) -> Result<OracleReport> {
    let instances = match dataset {
        Some(d) if !d.is_empty() => dataset_instances(d, opts.instances, opts.seed)?,
        _ => oracle_instances(opts.instances, opts.seed)?,
    };
    let indexed: Vec<(usize, OracleInstance)> = instances.into_iter().enumerate().collect();
    let results = par_map(&indexed, workers, |(i, inst)| {
        compare_instance(inst, opts.samples, 1000 + *i as u64, opts.tamper)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let failed = results.iter().filter(|r| !r.passes(opts.z_limit)).count();
    Ok(OracleReport {
        options: opts.clone(),
        passed: failed == 0,
        failed,
        results,
    })
}

impl OracleReport {
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<40} {:>8} {:>12} {:>10}\n", "instance", "max z", "max |dev|", "ESS");
        for r in &self.results {
            s.push_str(&format!(
                "{:<40} {:>8.3} {:>12.3e} {:>10.0}\n",
                r.label, r.max_z, r.max_abs_dev, r.effective_samples
            ));
        }
        s.push_str(&format!(
            "{} ({} of {} beyond {} standard errors)\n",
            if self.passed { "PASS" } else { "FAIL" },
            self.failed,
            self.results.len(),
            self.options.z_limit
        ));
        s
    }
}
