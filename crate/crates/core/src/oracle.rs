//! Seeded closed-form vs Monte-Carlo comparison suite.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{Bond, BondType, MoleculeGraph};
use crate::random::{standard_normal_coords, stream_rng};
use crate::target::{
    avg_flow_target, mc_avg_flow, scaled_query, ConformerEnsemble, FlowQuery, MetricSpec,
};

pub const SUITE_TIMES: [f64; 3] = [0.2, 0.5, 0.8];

/// One random `(query, ensemble, metric)` triple.
#[derive(Clone, Debug)]
pub struct OracleInstance {
    pub label: String,
    pub query: FlowQuery<f64>,
    pub ensemble: ConformerEnsemble<f64>,
    pub metric: MetricSpec<f64>,
}

/// Random tree on `n` nodes, each node attached to an earlier one.
pub fn random_tree<R: Rng + ?Sized>(n: usize, rng: &mut R) -> MoleculeGraph {
    let bonds = (1..n)
        .map(|i| Bond {
            i: rng.random_range(0..i),
            j: i,
            kind: BondType::Single,
        })
        .collect();
    MoleculeGraph::new(vec![0; n], bonds).expect("tree bonds are valid")
}

/// `count` instances with 3 to 8 atoms and 1 to 3 conformers; times cycle
/// through [`SUITE_TIMES`] and even/odd instances use Euclidean/harmonic metrics.
pub fn oracle_instances(count: usize, seed: u64) -> Result<Vec<OracleInstance>> {
    let mut rng = stream_rng(seed, "oracle-instances");
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let n = rng.random_range(3..=8);
        let k = rng.random_range(1..=3);
        let t = SUITE_TIMES[i % SUITE_TIMES.len()];
        let confs = (0..k)
            .map(|_| standard_normal_coords(n, &mut rng))
            .collect();
        let ensemble = ConformerEnsemble::uniform(confs)?;
        let (metric, name) = if i % 2 == 0 {
            (MetricSpec::euclidean(), "euclidean")
        } else {
            (MetricSpec::harmonic(random_tree(n, &mut rng)), "harmonic")
        };
        let coupling = rng.random_range(0.5..4.0);
        let query = scaled_query(&mut rng, t, &ensemble, &metric, coupling)?;
        out.push(OracleInstance {
            label: format!("#{i:02} {name} N={n} K={k} t={t}"),
            query,
            ensemble,
            metric,
        });
    }
    Ok(out)
}

/// Agreement of one instance, in standard-error units.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleComparison {
    pub label: String,
    pub max_z: f64,
    pub max_abs_dev: f64,
    pub components: usize,
    pub effective_samples: f64,
}

impl OracleComparison {
    pub fn passes(&self, z_limit: f64) -> bool {
        self.max_z <= z_limit
    }
}

/// Compares the closed form against `samples` Monte-Carlo rotations.
///
/// `tamper` multiplies the closed-form velocity before comparing; `1.0`
/// leaves it untouched and anything else is a negative control.
pub fn compare_instance(
    inst: &OracleInstance,
    samples: usize,
    seed: u64,
    tamper: f64,
) -> Result<OracleComparison> {
    let exact = avg_flow_target(&inst.query, &inst.ensemble, &inst.metric)?.scale(tamper);
    let mc = mc_avg_flow(&inst.query, &inst.ensemble, &inst.metric, samples, seed)?;
    let (mut max_z, mut max_abs_dev) = (0.0f64, 0.0f64);
    let mut components = 0;
    for ((e, m), s) in exact
        .rows()
        .iter()
        .zip(mc.mean.rows())
        .zip(mc.std_err.rows())
    {
        for p in 0..3 {
            let dev = (e[p] - m[p]).abs();
            max_abs_dev = max_abs_dev.max(dev);
            max_z = max_z.max(if s[p] > 0.0 {
                dev / s[p]
            } else if dev > 0.0 {
                f64::INFINITY
            } else {
                0.0
            });
            components += 1;
        }
    }
    Ok(OracleComparison {
        label: inst.label.clone(),
        max_z,
        max_abs_dev,
        components,
        effective_samples: mc.effective_samples,
    })
}
