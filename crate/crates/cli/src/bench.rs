//! Wall-clock cost of the averaged-flow target over a grid of batch sizes
//! and conformer counts.

use std::time::Instant;

use avgflow_core::random::{standard_normal_coords, stream_rng};
use avgflow_core::{avg_flow_target, ConformerEnsemble, FlowQuery, MetricSpec};
use avgflow_train::par_map;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_SIZES: [usize; 4] = [1, 10, 100, 1000];
pub const DEFAULT_NODES: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub batch: usize,
    pub conformers: usize,
    pub nodes: usize,
    /// Median over repeats.
    pub seconds: f64,
}

/// Times one batch of `batch` graphs, each with `conformers` conformers of
/// `nodes` atoms. Graphs share one conformer pool but each gets its own
/// query point and time; the work per graph is the same as with distinct
/// ensembles.
fn time_cell(pool: &[avgflow_core::Coords<f64>], queries: &[FlowQuery<f64>], conformers: usize, workers: usize) -> Result<f64> {
    let ens = ConformerEnsemble::uniform(pool[..conformers].to_vec())?;
    let metric = MetricSpec::euclidean();
    let start = Instant::now();
    par_map(queries, workers, |q| avg_flow_target(q, &ens, &metric))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(start.elapsed().as_secs_f64())
}

pub fn bench_target(
    batch_sizes: &[usize],
    conformer_counts: &[usize],
    nodes: usize,
    repeats: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<BenchCell>> {
    if batch_sizes.is_empty() || conformer_counts.is_empty() || batch_sizes.contains(&0) || conformer_counts.contains(&0) {
        return Err(CliError::Usage("batch sizes and conformer counts must be positive".into()));
    }
    if nodes < 3 || repeats == 0 {
        return Err(CliError::Usage("need at least 3 nodes and 1 repeat".into()));
    }
    let mut rng = stream_rng(seed, "bench");
    let max_c = *conformer_counts.iter().max().expect("nonempty");
    let max_b = *batch_sizes.iter().max().expect("nonempty");
    let pool: Vec<_> = (0..max_c).map(|_| standard_normal_coords(nodes, &mut rng).centered()).collect();
    let queries = (0..max_b)
        .map(|_| FlowQuery::new(rng.random_range(0.05..0.95), standard_normal_coords(nodes, &mut rng).centered()))
        .collect::<Result<Vec<_>, _>>()?;
    // Builds the quadrature table outside the timed region.
    time_cell(&pool, &queries[..1], 1, 1)?;
    let mut cells = Vec::new();
    for &b in batch_sizes {
        for &c in conformer_counts {
            let mut times = (0..repeats)
                .map(|_| time_cell(&pool, &queries[..b], c, workers))
                .collect::<Result<Vec<_>>>()?;
            times.sort_by(f64::total_cmp);
            cells.push(BenchCell {
                batch: b,
                conformers: c,
                nodes,
                seconds: times[times.len() / 2],
            });
        }
    }
    Ok(cells)
}

/// `batch,conformers,nodes,milliseconds`
pub fn bench_csv(cells: &[BenchCell]) -> String {
    let mut s = String::from("batch,conformers,nodes,milliseconds\n");
    for c in cells {
        s.push_str(&format!("{},{},{},{:.3}\n", c.batch, c.conformers, c.nodes, c.seconds * 1e3));
    }
    s
}

/// Time of the cell at `(batch, conformers)`.
pub fn cell_seconds(cells: &[BenchCell], batch: usize, conformers: usize) -> Option<f64> {
    cells
        .iter()
        .find(|c| c.batch == batch && c.conformers == conformers)
        .map(|c| c.seconds)
}
