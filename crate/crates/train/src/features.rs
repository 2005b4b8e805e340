//! Per-node and per-pair input features of the reference network.

use avgflow_core::{BondType, MoleculeGraph};
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Result, TrainError};

/// Atom types `0..ATOM_TYPES` are one-hot encoded.
pub const ATOM_TYPES: usize = 8;
/// Degrees `0..=4` get their own slot, anything larger shares the last one.
pub const DEGREE_BINS: usize = 6;
/// Hop distances 1, 2, 3 and "4 or more / disconnected".
pub const HOP_BINS: usize = 4;

/// Static features of one molecular graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphFeatures {
    pub n_atoms: usize,
    /// Row-major `n_atoms x node_width()` block of one-hots followed by the PE.
    pub node: Vec<f64>,
    /// Row-major `n_atoms² x (BondType::COUNT + HOP_BINS)` pair table.
    pub pair: Vec<f64>,
    pub pe_width: usize,
}

impl GraphFeatures {
    pub fn node_width(&self) -> usize {
        ATOM_TYPES + DEGREE_BINS + self.pe_width
    }

    pub fn node_row(&self, i: usize) -> &[f64] {
        let w = self.node_width();
        &self.node[i * w..(i + 1) * w]
    }

    pub fn pair_row(&self, i: usize, j: usize) -> &[f64] {
        let w = PAIR_STATIC_WIDTH;
        let k = i * self.n_atoms + j;
        &self.pair[k * w..(k + 1) * w]
    }

    /// The Laplacian positional encoding of atom `i`.
    pub fn pe(&self, i: usize) -> &[f64] {
        &self.node_row(i)[ATOM_TYPES + DEGREE_BINS..]
    }
}

pub const PAIR_STATIC_WIDTH: usize = BondType::COUNT + HOP_BINS;

pub fn featurize(graph: &MoleculeGraph, pe_width: usize) -> Result<GraphFeatures> {
    let n = graph.n_atoms();
    let pe = laplacian_pe(graph, pe_width);
    let width = ATOM_TYPES + DEGREE_BINS + pe_width;
    let mut node = vec![0.0; n * width];
    for i in 0..n {
        let t = graph.atom_types()[i] as usize;
        if t >= ATOM_TYPES {
            return Err(TrainError::Invalid(format!(
                "atom type {t} on atom {i} exceeds the {ATOM_TYPES} supported types"
            )));
        }
        let row = &mut node[i * width..(i + 1) * width];
        row[t] = 1.0;
        row[ATOM_TYPES + graph.degree()[i].min(DEGREE_BINS - 1)] = 1.0;
        row[ATOM_TYPES + DEGREE_BINS..].copy_from_slice(&pe[i * pe_width..(i + 1) * pe_width]);
    }

    let bonds = graph.bond_matrix();
    let hops = graph.hop_distances();
    let mut pair = vec![0.0; n * n * PAIR_STATIC_WIDTH];
    for k in 0..n * n {
        if k / n == k % n {
            continue;
        }
        let row = &mut pair[k * PAIR_STATIC_WIDTH..(k + 1) * PAIR_STATIC_WIDTH];
        row[bonds[k].index()] = 1.0;
        let h = hops[k].clamp(1, HOP_BINS);
        row[BondType::COUNT + h - 1] = 1.0;
    }
    Ok(GraphFeatures {
        n_atoms: n,
        node,
        pair,
        pe_width,
    })
}

/// Lowest nontrivial eigenvectors of `I - D^{-1/2} A D^{-1/2}`, per connected
/// component, zero padded to `width` columns. Row-major `n x width`.
///
/// Each column's sign makes its first entry with `|v| > 1e-9` positive.
pub fn laplacian_pe(graph: &MoleculeGraph, width: usize) -> Vec<f64> {
    let n = graph.n_atoms();
    let mut out = vec![0.0; n * width];
    if width == 0 {
        return out;
    }
    let adj = graph.neighbors();
    for comp in graph.components() {
        let m = comp.len();
        if m < 2 {
            continue;
        }
        let mut local = vec![usize::MAX; n];
        for (a, &i) in comp.iter().enumerate() {
            local[i] = a;
        }
        let mut lap = DMatrix::<f64>::identity(m, m);
        for (a, &i) in comp.iter().enumerate() {
            let di = adj[i].len() as f64;
            for &j in &adj[i] {
                let dj = adj[j].len() as f64;
                lap[(a, local[j])] -= 1.0 / (di * dj).sqrt();
            }
        }
        let eig = SymmetricEigen::new(lap);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
        for (col, &k) in order.iter().skip(1).take(width).enumerate() {
            let v = eig.eigenvectors.column(k);
            let sign = v
                .iter()
                .find(|x| x.abs() > 1e-9)
                .map_or(1.0, |x| x.signum());
            for (a, &i) in comp.iter().enumerate() {
                out[i * width + col] = sign * v[a];
            }
        }
    }
    out
}
