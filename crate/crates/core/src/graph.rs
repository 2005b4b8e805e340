//! Molecular bond graphs.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BondType {
    /// No bond; only used for atom pairs that are not connected.
    None,
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondType {
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        match self {
            BondType::None => 0,
            BondType::Single => 1,
            BondType::Double => 2,
            BondType::Triple => 3,
            BondType::Aromatic => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub kind: BondType,
}

/// Atom types, bonds and degrees of one molecule.
///
/// Bonds are undirected and stored once each.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct MoleculeGraph {
    atom_types: Vec<u8>,
    bonds: Vec<Bond>,
    degree: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    atom_types: Vec<u8>,
    bonds: Vec<(usize, usize, BondType)>,
}

impl TryFrom<RawGraph> for MoleculeGraph {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        let bonds = raw
            .bonds
            .into_iter()
            .map(|(i, j, kind)| Bond { i, j, kind })
            .collect();
        MoleculeGraph::new(raw.atom_types, bonds)
    }
}

impl From<MoleculeGraph> for RawGraph {
    fn from(g: MoleculeGraph) -> Self {
        RawGraph {
            atom_types: g.atom_types,
            bonds: g.bonds.iter().map(|b| (b.i, b.j, b.kind)).collect(),
        }
    }
}

impl MoleculeGraph {
    pub fn new(atom_types: Vec<u8>, bonds: Vec<Bond>) -> Result<Self> {
        let n = atom_types.len();
        if n == 0 {
            return Err(Error::InvalidArgument("molecule has no atoms".into()));
        }
        let mut seen = BTreeSet::new();
        let mut degree = vec![0usize; n];
        for b in &bonds {
            if b.i >= n || b.j >= n {
                return Err(Error::InvalidArgument(format!(
                    "bond ({}, {}) out of range for {n} atoms",
                    b.i, b.j
                )));
            }
            if b.i == b.j {
                return Err(Error::InvalidArgument(format!("self-loop on atom {}", b.i)));
            }
            if b.kind == BondType::None {
                return Err(Error::InvalidArgument(
                    "bond list entry of type none".into(),
                ));
            }
            if !seen.insert((b.i.min(b.j), b.i.max(b.j))) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate bond ({}, {})",
                    b.i, b.j
                )));
            }
            degree[b.i] += 1;
            degree[b.j] += 1;
        }
        Ok(Self {
            atom_types,
            bonds,
            degree,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.atom_types.len()
    }

    pub fn atom_types(&self) -> &[u8] {
        &self.atom_types
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn degree(&self) -> &[usize] {
        &self.degree
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_atoms()];
        for b in &self.bonds {
            adj[b.i].push(b.j);
            adj[b.j].push(b.i);
        }
        adj
    }

    /// Dense `n x n` bond-type table (`BondType::None` off the bond list).
    pub fn bond_matrix(&self) -> Vec<BondType> {
        let n = self.n_atoms();
        let mut m = vec![BondType::None; n * n];
        for b in &self.bonds {
            m[b.i * n + b.j] = b.kind;
            m[b.j * n + b.i] = b.kind;
        }
        m
    }

    /// All-pairs hop counts, `usize::MAX` between disconnected atoms.
    pub fn hop_distances(&self) -> Vec<usize> {
        let n = self.n_atoms();
        let adj = self.neighbors();
        let mut out = vec![usize::MAX; n * n];
        let mut queue = VecDeque::new();
        for src in 0..n {
            out[src * n + src] = 0;
            queue.push_back(src);
            while let Some(u) = queue.pop_front() {
                let du = out[src * n + u];
                for &v in &adj[u] {
                    if out[src * n + v] == usize::MAX {
                        out[src * n + v] = du + 1;
                        queue.push_back(v);
                    }
                }
            }
        }
        out
    }

    /// Connected components as sorted atom lists, ordered by smallest atom.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n_atoms();
        let adj = self.neighbors();
        let mut label = vec![usize::MAX; n];
        let mut comps = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut members = vec![start];
            label[start] = id;
            let mut k = 0;
            while k < members.len() {
                let u = members[k];
                for &v in &adj[u] {
                    if label[v] == usize::MAX {
                        label[v] = id;
                        members.push(v);
                    }
                }
                k += 1;
            }
            members.sort_unstable();
            comps.push(members);
        }
        comps
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    /// Relabels atoms: new atom `k` is old atom `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_atoms();
        if perm.len() != n {
            return Err(Error::LengthMismatch {
                what: "permutation",
                left: perm.len(),
                right: n,
            });
        }
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let atom_types = perm.iter().map(|&p| self.atom_types[p]).collect();
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                i: inverse[b.i],
                j: inverse[b.j],
                kind: b.kind,
            })
            .collect();
        Self::new(atom_types, bonds)
    }

    /// Graph Laplacian bilinear form `uᵀ (D - A) v`.
    pub fn laplacian_form<T: Real>(&self, u: &[T], v: &[T]) -> T {
        let mut acc = T::zero();
        for (i, &d) in self.degree.iter().enumerate() {
            acc += T::from_usize_lossy(d) * u[i] * v[i];
        }
        for b in &self.bonds {
            acc -= u[b.i] * v[b.j] + u[b.j] * v[b.i];
        }
        acc
    }
}

/// Harmonic bilinear form `uᵀ L v / σ_t²` with `L = D - A` the graph Laplacian.
pub fn harmonic_metric_apply<T: Real>(graph: &MoleculeGraph, u: &[T], v: &[T], sigma_t: T) -> T {
    graph.laplacian_form(u, v) / (sigma_t * sigma_t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> MoleculeGraph {
        let bonds = (1..n)
            .map(|i| Bond {
                i: i - 1,
                j: i,
                kind: BondType::Single,
            })
            .collect();
        MoleculeGraph::new(vec![0; n], bonds).unwrap()
    }

    #[test]
    fn two_node_path_form() {
        let g = path(2);
        let u = [1.0, -1.0];
        assert_eq!(harmonic_metric_apply(&g, &u, &u, 1.0), 4.0);
        assert_eq!(harmonic_metric_apply(&g, &u, &u, 2.0), 1.0);
    }

    #[test]
    fn constants_are_in_the_null_space() {
        let g = path(5);
        let c = [2.5f64; 5];
        let v = [0.1, -3.0, 2.0, 0.7, 1.0];
        assert_eq!(harmonic_metric_apply(&g, &c, &c, 0.7), 0.0);
        assert!(harmonic_metric_apply(&g, &c, &v, 0.7).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_bonds() {
        let self_loop = vec![Bond {
            i: 0,
            j: 0,
            kind: BondType::Single,
        }];
        assert!(MoleculeGraph::new(vec![0, 0], self_loop).is_err());
        let out_of_range = vec![Bond {
            i: 0,
            j: 2,
            kind: BondType::Single,
        }];
        assert!(MoleculeGraph::new(vec![0, 0], out_of_range).is_err());
        let dup = vec![
            Bond {
                i: 0,
                j: 1,
                kind: BondType::Single,
            },
            Bond {
                i: 1,
                j: 0,
                kind: BondType::Double,
            },
        ];
        assert!(MoleculeGraph::new(vec![0, 0], dup).is_err());
    }

    #[test]
    fn degrees_and_hops() {
        let g = path(4);
        assert_eq!(g.degree(), &[1, 2, 2, 1]);
        let hops = g.hop_distances();
        assert_eq!(hops[3], 3);
        assert_eq!(hops[4 + 2], 1);
    }

    #[test]
    fn components_of_disconnected_graph() {
        let g = MoleculeGraph::new(
            vec![0; 4],
            vec![Bond {
                i: 0,
                j: 2,
                kind: BondType::Double,
            }],
        )
        .unwrap();
        assert_eq!(g.components(), vec![vec![0, 2], vec![1], vec![3]]);
        assert!(!g.is_connected());
    }

    #[test]
    fn serde_round_trip_recomputes_degree() {
        let g = path(3);
        let json = serde_json::to_string(&g).unwrap();
        assert!(!json.contains("degree"));
        let back: MoleculeGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }
}
