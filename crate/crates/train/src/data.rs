//! Synthetic molecule datasets and their JSON file format.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "molecules": [
//!     {
//!       "id": "mol-000",
//!       "graph": { "atom_types": [0, 1, ...], "bonds": [[0, 1, "single"], ...] },
//!       "conformers": [[[x, y, z], ...], ...],
//!       "weights": [1.0, ...]
//!     }
//!   ]
//! }
//! ```

use std::ops::RangeInclusive;
use std::path::Path;

use avgflow_core::random::stream_rng;
use avgflow_core::{rmsd_kabsch, Bond, BondType, ConformerEnsemble, Coords, MoleculeGraph};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Result, TrainError};

pub const SCHEMA_VERSION: u32 = 1;

const BOND_LENGTH: f64 = 1.5;
const ANGLE_DISTANCE: f64 = 2.5;
const CLASH_DISTANCE: f64 = 3.0;
const MIN_CONFORMER_RMSD: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoleculeRecord {
    pub id: String,
    pub graph: MoleculeGraph,
    pub conformers: Vec<Coords<f64>>,
    pub weights: Vec<f64>,
}

impl MoleculeRecord {
    pub fn n_atoms(&self) -> usize {
        self.graph.n_atoms()
    }

    pub fn ensemble(&self) -> Result<ConformerEnsemble<f64>> {
        Ok(ConformerEnsemble::new(
            self.conformers.clone(),
            self.weights.clone(),
        )?)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_atoms();
        let bad = |msg: String| TrainError::Dataset(format!("molecule {}: {msg}", self.id));
        if self.conformers.is_empty() {
            return Err(bad("no conformers".into()));
        }
        if self.weights.len() != self.conformers.len() {
            return Err(bad(format!(
                "{} weights for {} conformers",
                self.weights.len(),
                self.conformers.len()
            )));
        }
        if let Some(c) = self.conformers.iter().find(|c| c.len() != n) {
            return Err(bad(format!("conformer with {} atoms, graph has {n}", c.len())));
        }
        self.ensemble().map_err(|e| bad(e.to_string()))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset {
    pub schema_version: u32,
    pub molecules: Vec<MoleculeRecord>,
}

impl Dataset {
    pub fn new(molecules: Vec<MoleculeRecord>) -> Result<Self> {
        let d = Self {
            schema_version: SCHEMA_VERSION,
            molecules,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.molecules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.molecules.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(TrainError::Dataset(format!(
                "schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.molecules.iter().try_for_each(MoleculeRecord::validate)
    }

    /// Parses, validates and centers conformers whose centroid is off by more
    /// than `1e-12`. Already centered files are left untouched, so
    /// load-save-load is byte-stable.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut d: Dataset =
            serde_json::from_str(text).map_err(|e| TrainError::Dataset(e.to_string()))?;
        d.validate()?;
        for c in d.molecules.iter_mut().flat_map(|m| m.conformers.iter_mut()) {
            if c.centroid().iter().any(|v| v.abs() > 1e-12) {
                c.center_in_place();
            }
        }
        Ok(d)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("dataset serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(io_err(path))
    }

    /// Training and validation indices. The validation share is
    /// `round(frac * len)`, at least one molecule when there are two or more.
    pub fn split(&self, frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut stream_rng(seed, "split"));
        let n_val = if n < 2 {
            0
        } else {
            ((frac * n as f64).round() as usize).clamp(1, n - 1)
        };
        let mut val = idx.split_off(n - n_val);
        idx.sort_unstable();
        val.sort_unstable();
        (idx, val)
    }
}

/// Random connected molecules with relaxed, torsionally distinct conformers.
pub fn gen_synthetic_dataset(
    n_molecules: usize,
    atoms: RangeInclusive<usize>,
    conformers: RangeInclusive<usize>,
    seed: u64,
) -> Result<Dataset> {
    if n_molecules == 0 {
        return Err(TrainError::Invalid("need at least one molecule".into()));
    }
    if atoms.is_empty() || *atoms.start() < 3 || *atoms.end() > 64 {
        return Err(TrainError::Invalid(format!(
            "atom range {atoms:?} must be nonempty within 3..=64"
        )));
    }
    if conformers.is_empty() || *conformers.start() == 0 || *conformers.end() > 32 {
        return Err(TrainError::Invalid(format!(
            "conformer range {conformers:?} must be nonempty within 1..=32"
        )));
    }
    let mut rng = stream_rng(seed, "dataset");
    let molecules = (0..n_molecules)
        .map(|k| {
            let n = rng.random_range(atoms.clone());
            let m = rng.random_range(conformers.clone());
            let id = format!("mol-{k:03}");
            // Some graphs (stars, small rings) relax back to one shape; redraw those.
            let mut last = None;
            for _ in 0..20 {
                match gen_molecule(id.clone(), n, m, &mut rng) {
                    Ok(mol) => return Ok(mol),
                    Err(e) => last = Some(e),
                }
            }
            Err(last.expect("at least one attempt"))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(molecules)
}

fn gen_molecule<R: Rng>(id: String, n: usize, n_conf: usize, rng: &mut R) -> Result<MoleculeRecord> {
    let graph = random_graph(n, rng)?;
    let hops = graph.hop_distances();
    let mut base = Coords::new(
        (0..n)
            .map(|_| std::array::from_fn(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)))
            .collect(),
    );
    relax(&mut base, &hops, 400);

    let mut confs: Vec<Coords<f64>> = Vec::with_capacity(n_conf);
    while confs.len() < n_conf {
        let mut accepted = false;
        for _ in 0..20 {
            let mut c = base.clone();
            perturb(&graph, &mut c, rng);
            relax(&mut c, &hops, 60);
            c.center_in_place();
            let distinct = confs
                .iter()
                .map(|o| rmsd_kabsch(o, &c))
                .collect::<avgflow_core::Result<Vec<_>>>()?
                .into_iter()
                .all(|d| d > MIN_CONFORMER_RMSD);
            if distinct && c.is_finite() {
                confs.push(c);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(TrainError::Dataset(format!(
                "{id}: could not generate {n_conf} distinct conformers"
            )));
        }
    }
    Ok(MoleculeRecord {
        id,
        graph,
        weights: vec![1.0; n_conf],
        conformers: confs,
    })
}

/// Random tree with valence at most 4, plus ring closures between atoms
/// four to six bonds apart.
fn random_graph<R: Rng>(n: usize, rng: &mut R) -> Result<MoleculeGraph> {
    let mut degree = vec![0usize; n];
    let mut bonds = Vec::with_capacity(n + 2);
    let bond_kind = |rng: &mut R| match rng.random_range(0..20) {
        0..=13 => BondType::Single,
        14..=16 => BondType::Double,
        17..=18 => BondType::Aromatic,
        _ => BondType::Triple,
    };
    for k in 1..n {
        let open: Vec<usize> = (0..k).filter(|&i| degree[i] < 4).collect();
        let parent = open[rng.random_range(0..open.len())];
        bonds.push(Bond {
            i: parent,
            j: k,
            kind: bond_kind(rng),
        });
        degree[parent] += 1;
        degree[k] += 1;
    }
    let rings = rng.random_range(0..=2usize);
    for _ in 0..rings {
        let g = MoleculeGraph::new(vec![0; n], bonds.clone())?;
        let hops = g.hop_distances();
        let candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| (4..=6).contains(&hops[i * n + j]) && degree[i] < 3 && degree[j] < 3)
            .collect();
        if candidates.is_empty() {
            break;
        }
        let (i, j) = candidates[rng.random_range(0..candidates.len())];
        bonds.push(Bond {
            i,
            j,
            kind: BondType::Single,
        });
        degree[i] += 1;
        degree[j] += 1;
    }
    let atom_types = degree
        .iter()
        .map(|&d| match d {
            1 => rng.random_range(0..6u8),
            2 => rng.random_range(0..3u8),
            _ => rng.random_range(0..2u8),
        })
        .collect();
    Ok(MoleculeGraph::new(atom_types, bonds)?)
}

/// Gradient descent on a stress energy: bonded atoms at 1.5, atoms two bonds
/// apart at 2.5, everything else pushed beyond 3.0.
fn relax(x: &mut Coords<f64>, hops: &[usize], iters: usize) {
    let n = x.len();
    let step = 0.05;
    for _ in 0..iters {
        let mut grad = vec![[0.0; 3]; n];
        let rows = x.rows();
        for i in 0..n {
            for j in i + 1..n {
                let d: [f64; 3] = std::array::from_fn(|k| rows[i][k] - rows[j][k]);
                let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-6);
                let dedr = match hops[i * n + j] {
                    1 => 4.0 * (r - BOND_LENGTH),
                    2 => 2.0 * (r - ANGLE_DISTANCE),
                    _ if r < CLASH_DISTANCE => 0.5 * (r - CLASH_DISTANCE),
                    _ => 0.0,
                };
                for k in 0..3 {
                    grad[i][k] += dedr * d[k] / r;
                    grad[j][k] -= dedr * d[k] / r;
                }
            }
        }
        for (row, g) in x.rows_mut().iter_mut().zip(&grad) {
            for k in 0..3 {
                row[k] -= step * g[k];
            }
        }
    }
}

/// One to three rigid rotations about rotatable bonds; molecules without one
/// get Gaussian jitter instead.
fn perturb<R: Rng>(graph: &MoleculeGraph, x: &mut Coords<f64>, rng: &mut R) {
    let rotatable = rotatable_bonds(graph);
    if rotatable.is_empty() {
        for row in x.rows_mut() {
            for v in row.iter_mut() {
                *v += 0.4 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        return;
    }
    let moves = rng.random_range(1..=3);
    for _ in 0..moves {
        let (i, j, side) = &rotatable[rng.random_range(0..rotatable.len())];
        let angle = rng.random_range(std::f64::consts::FRAC_PI_3..std::f64::consts::PI)
            * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let rows = x.rows_mut();
        let origin = rows[*i];
        let axis: [f64; 3] = std::array::from_fn(|k| rows[*j][k] - origin[k]);
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if norm < 1e-9 {
            continue;
        }
        let r = avgflow_core::Mat3::from_axis_angle(axis.map(|a| a / norm), angle);
        for &a in side {
            let p: [f64; 3] = std::array::from_fn(|k| rows[a][k] - origin[k]);
            let q = r.mul_vec(p);
            rows[a] = std::array::from_fn(|k| q[k] + origin[k]);
        }
    }
}

/// Bridges `(i, j)` whose removal leaves at least two atoms on each side,
/// with the atoms on `j`'s side.
fn rotatable_bonds(graph: &MoleculeGraph) -> Vec<(usize, usize, Vec<usize>)> {
    let n = graph.n_atoms();
    let adj = graph.neighbors();
    let mut out = Vec::new();
    for b in graph.bonds() {
        let mut seen = vec![false; n];
        seen[b.j] = true;
        let mut stack = vec![b.j];
        let mut side = vec![b.j];
        let mut bridge = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if u == b.j && v == b.i {
                    continue;
                }
                if v == b.i {
                    bridge = false;
                }
                if !seen[v] {
                    seen[v] = true;
                    side.push(v);
                    stack.push(v);
                }
            }
        }
        if bridge && side.len() >= 2 && n - side.len() >= 2 {
            side.sort_unstable();
            out.push((b.i, b.j, side));
        }
    }
    out
}
