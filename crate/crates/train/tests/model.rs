use avgflow_core::random::{standard_normal_coords, stream_rng, uniform_rotation};
use avgflow_core::{Bond, BondType, Coords, Mat3, MoleculeGraph};
use avgflow_train::checkpoint::{Checkpoint, CheckpointMeta, FORMAT_VERSION};
use avgflow_train::features::{ATOM_TYPES, DEGREE_BINS};
use avgflow_train::model::Layout;
use avgflow_train::{
    featurize, gen_synthetic_dataset, laplacian_pe, load_checkpoint, load_checkpoint_expecting,
    save_checkpoint, ModelConfig, TrainError, VectorFieldNet,
};
use rand::Rng;

fn small_config(width: usize) -> ModelConfig {
    ModelConfig {
        hidden_width: width,
        n_layers: 3,
        time_embed_width: 4,
        pe_width: 4,
        use_pair_bias: true,
    }
}

/// Initialized net with every parameter, heads included, randomized.
fn random_net(config: ModelConfig, seed: u64) -> VectorFieldNet {
    let mut net = VectorFieldNet::init(config, seed).unwrap();
    let mut rng = stream_rng(seed, "perturb");
    for p in &mut net.params {
        *p += 0.2 * rng.random_range(-1.0..1.0);
    }
    net
}

fn molecule(seed: u64) -> (MoleculeGraph, Coords<f64>) {
    let d = gen_synthetic_dataset(1, 6..=7, 1..=1, seed).unwrap();
    let m = &d.molecules[0];
    let mut rng = stream_rng(seed, "noise");
    let x = m.conformers[0].lincomb(0.7, &standard_normal_coords(m.n_atoms(), &mut rng), 0.5);
    (m.graph.clone(), x.centered())
}

#[test]
fn zero_parameters_give_zero_field() {
    let (g, x) = molecule(1);
    let c = ModelConfig::default();
    let f = featurize(&g, c.pe_width).unwrap();
    let net = VectorFieldNet::zeros(c).unwrap();
    assert_eq!(net.forward(&f, &x, 0.3).unwrap(), Coords::zeros(g.n_atoms()));
    let net = VectorFieldNet::init(c, 9).unwrap();
    assert_eq!(net.forward(&f, &x, 0.3).unwrap(), Coords::zeros(g.n_atoms()));
}

#[test]
fn backward_matches_finite_differences() {
    for (width, seed) in [(8, 11), (16, 12)] {
        let config = small_config(width);
        let net = random_net(config, seed);
        let (g, x) = molecule(seed);
        let f = featurize(&g, config.pe_width).unwrap();
        let t = 0.37;
        let mut rng = stream_rng(seed, "cotangent");
        let dv = standard_normal_coords::<f64, _>(g.n_atoms(), &mut rng);
        let objective = |n: &VectorFieldNet| n.forward(&f, &x, t).unwrap().dot(&dv);

        let (_, cache) = net.forward_cached(&f, &x, t).unwrap();
        let mut grad = vec![0.0; net.params.len()];
        net.backward(&cache, &dv, &mut grad);

        let lay = Layout::new(&config);
        let mut names = vec![(lay.in_w, "input weight"), (lay.in_b, "input bias")];
        for ll in &lay.layers {
            names.extend([(ll.wa, "pair Wa"), (ll.wb, "pair Wb"), (ll.we, "edge We"), (ll.be, "edge bias")]);
            if let Some((a, b, c)) = ll.update {
                names.extend([(a, "update Wh1"), (b, "update Wh2"), (c, "update bias")]);
            }
        }
        names.extend([(lay.radial_w, "radial head"), (lay.chiral_w, "chiral head")]);

        let h = 1e-6;
        // Entries far below the largest one are dominated by FD round-off
        // (about 1e-16 |objective| / h), so the relative error is floored there.
        let floor = 1e-6 * grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let mut worst = 0.0f64;
        let mut probe = net.clone();
        for k in 0..net.params.len() {
            let orig = probe.params[k];
            probe.params[k] = orig + h;
            let up = objective(&probe);
            probe.params[k] = orig - h;
            let down = objective(&probe);
            probe.params[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let err = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(floor);
            let tensor = names.iter().rev().find(|(o, _)| *o <= k).unwrap().1;
            assert!(
                err < 1e-4,
                "width {width}, parameter {k} ({tensor}): analytic {} vs fd {fd}",
                grad[k]
            );
            worst = worst.max(err);
        }
        println!("width {width}: worst relative error {worst:.2e} over {} parameters", net.params.len());
    }
}

#[test]
fn field_is_permutation_equivariant() {
    let config = small_config(8);
    let net = random_net(config, 21);
    let (g, x) = molecule(21);
    let n = g.n_atoms();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.reverse();
    perm.swap(0, 2);
    let gp = g.permuted(&perm).unwrap();
    let xp = x.permuted(&perm);
    let v = net.forward(&featurize(&g, 4).unwrap(), &x, 0.6).unwrap();
    let vp = net.forward(&featurize(&gp, 4).unwrap(), &xp, 0.6).unwrap();
    // Eigenvector signs are fixed by the first atom in node order, so a
    // relabeling may flip PE columns. Rows match up to those flips.
    let pe = laplacian_pe(&g, 4);
    let pep = laplacian_pe(&gp, 4);
    let mut flipped = false;
    for c in 0..4 {
        let same = (0..n).all(|k| (pep[k * 4 + c] - pe[perm[k] * 4 + c]).abs() < 1e-9);
        let opposite = (0..n).all(|k| (pep[k * 4 + c] + pe[perm[k] * 4 + c]).abs() < 1e-9);
        assert!(same || opposite, "PE column {c}");
        flipped |= !same;
    }
    if !flipped {
        assert!(vp.max_abs_diff(&v.permuted(&perm)) < 1e-12);
    }

    // With the PE inputs disconnected the field is exactly equivariant.
    let mut zero_pe = net.clone();
    let lay = Layout::new(&config);
    let dw = config.input_width();
    for r in 0..config.hidden_width {
        for c in ATOM_TYPES + DEGREE_BINS..ATOM_TYPES + DEGREE_BINS + 4 {
            zero_pe.params[lay.in_w + r * dw + c] = 0.0;
        }
    }
    let v = zero_pe.forward(&featurize(&g, 4).unwrap(), &x, 0.6).unwrap();
    let vp = zero_pe.forward(&featurize(&gp, 4).unwrap(), &xp, 0.6).unwrap();
    assert!(vp.max_abs_diff(&v.permuted(&perm)) < 1e-12);
}

#[test]
fn field_is_rotation_equivariant() {
    let config = small_config(8);
    let net = random_net(config, 31);
    let (g, x) = molecule(31);
    let f = featurize(&g, 4).unwrap();
    let r: Mat3<f64> = uniform_rotation(&mut stream_rng(31, "rot"));
    let v = net.forward(&f, &x, 0.2).unwrap();
    let vr = net.forward(&f, &x.rotate(&r), 0.2).unwrap();
    assert!(vr.max_abs_diff(&v.rotate(&r)) < 1e-12);
    // Mirror images are not mapped to mirror images.
    let mirror = Mat3::diag([1.0, 1.0, -1.0]);
    let vm = net.forward(&f, &x.rotate(&mirror), 0.2).unwrap();
    assert!(vm.max_abs_diff(&v.rotate(&mirror)) > 1e-6);
}

#[test]
fn path_of_three_pe_matches_closed_form() {
    let bonds = vec![
        Bond { i: 0, j: 1, kind: BondType::Single },
        Bond { i: 1, j: 2, kind: BondType::Single },
    ];
    let g = MoleculeGraph::new(vec![0; 3], bonds).unwrap();
    // Normalized Laplacian spectrum {0, 1, 2}; eigenvectors (1, 0, -1)/√2 and (1, -√2, 1)/2.
    let pe = laplacian_pe(&g, 3);
    let s = 0.5f64.sqrt();
    let expected = [s, 0.5, 0.0, 0.0, -s, 0.0, -s, 0.5, 0.0];
    for (a, b) in pe.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12, "{pe:?}");
    }
}

#[test]
fn pe_columns_are_eigenvectors_of_dense_laplacian() {
    let d = gen_synthetic_dataset(6, 5..=12, 1..=1, 41).unwrap();
    for m in &d.molecules {
        let g = &m.graph;
        let n = g.n_atoms();
        let w = 4;
        let pe = laplacian_pe(g, w);
        let deg = g.degree();
        let mut lap = vec![0.0; n * n];
        for i in 0..n {
            lap[i * n + i] = 1.0;
        }
        for b in g.bonds() {
            let v = 1.0 / ((deg[b.i] * deg[b.j]) as f64).sqrt();
            lap[b.i * n + b.j] -= v;
            lap[b.j * n + b.i] -= v;
        }
        let mut prev = 1e-9;
        for c in 0..w.min(n - 1) {
            let v: Vec<f64> = (0..n).map(|i| pe[i * w + c]).collect();
            let lv: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| lap[i * n + j] * v[j]).sum())
                .collect();
            let lambda: f64 = v.iter().zip(&lv).map(|(a, b)| a * b).sum();
            let resid: f64 = v
                .iter()
                .zip(&lv)
                .map(|(a, b)| (b - lambda * a).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(resid < 1e-10);
            assert!((v.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(lambda >= prev - 1e-10, "eigenvalues out of order");
            prev = lambda;
            let first = v.iter().find(|a| a.abs() > 1e-9).unwrap();
            assert!(*first > 0.0);
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    let config = small_config(8);
    let ckpt = Checkpoint {
        net: random_net(config, 51),
        meta: CheckpointMeta {
            stage: "stage1".into(),
            weights: "ema".into(),
            seed: 51,
            epochs: 3,
            parent: None,
        },
    };
    save_checkpoint(&ckpt, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ckpt);
    let (g, x) = molecule(51);
    let f = featurize(&g, 4).unwrap();
    assert_eq!(
        back.net.forward(&f, &x, 0.5).unwrap(),
        ckpt.net.forward(&f, &x, 0.5).unwrap()
    );
    assert_eq!(back.to_bytes().unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let config = small_config(8);
    let ckpt = Checkpoint {
        net: random_net(config, 61),
        meta: CheckpointMeta::default(),
    };
    let bytes = ckpt.to_bytes().unwrap();
    for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    let mut flipped = bytes.clone();
    flipped[bytes.len() / 2] ^= 1;
    assert!(Checkpoint::from_bytes(&flipped).is_err());
    let mut version = bytes.clone();
    version[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    let err = Checkpoint::from_bytes(&version).unwrap_err().to_string();
    assert!(err.contains("version"), "{err}");
}

#[test]
fn larger_config_does_not_load_into_smaller() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.ckpt");
    let big = Checkpoint {
        net: VectorFieldNet::init(small_config(16), 1).unwrap(),
        meta: CheckpointMeta::default(),
    };
    save_checkpoint(&big, &path).unwrap();
    let err = load_checkpoint_expecting(&path, &small_config(8)).unwrap_err();
    assert!(matches!(err, TrainError::ConfigMismatch { .. }));
    assert!(load_checkpoint_expecting(&path, &small_config(16)).is_ok());
}
