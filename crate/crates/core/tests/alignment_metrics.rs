use avgflow_core::random::{standard_normal_coords, stream_rng, uniform_rotation};
use avgflow_core::testkit::{grid_min_rmsd, super_fibonacci_rotations};
use avgflow_core::{coverage_amr, kabsch_rotation, rmsd_kabsch, Coords, Mat3};

fn cloud(n: usize, rng: &mut impl rand::Rng) -> Coords<f64> {
    standard_normal_coords::<f64, _>(n, rng).centered()
}

fn shifted(x: &Coords<f64>, d: [f64; 3]) -> Coords<f64> {
    Coords::new(
        x.rows()
            .iter()
            .map(|r| [r[0] + d[0], r[1] + d[1], r[2] + d[2]])
            .collect(),
    )
}

#[test]
fn kabsch_beats_rotation_grid() {
    let grid = super_fibonacci_rotations(100_000);
    let mut rng = stream_rng(21, "grid-pairs");
    for _ in 0..50 {
        let p = cloud(6, &mut rng);
        // Partially aligned pairs make the minimum sharp.
        let r: Mat3<f64> = uniform_rotation(&mut rng);
        let q = p.rotate(&r).lincomb(1.0, &cloud(6, &mut rng), 0.3);
        let kabsch = rmsd_kabsch(&p, &q).unwrap();
        let best = grid_min_rmsd(&p, &q, &grid);
        assert!(kabsch <= best + 1e-12, "{kabsch} > {best}");
        let rot = kabsch_rotation(&p, &q.centered()).unwrap();
        let direct = ((&p - &q.centered().rotate(&rot)).norm_sq() / 6.0).sqrt();
        assert!((direct - kabsch).abs() < 1e-12);
    }
}

#[test]
fn coverage_hand_cases() {
    let mut rng = stream_rng(22, "cov");
    let c = cloud(5, &mut rng);
    let far = c.lincomb(1.0, &cloud(5, &mut rng), 1.5);
    let d = rmsd_kabsch(&far, &c).unwrap();
    let delta = 0.5;
    assert!(d > delta);

    let r = coverage_amr(&[c.clone(), far.clone()], std::slice::from_ref(&c), delta).unwrap();
    assert_eq!(r.cov_p, 50.0);
    assert!((r.amr_p - d / 2.0).abs() < 1e-12);
    assert_eq!(r.cov_r, 100.0);
    assert!(r.amr_r.abs() < 1e-12);
    assert_eq!((r.k, r.l), (2, 1));

    let same = coverage_amr(&[c.clone(), far.clone()], &[c.clone(), far.clone()], delta).unwrap();
    assert_eq!((same.cov_p, same.cov_r), (100.0, 100.0));
    assert!(same.amr_p < 1e-12 && same.amr_r < 1e-12);

    let exact = coverage_amr(std::slice::from_ref(&far), std::slice::from_ref(&c), 0.0).unwrap();
    assert_eq!((exact.cov_p, exact.cov_r), (0.0, 0.0));
}

#[test]
fn coverage_ignores_rigid_motions() {
    let mut rng = stream_rng(23, "rigid");
    let truth: Vec<_> = (0..3).map(|_| cloud(6, &mut rng)).collect();
    let generated: Vec<_> = (0..6).map(|_| cloud(6, &mut rng).scale(0.8)).collect();
    let base = coverage_amr(&generated, &truth, 1.0).unwrap();
    let moved: Vec<_> = generated
        .iter()
        .map(|g| {
            let r: Mat3<f64> = uniform_rotation(&mut rng);
            shifted(&g.rotate(&r), [1.0, -2.0, 0.5])
        })
        .collect();
    let other = coverage_amr(&moved, &truth, 1.0).unwrap();
    assert_eq!(base.cov_p, other.cov_p);
    assert_eq!(base.cov_r, other.cov_r);
    assert!((base.amr_p - other.amr_p).abs() < 1e-10);
    assert!((base.amr_r - other.amr_r).abs() < 1e-10);
}

#[test]
fn adding_truth_never_hurts_precision() {
    let mut rng = stream_rng(24, "monotone");
    let generated: Vec<_> = (0..8).map(|_| cloud(5, &mut rng)).collect();
    let mut truth = vec![cloud(5, &mut rng)];
    let mut prev = coverage_amr(&generated, &truth, 1.0).unwrap();
    for _ in 0..6 {
        truth.push(cloud(5, &mut rng));
        let next = coverage_amr(&generated, &truth, 1.0).unwrap();
        assert!(next.amr_p <= prev.amr_p);
        assert!(next.cov_p >= prev.cov_p);
        prev = next;
    }
}
