use avgflow_core::oracle::{compare_instance, oracle_instances, random_tree};
use avgflow_core::random::{standard_normal_coords, stream_rng, uniform_rotation};
use avgflow_core::{
    avg_flow_target, harmonic_metric_apply, kabsch_rotation, mc_avg_flow, ConformerEnsemble,
    Coords, FlowQuery, Mat3, MetricSpec,
};

/// Seed of the fixed comparison suite.
const SUITE_SEED: u64 = 2024;

#[test]
fn closed_form_agrees_with_monte_carlo_suite() {
    let instances = oracle_instances(20, SUITE_SEED).unwrap();
    let mut failures = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        let c = compare_instance(inst, 200_000, 1000 + i as u64, 1.0).unwrap();
        println!(
            "{:<40} max |z| = {:5.2}  max dev = {:.2e}  ess = {:.0}",
            c.label, c.max_z, c.max_abs_dev, c.effective_samples
        );
        if !c.passes(3.0) {
            failures.push(c.label.clone());
        }
    }
    assert!(
        failures.is_empty(),
        "beyond 3 standard errors: {failures:?}"
    );
}

#[test]
fn tampered_closed_form_is_caught() {
    let inst = &oracle_instances(4, SUITE_SEED).unwrap()[0];
    let c = compare_instance(inst, 20_000, 5, 1.25).unwrap();
    assert!(!c.passes(3.0), "max z {}", c.max_z);
}

#[test]
fn monte_carlo_error_shrinks_like_inverse_root() {
    let inst = &oracle_instances(2, SUITE_SEED).unwrap()[0];
    let a = mc_avg_flow(&inst.query, &inst.ensemble, &inst.metric, 50_000, 3).unwrap();
    let b = mc_avg_flow(&inst.query, &inst.ensemble, &inst.metric, 100_000, 4).unwrap();
    let mean_se = |c: &Coords<f64>| c.rows().iter().flatten().sum::<f64>();
    let ratio = mean_se(&a.std_err) / mean_se(&b.std_err);
    assert!((ratio - 2f64.sqrt()).abs() < 0.15, "ratio {ratio}");
}

#[test]
fn monte_carlo_at_zero_query_is_zero_within_error() {
    let mut rng = stream_rng(1, "zero");
    let ens = ConformerEnsemble::<f64>::uniform(vec![standard_normal_coords(5, &mut rng)]).unwrap();
    let q = FlowQuery::new(0.5, Coords::zeros(5)).unwrap();
    let mc = mc_avg_flow(&q, &ens, &MetricSpec::euclidean(), 20_000, 2).unwrap();
    for (m, s) in mc.mean.rows().iter().zip(mc.std_err.rows()) {
        for p in 0..3 {
            assert!(m[p].abs() < 4.0 * s[p]);
        }
    }
}

#[test]
fn field_vanishes_at_origin() {
    let mut rng = stream_rng(2, "origin");
    for k in 1..=3 {
        let confs = (0..k)
            .map(|_| standard_normal_coords(7, &mut rng))
            .collect();
        let ens = ConformerEnsemble::uniform(confs).unwrap();
        for t in [0.1, 0.5, 0.9] {
            let q = FlowQuery::new(t, Coords::zeros(7)).unwrap();
            let u = avg_flow_target(&q, &ens, &MetricSpec::euclidean()).unwrap();
            assert!(u.max_abs_diff(&Coords::zeros(7)) < 1e-10);
        }
    }
}

#[test]
fn field_is_rotation_equivariant() {
    let mut rng = stream_rng(3, "equivariance");
    for trial in 0..20 {
        let n = 4 + trial % 5;
        let confs = (0..1 + trial % 3)
            .map(|_| standard_normal_coords(n, &mut rng))
            .collect();
        let ens = ConformerEnsemble::uniform(confs).unwrap();
        let metric = if trial % 2 == 0 {
            MetricSpec::euclidean()
        } else {
            MetricSpec::harmonic(random_tree(n, &mut rng))
        };
        let x: Coords<f64> = standard_normal_coords(n, &mut rng).scale(0.5);
        let q: Mat3<f64> = uniform_rotation(&mut rng);
        let t = [0.2, 0.5, 0.8][trial % 3];
        let u = avg_flow_target(&FlowQuery::new(t, x.clone()).unwrap(), &ens, &metric).unwrap();
        let ur = avg_flow_target(&FlowQuery::new(t, x.rotate(&q)).unwrap(), &ens, &metric).unwrap();
        assert!(ur.max_abs_diff(&u.rotate(&q)) < 1e-8, "trial {trial}");
    }
}

#[test]
fn late_time_posterior_concentrates_on_kabsch_alignment() {
    let mut rng = stream_rng(4, "late");
    for _ in 0..5 {
        let target = standard_normal_coords::<f64, _>(6, &mut rng).centered();
        let ens = ConformerEnsemble::uniform(vec![target.clone()]).unwrap();
        let x = standard_normal_coords::<f64, _>(6, &mut rng).centered();
        let t = 0.999;
        let u = avg_flow_target(
            &FlowQuery::new(t, x.clone()).unwrap(),
            &ens,
            &MetricSpec::euclidean(),
        )
        .unwrap();
        let mean_target = x.lincomb(1.0, &u, 1.0 - t);
        let aligned = target.rotate(&kabsch_rotation(&x, &target).unwrap());
        assert!(mean_target.max_abs_diff(&aligned) < 1e-4);
    }
}

#[test]
fn harmonic_form_matches_dense_laplacian() {
    let mut rng = stream_rng(5, "dense");
    for n in 2..12 {
        let g = random_tree(n, &mut rng);
        let mut lap = vec![0.0; n * n];
        for (i, &d) in g.degree().iter().enumerate() {
            lap[i * n + i] = d as f64;
        }
        for b in g.bonds() {
            lap[b.i * n + b.j] -= 1.0;
            lap[b.j * n + b.i] -= 1.0;
        }
        let u: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).sin()).collect();
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7 + 0.2).cos()).collect();
        let dense: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| u[i] * lap[i * n + j] * v[j])
            .sum();
        let sigma = 0.6;
        let got = harmonic_metric_apply(&g, &u, &v, sigma);
        assert!((got - dense / (sigma * sigma)).abs() < 1e-12);
    }
}
