use avgflow_core::rmsd_kabsch;
use avgflow_train::{gen_synthetic_dataset, Dataset, TrainConfig};

#[test]
fn generation_is_byte_stable_per_seed() {
    let a = gen_synthetic_dataset(6, 5..=12, 1..=4, 21).unwrap().to_json();
    let b = gen_synthetic_dataset(6, 5..=12, 1..=4, 21).unwrap().to_json();
    let c = gen_synthetic_dataset(6, 5..=12, 1..=4, 22).unwrap().to_json();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn generator_contract() {
    let d = gen_synthetic_dataset(32, 5..=16, 1..=4, 7).unwrap();
    assert_eq!(d.len(), 32);
    for m in &d.molecules {
        assert!((5..=16).contains(&m.n_atoms()));
        assert!((1..=4).contains(&m.conformers.len()));
        assert!(m.graph.is_connected(), "{} is disconnected", m.id);
        for c in &m.conformers {
            assert!(c.centroid().iter().all(|v| v.abs() < 1e-12));
        }
        for i in 0..m.conformers.len() {
            for j in 0..i {
                let r = rmsd_kabsch(&m.conformers[i], &m.conformers[j]).unwrap();
                assert!(r > 0.1, "{}: conformers {i},{j} only {r:.3} apart", m.id);
            }
        }
    }
}

#[test]
fn load_save_load_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.json");
    let p2 = dir.path().join("b.json");
    gen_synthetic_dataset(5, 5..=9, 1..=3, 3).unwrap().save(&p1).unwrap();
    let d = Dataset::load(&p1).unwrap();
    d.save(&p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert_eq!(Dataset::load(&p2).unwrap(), d);
}

#[test]
fn loading_centers_conformers() {
    let d = gen_synthetic_dataset(2, 5..=6, 2..=2, 4).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&d.to_json()).unwrap();
    let first = &mut v["molecules"][0]["conformers"][0];
    for row in first.as_array_mut().unwrap() {
        row[0] = (row[0].as_f64().unwrap() + 3.0).into();
    }
    let loaded = Dataset::from_json(&v.to_string()).unwrap();
    assert!(loaded.molecules[0].conformers[0].centroid().iter().all(|c| c.abs() < 1e-12));
}

#[test]
fn rejects_bad_inputs() {
    assert!(gen_synthetic_dataset(3, 2..=5, 1..=2, 0).is_err());
    assert!(gen_synthetic_dataset(3, 6..=5, 1..=2, 0).is_err());
    assert!(gen_synthetic_dataset(3, 5..=6, 0..=2, 0).is_err());
    assert!(gen_synthetic_dataset(0, 5..=6, 1..=2, 0).is_err());

    let d = gen_synthetic_dataset(1, 5..=5, 1..=1, 0).unwrap();
    let bumped = d.to_json().replacen("\"schema_version\": 1", "\"schema_version\": 9", 1);
    assert!(Dataset::from_json(&bumped).is_err());
    assert!(Dataset::from_json("{").is_err());
}

#[test]
fn config_round_trips_through_toml() {
    let text = r#"
objective = "condot"
epochs = 3
seed = 9

[schedule]
kind = "piecewise"
boundaries = [10]
values = [1e-3, 1e-4]

[t_sampler]
kind = "exponential"
lambda = -1.2
"#;
    let c = TrainConfig::from_toml(text).unwrap();
    assert_eq!(c.epochs, 3);
    assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
    assert!(TrainConfig::from_toml("epochs = 0").is_err());
    assert!(TrainConfig::from_toml("unknown_key = 1").is_err());
}
