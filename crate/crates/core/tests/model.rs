use std::time::Instant;

use sbamdt::io::{read_model, write_model};
use sbamdt::synthdata::{assemble, SyntheticSpec};
use sbamdt::{fit, Ablation, FitConfig, Variant};

fn smoke_config(seed: u64) -> FitConfig {
    FitConfig {
        n_trees: 2,
        n_iter: 100,
        burn_in: 50,
        thin: 5,
        seed,
        ..FitConfig::default()
    }
}

#[test]
fn smoke_fit_on_ushape_is_fast() {
    let (train, test) = assemble(&SyntheticSpec::ushape(500, 50, 1)).unwrap();
    let start = Instant::now();
    let model = fit(&train.data, &smoke_config(3)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 10.0, "{secs}");
    assert_eq!(model.n_snapshots(), 10);
    let pred = model
        .predict(&test.data.structured, &test.data.unstructured)
        .unwrap();
    assert_eq!(pred.n_points, 50);
    assert!(pred.f.iter().all(|v| v.is_finite()));
    let stats = model.total_stats();
    assert!(stats.grow_proposed + stats.prune_proposed + stats.change_proposed == 200);
}

#[test]
fn saved_model_predicts_identically() {
    let (train, test) = assemble(&SyntheticSpec::square(120, 30, 2)).unwrap();
    for variant in [Variant::Sk, Variant::S2] {
        for ablation in [Ablation::Full, Ablation::HardOnly, Ablation::NoMultivariate] {
            let cfg = FitConfig {
                variant,
                ablation,
                n_trees: 3,
                n_iter: 60,
                burn_in: 30,
                thin: 3,
                n_chains: 2,
                ..FitConfig::default()
            };
            let model = fit(&train.data, &cfg).unwrap();
            let dir = tempfile::tempdir().unwrap();
            write_model(dir.path(), &model).unwrap();
            let back = read_model(dir.path()).unwrap();
            assert_eq!(back.config, model.config);
            assert_eq!(back.n_snapshots(), model.n_snapshots());
            let a = model
                .predict(&test.data.structured, &test.data.unstructured)
                .unwrap();
            let b = back
                .predict(&test.data.structured, &test.data.unstructured)
                .unwrap();
            assert_eq!(a, b);
            let dir2 = tempfile::tempdir().unwrap();
            write_model(dir2.path(), &back).unwrap();
            for f in ["model.json", "snapshots.ndjson"] {
                assert_eq!(
                    std::fs::read(dir.path().join(f)).unwrap(),
                    std::fs::read(dir2.path().join(f)).unwrap()
                );
            }
        }
    }
}

#[test]
fn hard_only_model_has_only_hard_decisions() {
    let (train, _) = assemble(&SyntheticSpec::square(100, 10, 4)).unwrap();
    let cfg = FitConfig {
        ablation: Ablation::HardOnly,
        n_trees: 4,
        n_iter: 80,
        burn_in: 40,
        thin: 2,
        ..FitConfig::default()
    };
    let model = fit(&train.data, &cfg).unwrap();
    assert!(model.hyper.hard_only);
    for s in model.snapshots() {
        assert_eq!(s.p_a[0], 1.0);
        for t in &s.trees {
            assert!(t.decisions().all(|d| d == sbamdt::DecisionType::Hard));
        }
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let (train, _) = assemble(&SyntheticSpec::square(30, 10, 4)).unwrap();
    let bad = [
        FitConfig {
            n_trees: 0,
            ..smoke_config(1)
        },
        FitConfig {
            burn_in: 200,
            ..smoke_config(1)
        },
        FitConfig {
            thin: 0,
            ..smoke_config(1)
        },
        FitConfig {
            n_knots: Some(1),
            ..smoke_config(1)
        },
        FitConfig {
            gamma: 1.5,
            ..smoke_config(1)
        },
    ];
    for cfg in bad {
        let e = fit(&train.data, &cfg).unwrap_err();
        assert!(e.is_validation(), "{e}");
    }
}
