use fedmsc::dataset::{load_dataset, synthesize, write_dataset, DatasetManifest, SynthesisSpec};
use fedmsc::federation::{run_federation, run_federation_from, FederationConfig};

fn spec(seed: u64) -> SynthesisSpec {
    SynthesisSpec {
        n: 45,
        c: 3,
        view_dims: vec![8, 12, 6],
        cluster_separation: 8.0,
        noise_sigma: 0.5,
        latent_dim: 6,
        seed,
    }
}

#[test]
fn saved_dataset_runs_like_the_original() {
    let ds = synthesize(&spec(4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(&ds, dir.path()).unwrap();
    let loaded = load_dataset(&DatasetManifest::read(&manifest).unwrap()).unwrap();
    assert_eq!(loaded.labels(), ds.labels());

    let cfg = FederationConfig {
        max_rounds: 4,
        ..Default::default()
    };
    let a = run_federation(&ds, &cfg).unwrap();
    let b = run_federation(&loaded, &cfg).unwrap();
    assert_eq!(a.labels, b.labels);
    for (x, y) in a.traces.iter().zip(&b.traces) {
        assert!((x.full_objective - y.full_objective).abs() <= 1e-9 * x.full_objective.abs());
    }
}

#[test]
fn final_local_states_are_feasible() {
    let ds = synthesize(&spec(5)).unwrap();
    let r = run_federation(
        &ds,
        &FederationConfig {
            max_rounds: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let n = ds.n_samples();
    assert_eq!(r.state.nodes.len(), ds.n_views());
    for s in &r.state.nodes {
        assert!(s.c.iter().chain(s.u.iter()).all(|&v| v >= 0.0));
        for j in 0..n {
            assert_eq!(s.c[(j, j)], 0.0);
        }
    }
    assert!(r.labels.iter().all(|&l| l < 3));
    assert_eq!(r.f.shape(), (n, 3));
}

#[test]
fn resuming_a_converged_run_stops_after_one_round() {
    let ds = synthesize(&spec(6)).unwrap();
    let cfg = FederationConfig::default();
    let first = run_federation(&ds, &cfg).unwrap();
    assert!(first.converged, "default run did not converge");
    let again = run_federation_from(&ds, &cfg, Some(&first.state)).unwrap();
    assert_eq!(again.traces.len(), 1);
    assert!(again.converged);
    assert_eq!(
        again.state.rounds_completed,
        first.state.rounds_completed + 1
    );
    let prev = first.traces.last().unwrap().full_objective;
    let next = again.traces[0].full_objective;
    assert!((next - prev).abs() <= cfg.tol * prev.abs());
}

#[test]
fn resume_with_no_state_matches_a_fresh_run() {
    let ds = synthesize(&spec(7)).unwrap();
    let cfg = FederationConfig {
        max_rounds: 2,
        ..Default::default()
    };
    let a = run_federation(&ds, &cfg).unwrap();
    let b = run_federation_from(&ds, &cfg, None).unwrap();
    assert_eq!(a.traces, b.traces);
}
