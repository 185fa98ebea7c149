use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fedmsc::dataset::{load_dataset, synthesize, DatasetManifest, SynthesisSpec};
use serde_json::Value;
use tempfile::TempDir;

fn fedmsc(args: &[&str]) -> Output {
    fedmsc_with_env(args, &[])
}

fn fedmsc_with_env(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fedmsc"));
    cmd.args(args).env_remove("FEDMSC_OUTPUT_ROOT");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Small, well-separated synthetic config that runs in well under a second.
fn write_config(dir: &Path, seeds: &[u64]) -> PathBuf {
    let path = dir.join("exp.toml");
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    fs::write(
        &path,
        format!(
            "seeds = [{}]\nknn_k = 4\nmax_rounds = 3\n\n[dataset.synthetic]\nn = 24\nc = 2\nview_dims = [5, 7]\ncluster_separation = 8.0\nnoise_sigma = 0.3\n",
            seeds.join(", ")
        ),
    )
    .unwrap();
    path
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_summary_traces_and_labels() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &[0, 1]);
    let out = tmp.path().join("out");
    let res = fedmsc(&["run", "-c", path_str(&cfg), "-o", path_str(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));

    let summary = read_json(out.join("summary.json"));
    assert_eq!(summary["runs"], 2);
    assert_eq!(summary["metrics"]["runs"], 2);
    assert!(summary["metrics"]["acc"]["std"].is_number());
    for seed in [0, 1] {
        let trace = fs::read_to_string(out.join(format!("trace_seed_{seed}.jsonl"))).unwrap();
        let first: Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
        assert_eq!(first["round"], 0);
        assert_eq!(first["theta"].as_array().unwrap().len(), 2);
        let labels = fs::read_to_string(out.join(format!("labels_seed_{seed}.csv"))).unwrap();
        assert_eq!(labels.lines().count(), 24);
    }
    assert!(out.join("config.toml").is_file());
    assert!(out.join("timing.jsonl").is_file());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &[3]);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(fedmsc(&["run", "-c", path_str(&cfg), "-o", path_str(&a)])
        .status
        .success());
    assert!(fedmsc(&[
        "run",
        "-c",
        path_str(&cfg),
        "-o",
        path_str(&b),
        "--sequential"
    ])
    .status
    .success());
    for name in ["trace_seed_3.jsonl", "labels_seed_3.csv", "summary.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn missing_dataset_is_a_usage_error_naming_the_path() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nowhere/manifest.toml");
    let out = tmp.path().join("out");
    let res = fedmsc(&[
        "run",
        "--manifest",
        path_str(&missing),
        "-o",
        path_str(&out),
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(
        stderr(&res).contains("nowhere/manifest.toml"),
        "{}",
        stderr(&res)
    );
    assert!(!out.exists());
}

#[test]
fn bad_flags_and_keys_exit_with_one() {
    assert_eq!(fedmsc(&["run", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(fedmsc(&["frobnicate"]).status.code(), Some(1));
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &[0]);
    let res = fedmsc(&["run", "-c", path_str(&cfg), "--set", "colour=3"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn runtime_failure_exits_with_two_and_leaves_nothing() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &[0]);
    let out = tmp.path().join("out");
    // a huge β drives G far from every upload until the fusion weights vanish
    let res = fedmsc(&[
        "run",
        "-c",
        path_str(&cfg),
        "-o",
        path_str(&out),
        "--set",
        "beta=1e12",
    ]);
    assert_eq!(res.status.code(), Some(2), "{}", stderr(&res));
    assert!(!out.exists());
    let leftovers: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| {
            e.file_name()
                .to_string_lossy()
                .starts_with(".fedmsc-staging")
        })
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn non_empty_output_directory_is_refused() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &[0]);
    let out = tmp.path().join("out");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("keep.txt"), "mine").unwrap();
    let res = fedmsc(&["run", "-c", path_str(&cfg), "-o", path_str(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(fs::read_to_string(out.join("keep.txt")).unwrap(), "mine");
    assert_eq!(fs::read_dir(&out).unwrap().count(), 1);
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &[0]);
    let root = tmp.path().join("runs");
    let res = fedmsc_with_env(
        &["run", "-c", path_str(&cfg)],
        &[("FEDMSC_OUTPUT_ROOT", &root)],
    );
    assert!(res.status.success(), "{}", stderr(&res));
    assert!(root.join("run-exp/summary.json").is_file());
}

#[test]
fn sweep_rows_are_the_sorted_product() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &[0]);
    let out = tmp.path().join("sweep");
    let res = fedmsc(&[
        "sweep",
        "-c",
        path_str(&cfg),
        "-o",
        path_str(&out),
        "--grid",
        "lambda1=1,0.1",
        "--grid",
        "beta=0.1,0.01",
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let summary = read_json(out.join("summary.json"));
    let rows = summary["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let cells: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| {
            (
                r["params"]["lambda1"].as_f64().unwrap(),
                r["params"]["beta"].as_f64().unwrap(),
            )
        })
        .collect();
    assert_eq!(
        cells,
        vec![(0.1, 0.01), (0.1, 0.1), (1.0, 0.01), (1.0, 0.1)]
    );
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("lambda1,beta,acc_mean"));
}

#[test]
fn single_cell_sweep_matches_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &[0, 1]);
    let (run_dir, sweep_dir) = (tmp.path().join("run"), tmp.path().join("sweep"));
    assert!(fedmsc(&[
        "run",
        "-c",
        path_str(&cfg),
        "-o",
        path_str(&run_dir),
        "--set",
        "lambda1=0.5"
    ])
    .status
    .success());
    assert!(fedmsc(&[
        "sweep",
        "-c",
        path_str(&cfg),
        "-o",
        path_str(&sweep_dir),
        "--grid",
        "lambda1=0.5"
    ])
    .status
    .success());
    let run = read_json(run_dir.join("summary.json"));
    let sweep = read_json(sweep_dir.join("summary.json"));
    assert_eq!(sweep["rows"][0]["metrics"], run["metrics"]);
}

#[test]
fn ablation_pairs_seeds_and_reports_deltas() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &[4, 5]);
    let out = tmp.path().join("ablate");
    let res = fedmsc(&["ablate", "-c", path_str(&cfg), "-o", path_str(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let summary = read_json(out.join("summary.json"));
    let rows = summary["per_seed"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for (row, seed) in rows.iter().zip([4, 5]) {
        assert_eq!(row["seed"], seed);
        let h = row["hypergraph"]["acc"].as_f64().unwrap();
        let g = row["pairwise_graph"]["acc"].as_f64().unwrap();
        assert!((row["delta"]["acc"].as_f64().unwrap() - (h - g)).abs() < 1e-15);
    }
    assert!(out.join("hypergraph/trace_seed_4.jsonl").is_file());
    assert!(out.join("pairwise_graph/trace_seed_5.jsonl").is_file());
}

#[test]
fn synth_output_is_reproducible_and_loads_back() {
    let tmp = TempDir::new().unwrap();
    let args = |dir: &Path| -> Vec<String> {
        [
            "synth",
            "--n",
            "30",
            "--c",
            "3",
            "--view-dims",
            "4,6",
            "--separation",
            "5",
            "--noise",
            "0.2",
            "--seed",
            "9",
            "-o",
        ]
        .iter()
        .map(|s| s.to_string())
        .chain([dir.to_str().unwrap().to_string()])
        .collect()
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let argv = args(dir);
        let res = fedmsc(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(res.status.success(), "{}", stderr(&res));
    }
    for name in ["manifest.toml", "view_1.csv", "view_2.csv", "labels.csv"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let loaded = load_dataset(&DatasetManifest::read(a.join("manifest.toml")).unwrap()).unwrap();
    let expected = synthesize(&SynthesisSpec {
        n: 30,
        c: 3,
        view_dims: vec![4, 6],
        cluster_separation: 5.0,
        noise_sigma: 0.2,
        latent_dim: 10,
        seed: 9,
    })
    .unwrap();
    assert_eq!(loaded.views(), expected.views());
    assert_eq!(loaded.labels(), expected.labels());
}

#[test]
fn eval_scores_saved_labels() {
    let tmp = TempDir::new().unwrap();
    let (pred, truth, short) = (
        tmp.path().join("p.csv"),
        tmp.path().join("t.csv"),
        tmp.path().join("s.csv"),
    );
    fs::write(&pred, "0\n0\n0\n1\n").unwrap();
    fs::write(&truth, "0\n0\n1\n1\n").unwrap();
    fs::write(&short, "0\n1\n").unwrap();
    let json_out = tmp.path().join("m.json");
    let res = fedmsc(&[
        "eval",
        "--pred",
        path_str(&pred),
        "--truth",
        path_str(&truth),
        "--output",
        path_str(&json_out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let m: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(m["acc"], 0.75);
    assert_eq!(m["purity"], 0.75);
    assert!((m["nmi"].as_f64().unwrap() - 0.3456).abs() < 1e-3);
    assert_eq!(read_json(&json_out), m);

    let res = fedmsc(&[
        "eval",
        "--pred",
        path_str(&short),
        "--truth",
        path_str(&truth),
    ]);
    assert_eq!(res.status.code(), Some(1));
}
