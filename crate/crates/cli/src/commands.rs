use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use fedmsc::config::{default_beta_grid, default_lambda_grid, ExperimentConfig, SWEEPABLE};
use fedmsc::dataset::{read_labels, synthesize, write_dataset, write_labels, SynthesisSpec};
use fedmsc::eval::{median, MeanStd, MetricSummary, Metrics};
use fedmsc::federation::{run_federation, RunResult};
use fedmsc::hypergraph::LaplacianVariant;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::{write_json, write_jsonl, CliError, CliResult, StagedDir};

/// Command-line adjustments applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub manifest: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub output: Option<PathBuf>,
    /// `key=value` pairs; keys are config keys, `dataset.<key>` reaches the
    /// dataset table.
    pub sets: Vec<String>,
    pub sequential: bool,
}

/// Loads `path` (or defaults), applies overrides and validates.
pub fn resolve_config(path: Option<&Path>, ov: &Overrides) -> CliResult<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::read(p).map_err(CliError::usage)?,
        None => ExperimentConfig::default(),
    };
    if !ov.sets.is_empty() {
        let mut value = serde_json::to_value(&cfg).map_err(CliError::usage)?;
        for kv in &ov.sets {
            apply_set(&mut value, kv)?;
        }
        cfg = serde_json::from_value(value)
            .map_err(|e| CliError::Usage(format!("invalid --set value: {e}")))?;
    }
    if let Some(m) = &ov.manifest {
        cfg.dataset.manifest = Some(m.clone());
        cfg.dataset.synthetic = None;
    }
    if let Some(seeds) = &ov.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(out) = &ov.output {
        cfg.output_dir = Some(out.clone());
    }
    if ov.sequential {
        cfg.parallel = false;
    }
    cfg.validate().map_err(CliError::usage)?;
    Ok(cfg)
}

fn apply_set(root: &mut Value, kv: &str) -> CliResult<()> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {kv:?}")))?;
    let parsed = if let Ok(b) = raw.parse::<bool>() {
        Value::Bool(b)
    } else if let Ok(i) = raw.parse::<u64>() {
        json!(i)
    } else if let Ok(x) = raw.parse::<f64>() {
        json!(x)
    } else {
        Value::String(raw.to_string())
    };
    let mut slot = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("--set {key}: not a table")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        slot = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split yields at least one part")
}

/// Output directory: explicit flag or config entry, otherwise
/// `<root>/<command>-<config stem>`.
pub fn output_target(
    cfg: &ExperimentConfig,
    command: &str,
    config_path: Option<&Path>,
    root: &Path,
) -> PathBuf {
    if let Some(dir) = &cfg.output_dir {
        return dir.clone();
    }
    let stem = config_path
        .and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "default".into());
    root.join(format!("{command}-{stem}"))
}

pub struct SeedRun {
    pub seed: u64,
    pub result: RunResult,
}

/// Runs every configured seed in order.
pub fn execute(cfg: &ExperimentConfig) -> CliResult<Vec<SeedRun>> {
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let ds = cfg.dataset_for(seed).map_err(CliError::usage)?;
        let result = run_federation(&ds, &cfg.federation_config(seed))
            .map_err(|e| CliError::Runtime(format!("seed {seed}: {e}")))?;
        match &result.metrics {
            Some(m) => eprintln!(
                "seed {seed}: {} rounds, acc {:.4} purity {:.4} nmi {:.4}",
                result.traces.len(),
                m.acc,
                m.purity,
                m.nmi
            ),
            None => eprintln!("seed {seed}: {} rounds", result.traces.len()),
        }
        runs.push(SeedRun { seed, result });
    }
    Ok(runs)
}

#[derive(Debug, Serialize)]
pub struct SeedRow {
    pub seed: u64,
    pub rounds: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub command: &'static str,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub metrics: Option<MetricSummary>,
    pub per_seed: Vec<SeedRow>,
}

#[derive(Serialize)]
struct TraceRow<'a> {
    seed: u64,
    round: usize,
    full_objective: f64,
    central_objective: f64,
    local_objectives: &'a [f64],
    theta: &'a [f64],
    clamped_entries: usize,
    max_sum_violation: f64,
}

#[derive(Serialize)]
struct TimingRow {
    seed: u64,
    round: usize,
    millis: f64,
}

fn summarize(command: &'static str, runs: &[SeedRun]) -> RunSummary {
    let per_seed: Vec<SeedRow> = runs
        .iter()
        .map(|r| SeedRow {
            seed: r.seed,
            rounds: r.result.traces.len(),
            converged: r.result.converged,
            final_objective: r
                .result
                .traces
                .last()
                .map_or(f64::NAN, |t| t.full_objective),
            metrics: r.result.metrics,
        })
        .collect();
    let metrics: Option<Vec<Metrics>> = runs.iter().map(|r| r.result.metrics).collect();
    RunSummary {
        command,
        runs: runs.len(),
        seeds: runs.iter().map(|r| r.seed).collect(),
        metrics: metrics.map(|m| MetricSummary::of(&m)),
        per_seed,
    }
}

/// Per-seed traces, labels and timings plus `summary.json`.
fn write_run_files(dir: &Path, command: &'static str, runs: &[SeedRun]) -> CliResult<RunSummary> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let mut timing = Vec::new();
    for run in runs {
        let rows: Vec<TraceRow> = run
            .result
            .traces
            .iter()
            .map(|t| TraceRow {
                seed: run.seed,
                round: t.round,
                full_objective: t.full_objective,
                central_objective: t.central_objective,
                local_objectives: &t.local_objectives,
                theta: &t.theta,
                clamped_entries: t.projection.clamped_entries,
                max_sum_violation: t.projection.max_sum_violation,
            })
            .collect();
        write_jsonl(&dir.join(format!("trace_seed_{}.jsonl", run.seed)), &rows)?;
        write_labels(
            dir.join(format!("labels_seed_{}.csv", run.seed)),
            &run.result.labels,
        )
        .map_err(CliError::runtime)?;
        timing.extend(
            run.result
                .round_millis
                .iter()
                .enumerate()
                .map(|(round, &millis)| TimingRow {
                    seed: run.seed,
                    round,
                    millis,
                }),
        );
    }
    // wall times live apart from the traces so reruns stay byte-identical
    write_jsonl(&dir.join("timing.jsonl"), &timing)?;
    let summary = summarize(command, runs);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> CliResult<()> {
    let text = cfg.to_toml().map_err(CliError::runtime)?;
    fs::write(dir.join("config.toml"), text).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn cmd_run(cfg: &ExperimentConfig, target: &Path) -> CliResult<RunSummary> {
    let staged = StagedDir::create(target)?;
    let runs = execute(cfg)?;
    write_config(staged.path(), cfg)?;
    let summary = write_run_files(staged.path(), "run", &runs)?;
    staged.commit()?;
    Ok(summary)
}

/// Parses `name=v1,v2,...`; a bare `name` takes the default grid for the
/// regularization weights.
pub fn parse_grid(spec: &str) -> CliResult<(String, Vec<f64>)> {
    let (name, values) = match spec.split_once('=') {
        Some((n, v)) => {
            let values = v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Usage(format!("grid {n}: bad value {s:?}")))
                })
                .collect::<CliResult<Vec<_>>>()?;
            (n.trim().to_string(), values)
        }
        None => {
            let values = match spec {
                "lambda1" | "lambda2" | "lambda3" => default_lambda_grid(),
                "beta" => default_beta_grid(),
                other => {
                    return Err(CliError::Usage(format!(
                        "no default grid for {other:?}; give values as {other}=v1,v2"
                    )))
                }
            };
            (spec.to_string(), values)
        }
    };
    if !SWEEPABLE.contains(&name.as_str()) {
        return Err(CliError::Usage(format!(
            "cannot sweep {name:?} (expected one of {})",
            SWEEPABLE.join(", ")
        )));
    }
    if values.is_empty() {
        return Err(CliError::Usage(format!("grid {name} is empty")));
    }
    Ok((name, values))
}

/// Grid used when none is given: all three λ and β over their default ranges.
pub fn default_grid() -> Vec<(String, Vec<f64>)> {
    ["lambda1", "lambda2", "lambda3", "beta"]
        .iter()
        .map(|n| parse_grid(n).expect("defaults are valid"))
        .collect()
}

/// Every combination, sorted lexicographically by value tuple.
pub fn cartesian(grid: &[(String, Vec<f64>)]) -> Vec<Vec<f64>> {
    let mut cells: Vec<Vec<f64>> = vec![Vec::new()];
    for (_, values) in grid {
        cells = cells
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut cell = prefix.clone();
                    cell.push(v);
                    cell
                })
            })
            .collect();
    }
    cells.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    cells.dedup();
    cells
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub params: Map<String, Value>,
    pub runs: usize,
    pub metrics: Option<MetricSummary>,
    pub final_objective: Option<MeanStd>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub command: &'static str,
    pub params: Vec<String>,
    pub seeds: Vec<u64>,
    pub cells: usize,
    pub failed_cells: usize,
    pub best_by_acc: Option<usize>,
    pub rows: Vec<SweepRow>,
}

pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    grid: &[(String, Vec<f64>)],
    target: &Path,
) -> CliResult<SweepSummary> {
    let mut seen = BTreeSet::new();
    for (name, _) in grid {
        if !seen.insert(name) {
            return Err(CliError::Usage(format!("grid lists {name} twice")));
        }
    }
    let staged = StagedDir::create(target)?;
    let cells = cartesian(grid);
    let mut rows = Vec::with_capacity(cells.len());
    for cell in &cells {
        let mut cell_cfg = cfg.clone();
        let mut params = Map::new();
        for ((name, _), &v) in grid.iter().zip(cell) {
            cell_cfg.set_param(name, v).map_err(CliError::usage)?;
            params.insert(name.clone(), json!(v));
        }
        cell_cfg.validate().map_err(CliError::usage)?;
        eprintln!("cell {}", Value::Object(params.clone()));
        let row = match execute(&cell_cfg) {
            Ok(runs) => {
                let summary = summarize("run", &runs);
                let finals: Vec<f64> = summary.per_seed.iter().map(|r| r.final_objective).collect();
                SweepRow {
                    params,
                    runs: runs.len(),
                    metrics: summary.metrics,
                    final_objective: Some(MeanStd::of(&finals)),
                    error: None,
                }
            }
            Err(CliError::Runtime(msg)) => SweepRow {
                params,
                runs: 0,
                metrics: None,
                final_objective: None,
                error: Some(msg),
            },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed == rows.len() {
        return Err(CliError::Runtime(format!(
            "all {failed} sweep cells failed; first: {}",
            rows[0].error.as_deref().unwrap_or("")
        )));
    }
    let best_by_acc = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.metrics.map(|m| (i, m.acc.mean)))
        .fold(None, |best: Option<(usize, f64)>, (i, acc)| match best {
            Some((_, b)) if b >= acc => best,
            _ => Some((i, acc)),
        })
        .map(|(i, _)| i);

    write_config(staged.path(), cfg)?;
    write_jsonl(&staged.path().join("sweep.jsonl"), &rows)?;
    write_sweep_csv(&staged.path().join("sweep.csv"), grid, &cells, &rows)?;
    let summary = SweepSummary {
        command: "sweep",
        params: grid.iter().map(|(n, _)| n.clone()).collect(),
        seeds: cfg.seeds.clone(),
        cells: rows.len(),
        failed_cells: failed,
        best_by_acc,
        rows,
    };
    write_json(&staged.path().join("summary.json"), &summary)?;
    staged.commit()?;
    Ok(summary)
}

fn write_sweep_csv(
    path: &Path,
    grid: &[(String, Vec<f64>)],
    cells: &[Vec<f64>],
    rows: &[SweepRow],
) -> CliResult<()> {
    let mut out = String::new();
    for (name, _) in grid {
        out.push_str(name);
        out.push(',');
    }
    out.push_str("acc_mean,acc_std,purity_mean,purity_std,nmi_mean,nmi_std,final_objective_mean\n");
    let num = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_default();
    for (cell, row) in cells.iter().zip(rows) {
        for v in cell {
            out.push_str(&format!("{v:?},"));
        }
        let m = row.metrics;
        let fields = [
            m.map(|m| m.acc.mean),
            m.map(|m| m.acc.std),
            m.map(|m| m.purity.mean),
            m.map(|m| m.purity.std),
            m.map(|m| m.nmi.mean),
            m.map(|m| m.nmi.std),
            row.final_objective.map(|f| f.mean),
        ];
        out.push_str(&fields.iter().map(|&f| num(f)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
pub struct AblationRow {
    pub seed: u64,
    pub hypergraph: Metrics,
    pub pairwise_graph: Metrics,
    /// hypergraph minus pairwise graph
    pub delta: Metrics,
}

#[derive(Debug, Serialize)]
pub struct AblationSummary {
    pub command: &'static str,
    pub seeds: Vec<u64>,
    pub hypergraph: MetricSummary,
    pub pairwise_graph: MetricSummary,
    pub median_acc_hypergraph: f64,
    pub median_acc_pairwise_graph: f64,
    pub mean_delta: Metrics,
    pub per_seed: Vec<AblationRow>,
}

pub fn cmd_ablate(cfg: &ExperimentConfig, target: &Path) -> CliResult<AblationSummary> {
    let staged = StagedDir::create(target)?;
    let mut by_variant = Vec::new();
    for (variant, name) in [
        (LaplacianVariant::Hypergraph, "hypergraph"),
        (LaplacianVariant::PairwiseGraph, "pairwise_graph"),
    ] {
        let variant_cfg = ExperimentConfig {
            laplacian_variant: variant,
            ..cfg.clone()
        };
        eprintln!("variant {name}");
        let runs = execute(&variant_cfg)?;
        write_run_files(&staged.path().join(name), "run", &runs)?;
        let metrics = runs
            .iter()
            .map(|r| {
                r.result
                    .metrics
                    .ok_or_else(|| CliError::Usage("ablation needs ground-truth labels".into()))
            })
            .collect::<CliResult<Vec<Metrics>>>()?;
        by_variant.push(metrics);
    }
    let (hyper, graph) = (&by_variant[0], &by_variant[1]);
    let per_seed: Vec<AblationRow> = cfg
        .seeds
        .iter()
        .zip(hyper.iter().zip(graph))
        .map(|(&seed, (h, g))| AblationRow {
            seed,
            hypergraph: *h,
            pairwise_graph: *g,
            delta: Metrics {
                acc: h.acc - g.acc,
                purity: h.purity - g.purity,
                nmi: h.nmi - g.nmi,
            },
        })
        .collect();
    let mean = |f: fn(&Metrics) -> f64| {
        MeanStd::of(&per_seed.iter().map(|r| f(&r.delta)).collect::<Vec<_>>()).mean
    };
    let accs = |ms: &[Metrics]| median(&ms.iter().map(|m| m.acc).collect::<Vec<_>>());
    let summary = AblationSummary {
        command: "ablate",
        seeds: cfg.seeds.clone(),
        hypergraph: MetricSummary::of(hyper),
        pairwise_graph: MetricSummary::of(graph),
        median_acc_hypergraph: accs(hyper),
        median_acc_pairwise_graph: accs(graph),
        mean_delta: Metrics {
            acc: mean(|m| m.acc),
            purity: mean(|m| m.purity),
            nmi: mean(|m| m.nmi),
        },
        per_seed,
    };
    write_config(staged.path(), cfg)?;
    write_jsonl(&staged.path().join("ablation.jsonl"), &summary.per_seed)?;
    write_json(&staged.path().join("summary.json"), &summary)?;
    staged.commit()?;
    Ok(summary)
}

pub fn cmd_synth(spec: &SynthesisSpec, target: &Path) -> CliResult<PathBuf> {
    let ds = synthesize(spec).map_err(CliError::usage)?;
    let staged = StagedDir::create(target)?;
    write_dataset(&ds, staged.path()).map_err(CliError::runtime)?;
    let dir = staged.commit()?;
    Ok(dir.join("manifest.toml"))
}

pub fn cmd_eval(pred: &Path, truth: &Path) -> CliResult<Metrics> {
    let p = read_labels(pred).map_err(CliError::usage)?;
    let t = read_labels(truth).map_err(CliError::usage)?;
    if p.len() != t.len() {
        return Err(CliError::Usage(format!(
            "{} has {} labels but {} has {}",
            pred.display(),
            p.len(),
            truth.display(),
            t.len()
        )));
    }
    if p.is_empty() {
        return Err(CliError::Usage(format!("{} is empty", pred.display())));
    }
    Ok(Metrics::compute(&p, &t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(spec: &[&str]) -> Vec<(String, Vec<f64>)> {
        spec.iter().map(|s| parse_grid(s).unwrap()).collect()
    }

    #[test]
    fn product_count_and_order() {
        let g = grid(&["lambda1=1,0.1", "beta=0.1,0.01"]);
        let cells = cartesian(&g);
        assert_eq!(
            cells,
            vec![
                vec![0.1, 0.01],
                vec![0.1, 0.1],
                vec![1.0, 0.01],
                vec![1.0, 0.1]
            ]
        );
    }

    #[test]
    fn bare_names_take_default_grids() {
        assert_eq!(parse_grid("lambda2").unwrap().1.len(), 7);
        assert_eq!(parse_grid("beta").unwrap().1.len(), 5);
        assert!(parse_grid("knn_k").is_err());
        assert!(parse_grid("colour=1").is_err());
        assert!(parse_grid("beta=x").is_err());
        assert_eq!(cartesian(&default_grid()).len(), 7 * 7 * 7 * 5);
    }

    #[test]
    fn set_reaches_nested_and_enum_keys() {
        let ov = Overrides {
            sets: vec![
                "laplacian_variant=pairwise_graph".into(),
                "knn_k=7".into(),
                "lambda1=1e-3".into(),
                "dataset.n_clusters=3".into(),
                "dataset.manifest=data/m.toml".into(),
            ],
            ..Default::default()
        };
        let cfg = resolve_config(None, &ov).unwrap();
        assert_eq!(cfg.laplacian_variant, LaplacianVariant::PairwiseGraph);
        assert_eq!(cfg.knn_k, 7);
        assert_eq!(cfg.lambda1, 1e-3);
        assert_eq!(cfg.dataset.n_clusters, Some(3));

        let bad = Overrides {
            sets: vec!["no_such_key=1".into()],
            ..Default::default()
        };
        assert!(matches!(
            resolve_config(None, &bad),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn default_target_uses_config_stem() {
        let cfg = ExperimentConfig::default();
        let p = output_target(
            &cfg,
            "run",
            Some(Path::new("cfg/exp.toml")),
            Path::new("out"),
        );
        assert_eq!(p, Path::new("out/run-exp"));
    }
}
