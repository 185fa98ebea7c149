use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedmsc::dataset::SynthesisSpec;
use fedmsc_cli::commands::{
    cmd_ablate, cmd_eval, cmd_run, cmd_sweep, cmd_synth, default_grid, output_target, parse_grid,
    resolve_config, Overrides,
};
use fedmsc_cli::{write_json, CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "fedmsc",
    version,
    about = "Federated multi-view subspace clustering experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the federation once per seed.
    Run(ExperimentArgs),
    /// Cartesian hyperparameter sweep; one summary row per cell.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// `name=v1,v2,...`, or a bare λ/β name for its default range.
        /// Repeatable. Without any, all three λ and β are swept.
        #[arg(long = "grid", value_name = "SPEC")]
        grid: Vec<String>,
    },
    /// Same config and seeds with the hypergraph and the pairwise graph.
    Ablate(ExperimentArgs),
    /// Write a synthetic multi-view dataset (manifest, views, labels).
    Synth(SynthArgs),
    /// Score saved labels against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Also write the metrics as JSON to this file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment config.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Dataset manifest; replaces the config's dataset source.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory; must be absent or empty.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Root for default output directories.
    #[arg(long, env = "FEDMSC_OUTPUT_ROOT", default_value = "fedmsc-runs")]
    output_root: PathBuf,
    /// Override a config key, e.g. `--set beta=0.1 --set laplacian_variant=pairwise_graph`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Run node solvers one after another instead of in parallel.
    #[arg(long)]
    sequential: bool,
}

impl ExperimentArgs {
    fn resolve(&self, command: &str) -> CliResult<(fedmsc::ExperimentConfig, PathBuf)> {
        let ov = Overrides {
            manifest: self.manifest.clone(),
            seeds: self.seeds.clone(),
            output: self.output.clone(),
            sets: self.sets.clone(),
            sequential: self.sequential,
        };
        let cfg = resolve_config(self.config.as_deref(), &ov)?;
        let target = output_target(&cfg, command, self.config.as_deref(), &self.output_root);
        Ok((cfg, target))
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    c: usize,
    /// Comma-separated feature count per view.
    #[arg(long, value_delimiter = ',', required = true)]
    view_dims: Vec<usize>,
    #[arg(long)]
    separation: f64,
    #[arg(long)]
    noise: f64,
    #[arg(long, default_value_t = 10)]
    latent_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
}

fn report(target: &Path) {
    eprintln!("wrote {}", target.display());
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(args) => {
            let (cfg, target) = args.resolve("run")?;
            let summary = cmd_run(&cfg, &target)?;
            if let Some(m) = summary.metrics {
                println!(
                    "acc {:.4} ± {:.4}  purity {:.4} ± {:.4}  nmi {:.4} ± {:.4}  ({} runs)",
                    m.acc.mean,
                    m.acc.std,
                    m.purity.mean,
                    m.purity.std,
                    m.nmi.mean,
                    m.nmi.std,
                    m.runs
                );
            }
            report(&target);
        }
        Command::Sweep { exp, grid } => {
            let (cfg, target) = exp.resolve("sweep")?;
            let grid = if grid.is_empty() {
                default_grid()
            } else {
                grid.iter()
                    .map(|g| parse_grid(g))
                    .collect::<CliResult<_>>()?
            };
            let summary = cmd_sweep(&cfg, &grid, &target)?;
            println!("{} cells, {} failed", summary.cells, summary.failed_cells);
            report(&target);
        }
        Command::Ablate(args) => {
            let (cfg, target) = args.resolve("ablate")?;
            let s = cmd_ablate(&cfg, &target)?;
            println!(
                "median acc: hypergraph {:.4}, pairwise graph {:.4}; mean delta acc {:+.4} nmi {:+.4}",
                s.median_acc_hypergraph, s.median_acc_pairwise_graph, s.mean_delta.acc, s.mean_delta.nmi
            );
            report(&target);
        }
        Command::Synth(a) => {
            let spec = SynthesisSpec {
                n: a.n,
                c: a.c,
                view_dims: a.view_dims,
                cluster_separation: a.separation,
                noise_sigma: a.noise,
                latent_dim: a.latent_dim,
                seed: a.seed,
            };
            let manifest = cmd_synth(&spec, &a.output)?;
            println!("{}", manifest.display());
        }
        Command::Eval {
            pred,
            truth,
            output,
        } => {
            let m = cmd_eval(&pred, &truth)?;
            println!("{}", serde_json::to_string(&m).map_err(CliError::runtime)?);
            if let Some(path) = output {
                write_json(&path, &m)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
