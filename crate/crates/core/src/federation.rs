//! Round orchestration between nodes and the server.
//!
//! Each round every node runs its local phase (in parallel or sequentially,
//! with identical results), uploads `(Cᵏ, Uᵏ)` and a scalar local objective,
//! and the server runs central integration and broadcasts `G`. Raw feature
//! blocks never appear in any message type.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{partition, MultiViewDataset};
use crate::error::{Error, Result};
use crate::eval::{labels_from_indicator, Metrics};
use crate::hypergraph::LaplacianVariant;
use crate::local::{LocalHyperparams, LocalNode, LocalState, ProjectionStats};
use crate::server::{central_integration, central_objective, CentralConfig, CentralIterRecord};
use crate::{Matrix, Vector};

/// Node → server: the two learned `n × n` subspaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeUpload {
    pub node_id: usize,
    pub round: usize,
    pub c: Matrix,
    pub u: Matrix,
}

/// Node → server: the node's local objective, evaluated where the data lives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    pub node_id: usize,
    pub round: usize,
    pub local_objective: f64,
}

/// Server → every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerBroadcast {
    pub round: usize,
    pub g: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub full_objective: f64,
    pub central_objective: f64,
    pub local_objectives: Vec<f64>,
    pub theta: Vec<f64>,
    pub central_trace: Vec<CentralIterRecord>,
    pub projection: ProjectionStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    pub local: LocalHyperparams,
    pub beta: f64,
    pub central_iters: usize,
    pub knn_k: usize,
    #[serde(default)]
    pub laplacian_variant: LaplacianVariant,
    /// Falls back to the dataset's cluster count.
    #[serde(default)]
    pub n_clusters: Option<usize>,
    pub max_rounds: usize,
    pub tol: f64,
    pub seed: u64,
    #[serde(default)]
    pub parallel: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            local: LocalHyperparams::default(),
            beta: 0.01,
            central_iters: 5,
            knn_k: 5,
            laplacian_variant: LaplacianVariant::Hypergraph,
            n_clusters: None,
            max_rounds: 20,
            tol: 1e-4,
            seed: 0,
            parallel: true,
        }
    }
}

/// Everything needed to continue a run where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationState {
    pub rounds_completed: usize,
    pub nodes: Vec<LocalState>,
    pub broadcast: Option<Matrix>,
    pub last_objective: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub g: Matrix,
    pub f: Matrix,
    pub theta: Vec<f64>,
    pub eigenvalues: Vector,
    pub labels: Vec<usize>,
    pub metrics: Option<Metrics>,
    pub traces: Vec<RoundTrace>,
    /// Wall time per round, kept apart from the deterministic traces.
    pub round_millis: Vec<f64>,
    pub converged: bool,
    pub state: FederationState,
}

/// `|obj_t − obj_{t−1}| / max(|obj_{t−1}|, 1e-12) < tol` on the last two entries.
pub fn convergence_check(objectives: &[f64], tol: f64) -> bool {
    match objectives {
        [.., prev, last] => (last - prev).abs() / prev.abs().max(1e-12) < tol,
        _ => false,
    }
}

/// Sum of the node-reported local objectives and the central objective.
pub fn full_objective(
    reports: &[ObjectiveReport],
    uploads: &[NodeUpload],
    g: &Matrix,
    f: &Matrix,
    laplacian: &Matrix,
    theta: &[f64],
    beta: f64,
) -> f64 {
    let local: f64 = reports.iter().map(|r| r.local_objective).sum();
    let c_list: Vec<Matrix> = uploads.iter().map(|u| u.c.clone()).collect();
    local + central_objective(&c_list, g, f, laplacian, theta, beta)
}

pub fn run_federation(dataset: &MultiViewDataset, config: &FederationConfig) -> Result<RunResult> {
    run_federation_from(dataset, config, None)
}

/// Runs rounds until the full objective's relative change drops below `tol`
/// or `max_rounds` rounds have run. `resume` continues from a previous
/// result's state, including its last objective for the convergence test.
pub fn run_federation_from(
    dataset: &MultiViewDataset,
    config: &FederationConfig,
    resume: Option<&FederationState>,
) -> Result<RunResult> {
    let n = dataset.n_samples();
    if n < 2 {
        return Err(Error::InvalidDataset("need at least two samples".into()));
    }
    config.local.validate()?;
    if config.max_rounds == 0 {
        return Err(Error::InvalidParameter(
            "max_rounds must be positive".into(),
        ));
    }
    if !(config.tol >= 0.0) {
        return Err(Error::InvalidParameter("tol must be >= 0".into()));
    }
    let n_clusters = config
        .n_clusters
        .or(dataset.n_clusters())
        .ok_or_else(|| Error::InvalidParameter("cluster count unknown".into()))?;
    let central = CentralConfig {
        beta: config.beta,
        central_iters: config.central_iters,
        knn_k: config.knn_k,
        n_clusters,
        laplacian_variant: config.laplacian_variant,
    };
    central.validate(n)?;

    let nodes: Vec<LocalNode> = partition(dataset)
        .into_iter()
        .map(|h| {
            let id = h.id();
            LocalNode::new(
                h,
                config.local.manifold_mode,
                config.local.manifold_fallback,
            )
            .map_err(|e| Error::NodeFailure {
                node: id,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let mut state = match resume {
        Some(s) => {
            if s.nodes.len() != nodes.len()
                || s.nodes
                    .iter()
                    .any(|st| st.c.shape() != (n, n) || st.u.shape() != (n, n))
            {
                return Err(Error::InvalidParameter(
                    "resume state does not match the dataset".into(),
                ));
            }
            s.clone()
        }
        None => FederationState {
            rounds_completed: 0,
            nodes: vec![LocalState::initial(n); nodes.len()],
            broadcast: None,
            last_objective: None,
        },
    };

    let mut history: Vec<f64> = state.last_objective.into_iter().collect();
    let mut traces = Vec::new();
    let mut round_millis = Vec::new();
    let mut converged = false;
    let mut last_global = None;

    for _ in 0..config.max_rounds {
        let started = Instant::now();
        let round = state.rounds_completed;
        let broadcast = state.broadcast.as_ref().map(|g| ServerBroadcast {
            round,
            g: g.clone(),
        });
        let g_in = broadcast.as_ref().map(|b| &b.g);

        let run_node = |(node, st): (&LocalNode, &LocalState)| {
            node.local_round(st, g_in, &config.local)
                .map(|out| {
                    let objective = node.objective(&out.state, &config.local);
                    (out, objective)
                })
                .map_err(|e| Error::NodeFailure {
                    node: node.id(),
                    source: Box::new(e),
                })
        };
        let outputs: Vec<_> = if config.parallel {
            nodes
                .par_iter()
                .zip(state.nodes.par_iter())
                .map(run_node)
                .collect::<Result<_>>()?
        } else {
            nodes
                .iter()
                .zip(state.nodes.iter())
                .map(run_node)
                .collect::<Result<_>>()?
        };

        let mut uploads = Vec::with_capacity(nodes.len());
        let mut reports = Vec::with_capacity(nodes.len());
        let mut projection = ProjectionStats::default();
        for (node, (out, objective)) in nodes.iter().zip(&outputs) {
            projection.merge(&out.stats);
            uploads.push(NodeUpload {
                node_id: node.id(),
                round,
                c: out.state.c.clone(),
                u: out.state.u.clone(),
            });
            reports.push(ObjectiveReport {
                node_id: node.id(),
                round,
                local_objective: *objective,
            });
        }

        let c_list: Vec<Matrix> = uploads.iter().map(|u| u.c.clone()).collect();
        let u_list: Vec<Matrix> = uploads.iter().map(|u| u.u.clone()).collect();
        let global = central_integration(&c_list, &u_list, &central)?;
        let central_value = central_objective(
            &c_list,
            &global.g,
            &global.f,
            &global.laplacian,
            &global.theta,
            config.beta,
        );
        let full = full_objective(
            &reports,
            &uploads,
            &global.g,
            &global.f,
            &global.laplacian,
            &global.theta,
            config.beta,
        );
        if !full.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "objective became non-finite in round {round}"
            )));
        }
        traces.push(RoundTrace {
            round,
            full_objective: full,
            central_objective: central_value,
            local_objectives: reports.iter().map(|r| r.local_objective).collect(),
            theta: global.theta.clone(),
            central_trace: global.trace.clone(),
            projection,
        });

        state.nodes = outputs.into_iter().map(|(out, _)| out.state).collect();
        state.broadcast = Some(global.g.clone());
        state.last_objective = Some(full);
        state.rounds_completed += 1;
        history.push(full);
        last_global = Some(global);
        round_millis.push(started.elapsed().as_secs_f64() * 1e3);

        if convergence_check(&history, config.tol) {
            converged = true;
            break;
        }
    }

    let global = last_global.expect("max_rounds >= 1");
    let labels = labels_from_indicator(&global.f, n_clusters, config.seed);
    let metrics = dataset
        .labels()
        .map(|truth| Metrics::compute(&labels, truth));
    Ok(RunResult {
        g: global.g,
        f: global.f,
        theta: global.theta,
        eigenvalues: global.eigenvalues,
        labels,
        metrics,
        traces,
        round_millis,
        converged,
        state,
    })
}
