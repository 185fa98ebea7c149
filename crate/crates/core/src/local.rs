//! Per-node subspace learning.
//!
//! A node holding `X` (`d × n`) alternates two ridge-type solves:
//!
//! ```text
//! C̃ = argmin ‖X − X(C + U)‖² + λ1‖C‖² + λ2‖M ⊙ C‖²
//! Ũ = argmin ‖X − X(C + U)‖² + λ3‖U‖²
//! ```
//!
//! each followed by a shift-and-clamp projection onto
//! `{diag = 0, entries ≥ 0, Σ(C + U) = 1}` along the constraint axis.
//!
//! The `M ⊙ C` penalty makes the normal equations differ per column
//! (`λ1 I + λ2 diag(M(:,j))² + XᵀX`), so `C̃` is solved column by column.
//! When `d < n` the systems are pushed through to `d × d` form:
//! `(Λ + XᵀX)⁻¹Xᵀ = Λ⁻¹Xᵀ(I + XΛ⁻¹Xᵀ)⁻¹`.

use serde::{Deserialize, Serialize};

use crate::dataset::NodeHandle;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, column_distances, frobenius_sq};
use crate::{Matrix, Vector};

/// Denominator used for the manifold coefficients
/// `m_ij = ‖x_i − x_j‖ / Σ_t ‖x_t − x_j‖`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldMode {
    /// Sum over `t ≠ i`, so each entry uses its own normalizer.
    #[default]
    RowExcluded,
    /// Sum over `t ≠ j`; off-diagonal entries of each column sum to one.
    ColumnNormalized,
}

/// Which vectors of `C + U` carry the sum-to-one constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintAxis {
    #[default]
    Columns,
    Rows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// One uniform shift followed by clamping at zero.
    #[default]
    ShiftClamp,
    /// Exact Euclidean projection onto the shifted simplex.
    Simplex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalHyperparams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub inner_iters: usize,
    #[serde(default)]
    pub manifold_mode: ManifoldMode,
    #[serde(default)]
    pub manifold_fallback: bool,
    #[serde(default)]
    pub constraint_axis: ConstraintAxis,
    #[serde(default)]
    pub projection: ProjectionMode,
}

impl Default for LocalHyperparams {
    fn default() -> Self {
        Self {
            lambda1: 100.0,
            lambda2: 1.0,
            lambda3: 100.0,
            inner_iters: 5,
            manifold_mode: ManifoldMode::default(),
            manifold_fallback: false,
            constraint_axis: ConstraintAxis::default(),
            projection: ProjectionMode::default(),
        }
    }
}

impl LocalHyperparams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.lambda1) || !ok(self.lambda3) {
            return Err(Error::InvalidParameter(format!(
                "lambda1 and lambda3 must be positive (got {}, {})",
                self.lambda1, self.lambda3
            )));
        }
        if !(self.lambda2.is_finite() && self.lambda2 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda2 must be >= 0 (got {})",
                self.lambda2
            )));
        }
        Ok(())
    }
}

/// The part of a node's state that changes across rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalState {
    pub c: Matrix,
    pub u: Matrix,
}

impl LocalState {
    /// `C = U = (𝟙𝟙ᵀ − I) / (2(n − 1))`: zero diagonal, nonnegative, and every
    /// column (and row) of `C + U` sums to one.
    pub fn initial(n: usize) -> Self {
        assert!(n >= 2, "need at least two samples");
        let v = 1.0 / (2.0 * (n - 1) as f64);
        let m = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { v });
        Self { c: m.clone(), u: m }
    }
}

// ---------------------------------------------------------------------------
// Manifold coefficients

pub fn manifold_coefficients(x: &Matrix, mode: ManifoldMode) -> Result<Matrix> {
    let n = x.ncols();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "manifold coefficients need at least two samples".into(),
        ));
    }
    let dist = column_distances(x);
    let col_sums: Vec<f64> = (0..n).map(|j| dist.column(j).sum()).collect();
    let mut m = Matrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            if i == j {
                continue;
            }
            // dist(j, j) = 0, so Σ_{t≠j} is the full column sum
            let denom = match mode {
                ManifoldMode::RowExcluded => col_sums[j] - dist[(i, j)],
                ManifoldMode::ColumnNormalized => col_sums[j],
            };
            if denom <= 0.0 {
                return Err(Error::ZeroManifoldDenominator { i, j });
            }
            m[(i, j)] = dist[(i, j)] / denom;
        }
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Ridge solves

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveRoute {
    Auto,
    /// `n × n` systems on the Gram matrix.
    Primal,
    /// `d × d` systems through the push-through identity.
    Dual,
}

struct RidgeSolver<'a> {
    x: &'a Matrix,
    gram: &'a Matrix,
    route: SolveRoute,
}

impl<'a> RidgeSolver<'a> {
    fn use_dual(&self) -> bool {
        match self.route {
            SolveRoute::Auto => self.x.nrows() < self.x.ncols(),
            SolveRoute::Primal => false,
            SolveRoute::Dual => true,
        }
    }

    /// `(shift·I + XᵀX)⁻¹ Xᵀ R` for a `d × n` residual `R`.
    fn solve_shared(&self, shift: f64, residual: &Matrix) -> Result<Matrix> {
        if self.use_dual() {
            let mut k = self.x * self.x.transpose();
            for i in 0..k.nrows() {
                k[(i, i)] += shift;
            }
            let chol = cholesky(k)?;
            Ok(self.x.transpose() * chol.solve(residual))
        } else {
            let mut a = self.gram.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += shift;
            }
            let chol = cholesky(a)?;
            Ok(chol.solve(&(self.x.transpose() * residual)))
        }
    }

    /// `(diag(shift) + XᵀX)⁻¹ Xᵀ r` for one residual column.
    fn solve_column(&self, shift: &Vector, residual: &Vector) -> Result<Vector> {
        if self.use_dual() {
            let d = self.x.nrows();
            let mut scaled = self.x.clone();
            for (j, mut col) in scaled.column_iter_mut().enumerate() {
                col /= shift[j];
            }
            let mut k = &scaled * self.x.transpose();
            for i in 0..d {
                k[(i, i)] += 1.0;
            }
            let chol = cholesky(k)?;
            Ok(scaled.transpose() * chol.solve(residual))
        } else {
            let mut a = self.gram.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += shift[i];
            }
            let chol = cholesky(a)?;
            Ok(chol.solve(&(self.x.transpose() * residual)))
        }
    }
}

pub fn solve_c_with(
    x: &Matrix,
    gram: &Matrix,
    u: &Matrix,
    m: &Matrix,
    lambda1: f64,
    lambda2: f64,
    route: SolveRoute,
) -> Result<Matrix> {
    if !(lambda1 > 0.0) {
        return Err(Error::InvalidParameter("lambda1 must be positive".into()));
    }
    let n = x.ncols();
    let residual = x - x * u;
    let solver = RidgeSolver { x, gram, route };
    if lambda2 == 0.0 {
        return solver.solve_shared(lambda1, &residual);
    }
    let mut out = Matrix::zeros(n, n);
    for j in 0..n {
        let shift = Vector::from_fn(n, |i, _| lambda1 + lambda2 * m[(i, j)] * m[(i, j)]);
        let col = solver.solve_column(&shift, &residual.column(j).into_owned())?;
        out.set_column(j, &col);
    }
    Ok(out)
}

pub fn solve_u_with(
    x: &Matrix,
    gram: &Matrix,
    c: &Matrix,
    lambda3: f64,
    route: SolveRoute,
) -> Result<Matrix> {
    if !(lambda3 > 0.0) {
        return Err(Error::InvalidParameter("lambda3 must be positive".into()));
    }
    let residual = x - x * c;
    RidgeSolver { x, gram, route }.solve_shared(lambda3, &residual)
}

/// Unconstrained minimizer of `‖X − X(C + U)‖² + λ1‖C‖² + λ2‖M ⊙ C‖²` over `C`.
pub fn solve_c_unconstrained(
    x: &Matrix,
    u: &Matrix,
    m: &Matrix,
    lambda1: f64,
    lambda2: f64,
) -> Result<Matrix> {
    let gram = x.transpose() * x;
    solve_c_with(x, &gram, u, m, lambda1, lambda2, SolveRoute::Auto)
}

/// `Ũ = (λ3 I + XᵀX)⁻¹ Xᵀ(X − XC)`.
pub fn solve_u_unconstrained(x: &Matrix, c: &Matrix, lambda3: f64) -> Result<Matrix> {
    let gram = x.transpose() * x;
    solve_u_with(x, &gram, c, lambda3, SolveRoute::Auto)
}

// ---------------------------------------------------------------------------
// Projection

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionOutcome {
    pub vector: Vector,
    /// Free entries that hit the zero bound.
    pub clamped: usize,
    /// `|Σ(v + partner) − 1|` after projection.
    pub sum_violation: f64,
}

/// Shift-and-clamp projection of one constrained vector.
///
/// The diagonal entry (if any) is excluded from the shift and returned as
/// zero; the shift `φ = (1 − Σ_free ṽ − Σ partner) / #free` makes
/// `Σ(v + partner) = 1` whenever no entry is clamped.
pub fn project_pair(tilde: &Vector, partner: &Vector, diag_index: Option<usize>) -> Vector {
    project_pair_with(tilde, partner, diag_index, ProjectionMode::ShiftClamp).vector
}

pub fn project_pair_with(
    tilde: &Vector,
    partner: &Vector,
    diag_index: Option<usize>,
    mode: ProjectionMode,
) -> ProjectionOutcome {
    let n = tilde.len();
    assert_eq!(partner.len(), n, "partner length");
    let is_free = |j: usize| Some(j) != diag_index;
    let free = (0..n).filter(|&j| is_free(j)).count();
    let partner_sum: f64 = partner.iter().sum();
    let mut v = Vector::zeros(n);
    let mut clamped = 0;
    if free > 0 {
        let target = 1.0 - partner_sum;
        match mode {
            ProjectionMode::ShiftClamp => {
                let free_sum: f64 = (0..n).filter(|&j| is_free(j)).map(|j| tilde[j]).sum();
                let shift = (target - free_sum) / free as f64;
                for j in (0..n).filter(|&j| is_free(j)) {
                    let s = tilde[j] + shift;
                    if s < 0.0 {
                        clamped += 1;
                    } else {
                        v[j] = s;
                    }
                }
            }
            ProjectionMode::Simplex => {
                if target > 0.0 {
                    let mut sorted: Vec<f64> =
                        (0..n).filter(|&j| is_free(j)).map(|j| tilde[j]).collect();
                    sorted.sort_by(|a, b| b.total_cmp(a));
                    let mut cumsum = 0.0;
                    let mut theta = 0.0;
                    for (r, &s) in sorted.iter().enumerate() {
                        cumsum += s;
                        let t = (cumsum - target) / (r + 1) as f64;
                        if s - t > 0.0 {
                            theta = t;
                        }
                    }
                    for j in (0..n).filter(|&j| is_free(j)) {
                        let s = tilde[j] - theta;
                        if s <= 0.0 {
                            clamped += 1;
                        } else {
                            v[j] = s;
                        }
                    }
                } else {
                    clamped = free;
                }
            }
        }
    }
    let sum_violation = (v.sum() + partner_sum - 1.0).abs();
    ProjectionOutcome {
        vector: v,
        clamped,
        sum_violation,
    }
}

/// Constraint diagnostics accumulated over projections.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ProjectionStats {
    pub vectors: usize,
    pub clamped_vectors: usize,
    pub clamped_entries: usize,
    /// Largest sum violation over all vectors, clamped or not.
    pub max_sum_violation: f64,
    /// Largest sum violation over vectors where nothing was clamped.
    pub max_unclamped_violation: f64,
}

impl ProjectionStats {
    pub fn merge(&mut self, other: &ProjectionStats) {
        self.vectors += other.vectors;
        self.clamped_vectors += other.clamped_vectors;
        self.clamped_entries += other.clamped_entries;
        self.max_sum_violation = self.max_sum_violation.max(other.max_sum_violation);
        self.max_unclamped_violation = self
            .max_unclamped_violation
            .max(other.max_unclamped_violation);
    }

    fn record(&mut self, outcome: &ProjectionOutcome) {
        self.vectors += 1;
        if outcome.clamped > 0 {
            self.clamped_vectors += 1;
            self.clamped_entries += outcome.clamped;
        } else {
            self.max_unclamped_violation = self.max_unclamped_violation.max(outcome.sum_violation);
        }
        self.max_sum_violation = self.max_sum_violation.max(outcome.sum_violation);
    }
}

/// Projects every constrained vector of `tilde` against the matching vector
/// of `partner`.
pub fn project_matrix(
    tilde: &Matrix,
    partner: &Matrix,
    axis: ConstraintAxis,
    mode: ProjectionMode,
) -> (Matrix, ProjectionStats) {
    let n = tilde.ncols();
    let mut out = Matrix::zeros(n, n);
    let mut stats = ProjectionStats::default();
    for idx in 0..n {
        let (t, p) = match axis {
            ConstraintAxis::Columns => (
                tilde.column(idx).into_owned(),
                partner.column(idx).into_owned(),
            ),
            ConstraintAxis::Rows => (tilde.row(idx).transpose(), partner.row(idx).transpose()),
        };
        let outcome = project_pair_with(&t, &p, Some(idx), mode);
        stats.record(&outcome);
        match axis {
            ConstraintAxis::Columns => out.set_column(idx, &outcome.vector),
            ConstraintAxis::Rows => out.set_row(idx, &outcome.vector.transpose()),
        }
    }
    (out, stats)
}

// ---------------------------------------------------------------------------
// Objective and node

/// `‖X − X(C + U)‖² + λ1‖C‖² + λ2‖M ⊙ C‖² + λ3‖U‖²`.
pub fn local_objective(
    x: &Matrix,
    c: &Matrix,
    u: &Matrix,
    m: &Matrix,
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
) -> f64 {
    let recon = x - x * (c + u);
    frobenius_sq(&recon)
        + lambda1 * frobenius_sq(c)
        + lambda2 * frobenius_sq(&m.component_mul(c))
        + lambda3 * frobenius_sq(u)
}

/// Result of one local phase.
#[derive(Debug, Clone)]
pub struct LocalRoundOutput {
    pub state: LocalState,
    pub stats: ProjectionStats,
    /// Local objective at the start and after each inner iteration.
    pub objective_trace: Vec<f64>,
}

/// A training participant: its private view plus quantities derived from it
/// once (Gram matrix, manifold coefficients).
#[derive(Debug, Clone)]
pub struct LocalNode {
    handle: NodeHandle,
    gram: Matrix,
    manifold: Matrix,
    manifold_mode: ManifoldMode,
}

impl LocalNode {
    /// With `fallback`, coincident samples under [`ManifoldMode::RowExcluded`]
    /// switch the node to [`ManifoldMode::ColumnNormalized`] instead of failing.
    pub fn new(handle: NodeHandle, mode: ManifoldMode, fallback: bool) -> Result<Self> {
        let x = handle.view();
        let (manifold, manifold_mode) = match manifold_coefficients(x, mode) {
            Ok(m) => (m, mode),
            Err(Error::ZeroManifoldDenominator { .. })
                if fallback && mode == ManifoldMode::RowExcluded =>
            {
                (
                    manifold_coefficients(x, ManifoldMode::ColumnNormalized)?,
                    ManifoldMode::ColumnNormalized,
                )
            }
            Err(e) => return Err(e),
        };
        let gram = x.transpose() * x;
        Ok(Self {
            handle,
            gram,
            manifold,
            manifold_mode,
        })
    }

    pub fn id(&self) -> usize {
        self.handle.id()
    }

    pub fn n_samples(&self) -> usize {
        self.handle.n_samples()
    }

    pub fn manifold(&self) -> &Matrix {
        &self.manifold
    }

    pub fn manifold_mode(&self) -> ManifoldMode {
        self.manifold_mode
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    /// Local objective of `state`; only this scalar leaves the node.
    pub fn objective(&self, state: &LocalState, params: &LocalHyperparams) -> f64 {
        local_objective(
            self.handle.view(),
            &state.c,
            &state.u,
            &self.manifold,
            params.lambda1,
            params.lambda2,
            params.lambda3,
        )
    }

    /// One local phase. A broadcast global subspace replaces `C` before the
    /// inner alternation starts.
    pub fn local_round(
        &self,
        state: &LocalState,
        broadcast: Option<&Matrix>,
        params: &LocalHyperparams,
    ) -> Result<LocalRoundOutput> {
        let n = self.n_samples();
        let mut c = match broadcast {
            Some(g) => {
                if g.shape() != (n, n) {
                    return Err(Error::InvalidParameter(format!(
                        "broadcast has shape {:?}, expected ({n}, {n})",
                        g.shape()
                    )));
                }
                g.clone()
            }
            None => state.c.clone(),
        };
        let mut u = state.u.clone();
        let x = self.handle.view();
        let mut stats = ProjectionStats::default();
        let mut trace = Vec::with_capacity(params.inner_iters + 1);
        trace.push(self.objective(
            &LocalState {
                c: c.clone(),
                u: u.clone(),
            },
            params,
        ));
        for _ in 0..params.inner_iters {
            let c_tilde = solve_c_with(
                x,
                &self.gram,
                &u,
                &self.manifold,
                params.lambda1,
                params.lambda2,
                SolveRoute::Auto,
            )?;
            let (c_new, s) =
                project_matrix(&c_tilde, &u, params.constraint_axis, params.projection);
            stats.merge(&s);
            c = c_new;
            let u_tilde = solve_u_with(x, &self.gram, &c, params.lambda3, SolveRoute::Auto)?;
            let (u_new, s) =
                project_matrix(&u_tilde, &c, params.constraint_axis, params.projection);
            stats.merge(&s);
            u = u_new;
            trace.push(self.objective(
                &LocalState {
                    c: c.clone(),
                    u: u.clone(),
                },
                params,
            ));
        }
        Ok(LocalRoundOutput {
            state: LocalState { c, u },
            stats,
            objective_trace: trace,
        })
    }
}
