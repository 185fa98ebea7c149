//! Central integration: adaptive fusion of the uploaded consistent subspaces
//! into `G`, and the spectral indicator `F` of the fused hypergraph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{
    build_laplacian, global_affinity, spectral_indicator, view_affinity, AffinityMatrix,
    LaplacianVariant,
};
use crate::linalg::frobenius_sq;
use crate::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentralConfig {
    pub beta: f64,
    pub central_iters: usize,
    pub knn_k: usize,
    pub n_clusters: usize,
    #[serde(default)]
    pub laplacian_variant: LaplacianVariant,
}

impl CentralConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be >= 0 (got {})",
                self.beta
            )));
        }
        if self.central_iters == 0 {
            return Err(Error::InvalidParameter(
                "central_iters must be positive".into(),
            ));
        }
        if self.knn_k == 0 || self.knn_k >= n {
            return Err(Error::NeighborhoodOutOfRange { k: self.knn_k, n });
        }
        if self.n_clusters == 0 || self.n_clusters > n {
            return Err(Error::InvalidParameter(format!(
                "cluster count {} out of range for {n} samples",
                self.n_clusters
            )));
        }
        Ok(())
    }
}

/// One inner iteration of the central loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralIterRecord {
    pub iteration: usize,
    pub objective: f64,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GlobalState {
    pub g: Matrix,
    pub f: Matrix,
    pub theta: Vec<f64>,
    pub affinity: AffinityMatrix,
    pub laplacian: Matrix,
    pub eigenvalues: Vector,
    pub trace: Vec<CentralIterRecord>,
}

/// `θ_k = 1 / (2 exp(‖Cᵏ − G‖_F))`.
pub fn fusion_weights(c_list: &[Matrix], g: &Matrix) -> Vec<f64> {
    c_list
        .iter()
        .map(|c| 0.5 * (-(c - g).norm()).exp())
        .collect()
}

/// `Z(i, j) = ‖f_i − f_j‖²` over rows of `F`.
pub fn z_vectors(f: &Matrix) -> Matrix {
    let n = f.nrows();
    let mut z = Matrix::zeros(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let d: f64 = f
                .row(i)
                .iter()
                .zip(f.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            z[(i, j)] = d;
            z[(j, i)] = d;
        }
    }
    z
}

/// Column-wise minimizer of `Σ_k θ_k‖Cᵏ(:,i) − g‖² + (β/2) z_iᵀ g`:
/// `G(:,i) = (Σ_k θ_k Cᵏ(:,i) − β z_i / 4) / Σ_k θ_k`.
pub fn update_g(c_list: &[Matrix], theta: &[f64], z: &Matrix, beta: f64) -> Result<Matrix> {
    if c_list.is_empty() || c_list.len() != theta.len() {
        return Err(Error::InvalidParameter(
            "need one weight per uploaded subspace".into(),
        ));
    }
    let total: f64 = theta.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter(
            "fusion weights sum to zero; beta is too large for the spread of subspace distances"
                .into(),
        ));
    }
    let (rows, cols) = c_list[0].shape();
    let mut g = Matrix::zeros(rows, cols);
    for (c, &t) in c_list.iter().zip(theta) {
        g += c * t;
    }
    g -= z * (beta / 4.0);
    g /= total;
    Ok(g)
}

/// Objective minimized by [`update_g`] for fixed `θ` and `Z`.
pub fn g_step_objective(
    c_list: &[Matrix],
    theta: &[f64],
    z: &Matrix,
    beta: f64,
    g: &Matrix,
) -> f64 {
    let fit: f64 = c_list
        .iter()
        .zip(theta)
        .map(|(c, &t)| t * frobenius_sq(&(c - g)))
        .sum();
    fit + 0.5 * beta * z.component_mul(g).sum()
}

/// Bottom-`c` eigenvectors of the Laplacian.
pub fn update_f(laplacian: &Matrix, c: usize) -> Result<Matrix> {
    Ok(spectral_indicator(laplacian, c)?.indicator)
}

/// `Σ_k θ_k‖Cᵏ − G‖² + β Tr(FᵀLF)`.
pub fn central_objective(
    c_list: &[Matrix],
    g: &Matrix,
    f: &Matrix,
    laplacian: &Matrix,
    theta: &[f64],
    beta: f64,
) -> f64 {
    let fit: f64 = c_list
        .iter()
        .zip(theta)
        .map(|(c, &t)| t * frobenius_sq(&(c - g)))
        .sum();
    fit + beta * (f.transpose() * laplacian * f).trace()
}

/// Central loop: start from the plain mean of the uploads with `Z = 0`, then
/// alternate weights, `G`, affinity/Laplacian and `F`.
pub fn central_integration(
    c_list: &[Matrix],
    u_list: &[Matrix],
    config: &CentralConfig,
) -> Result<GlobalState> {
    let k = c_list.len();
    if k == 0 || u_list.len() != k {
        return Err(Error::InvalidParameter(
            "central integration needs matching C and U uploads".into(),
        ));
    }
    let n = c_list[0].nrows();
    if c_list.iter().chain(u_list).any(|m| m.shape() != (n, n)) {
        return Err(Error::InvalidParameter("uploads must all be n × n".into()));
    }
    config.validate(n)?;

    let mut g = c_list.iter().fold(Matrix::zeros(n, n), |acc, c| acc + c) / k as f64;
    let mut z = Matrix::zeros(n, n);
    let mut trace = Vec::with_capacity(config.central_iters);
    let mut last = None;
    for iteration in 0..config.central_iters {
        let theta = fusion_weights(c_list, &g);
        g = update_g(c_list, &theta, &z, config.beta)?;
        let views: Vec<AffinityMatrix> = u_list.iter().map(|u| view_affinity(&g, u)).collect();
        let affinity = global_affinity(&views)?;
        let laplacian = build_laplacian(&affinity, config.knn_k, config.laplacian_variant)?;
        let emb = spectral_indicator(&laplacian, config.n_clusters)?;
        z = z_vectors(&emb.indicator);
        let objective =
            central_objective(c_list, &g, &emb.indicator, &laplacian, &theta, config.beta);
        trace.push(CentralIterRecord {
            iteration,
            objective,
            theta: theta.clone(),
        });
        last = Some((emb, affinity, laplacian, theta));
    }
    let (emb, affinity, laplacian, theta) = last.expect("central_iters >= 1");
    Ok(GlobalState {
        g,
        f: emb.indicator,
        theta,
        affinity,
        laplacian,
        eigenvalues: emb.eigenvalues,
        trace,
    })
}
