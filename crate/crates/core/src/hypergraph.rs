//! Affinities, the k-NN hypergraph and its normalized Laplacian, and the
//! spectral embedding used as the cluster indicator.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::write_matrix;
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen_ascending;
use crate::{Matrix, Vector};

/// Symmetric, nonnegative `n × n` similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix(Matrix);

impl AffinityMatrix {
    /// Wraps `a` after checking symmetry and nonnegativity exactly.
    pub fn new(a: Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidParameter("affinity must be square".into()));
        }
        let n = a.nrows();
        for j in 0..n {
            for i in 0..n {
                if a[(i, j)] != a[(j, i)] || !(a[(i, j)] >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "affinity must be symmetric and nonnegative (entry {i},{j})"
                    )));
                }
            }
        }
        Ok(Self(a))
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }
}

/// `((G + Gᵀ) + (U + Uᵀ)) / 2` with negative entries clamped to zero.
pub fn view_affinity(g: &Matrix, u: &Matrix) -> AffinityMatrix {
    assert_eq!(g.shape(), u.shape(), "view_affinity shapes");
    let n = g.nrows();
    let mut a = Matrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = (((g[(i, j)] + g[(j, i)]) + (u[(i, j)] + u[(j, i)])) / 2.0).max(0.0);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    AffinityMatrix(a)
}

/// Elementwise mean of the per-view affinities.
pub fn global_affinity(views: &[AffinityMatrix]) -> Result<AffinityMatrix> {
    let first = views
        .first()
        .ok_or_else(|| Error::InvalidParameter("no view affinities".into()))?;
    let n = first.n();
    if views.iter().any(|a| a.n() != n) {
        return Err(Error::InvalidParameter("affinity shapes differ".into()));
    }
    let mut sum = Matrix::zeros(n, n);
    for a in views {
        sum += &a.0;
    }
    sum /= views.len() as f64;
    Ok(AffinityMatrix(sum))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    /// `n × |E|` 0/1 incidence.
    pub incidence: Matrix,
    pub edge_weights: Vector,
    pub vertex_degrees: Vector,
    pub edge_degrees: Vector,
}

impl Hypergraph {
    /// Builds a unit-weight hypergraph from its incidence matrix.
    pub fn from_incidence(incidence: Matrix) -> Self {
        let edges = incidence.ncols();
        let vertex_degrees =
            Vector::from_iterator(incidence.nrows(), incidence.row_iter().map(|r| r.sum()));
        let edge_degrees = Vector::from_iterator(edges, incidence.column_iter().map(|c| c.sum()));
        Self {
            incidence,
            edge_weights: Vector::from_element(edges, 1.0),
            vertex_degrees,
            edge_degrees,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.incidence.nrows()
    }

    pub fn n_edges(&self) -> usize {
        self.incidence.ncols()
    }

    /// Members of hyperedge `e` in ascending vertex order.
    pub fn members(&self, e: usize) -> Vec<usize> {
        self.incidence
            .column(e)
            .iter()
            .enumerate()
            .filter(|(_, &h)| h != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Neighbors of `i` by decreasing affinity, diagonal excluded, ties to the
/// lower index.
fn top_neighbors(a: &Matrix, i: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..a.nrows()).filter(|&j| j != i).collect();
    others.sort_by(|&p, &q| a[(i, q)].total_cmp(&a[(i, p)]).then(p.cmp(&q)));
    others.truncate(k);
    others
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::NeighborhoodOutOfRange { k, n });
    }
    Ok(())
}

/// One hyperedge per vertex: the vertex together with its `k` most similar
/// other vertices. Duplicate hyperedges are kept.
pub fn knn_hyperedges(a: &AffinityMatrix, k: usize) -> Result<Hypergraph> {
    let n = a.n();
    check_k(n, k)?;
    let mut h = Matrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = 1.0;
        for j in top_neighbors(&a.0, i, k) {
            h[(j, i)] = 1.0;
        }
    }
    Ok(Hypergraph::from_incidence(h))
}

/// `L = I − Dv^{-1/2} H W De^{-1} Hᵀ Dv^{-1/2}`, assembled pairwise over each
/// hyperedge so the result is exactly symmetric.
pub fn hypergraph_laplacian(hg: &Hypergraph) -> Result<Matrix> {
    let n = hg.n_vertices();
    if let Some(i) = hg.vertex_degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::IsolatedVertex(i));
    }
    let inv_sqrt: Vec<f64> = hg.vertex_degrees.iter().map(|d| d.sqrt().recip()).collect();
    let mut p = Matrix::zeros(n, n);
    for e in 0..hg.n_edges() {
        let delta = hg.edge_degrees[e];
        if delta == 0.0 {
            continue;
        }
        let w = hg.edge_weights[e] / delta;
        let members = hg.members(e);
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a..] {
                p[(i, j)] += w * hg.incidence[(i, e)] * hg.incidence[(j, e)];
            }
        }
    }
    let mut l = Matrix::identity(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = p[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
            l[(i, j)] -= v;
            if i != j {
                l[(j, i)] -= v;
            }
        }
    }
    Ok(l)
}

/// Bottom-`c` eigenvectors of a symmetric Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    /// `n × c`, orthonormal columns, eigenvalues ascending.
    pub indicator: Matrix,
    /// Full spectrum in ascending order.
    pub eigenvalues: Vector,
}

/// Columns are orthonormal eigenvectors for the `c` smallest eigenvalues,
/// signed so the largest-magnitude entry (first on ties) is positive.
pub fn spectral_indicator(laplacian: &Matrix, c: usize) -> Result<SpectralEmbedding> {
    let n = laplacian.nrows();
    if c == 0 || c > n {
        return Err(Error::InvalidParameter(format!(
            "cluster count {c} out of range for {n} vertices"
        )));
    }
    let (values, vectors) = symmetric_eigen_ascending(laplacian)?;
    let mut f = vectors.columns(0, c).into_owned();
    for mut col in f.column_iter_mut() {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(SpectralEmbedding {
        indicator: f,
        eigenvalues: values,
    })
}

/// Symmetric-normalized Laplacian of the k-NN pairwise graph: edge `ij` is
/// kept when either endpoint lists the other among its top `k`, weighted by
/// `A(i, j)`.
pub fn pairwise_graph_laplacian(a: &AffinityMatrix, k: usize) -> Result<Matrix> {
    let n = a.n();
    check_k(n, k)?;
    let mut keep = vec![false; n * n];
    for i in 0..n {
        for j in top_neighbors(&a.0, i, k) {
            keep[i * n + j] = true;
            keep[j * n + i] = true;
        }
    }
    let w = Matrix::from_fn(n, n, |i, j| if keep[i * n + j] { a.0[(i, j)] } else { 0.0 });
    let degrees: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    if let Some(i) = degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::IsolatedVertex(i));
    }
    let mut l = Matrix::identity(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = w[(i, j)] / (degrees[i].sqrt() * degrees[j].sqrt());
            l[(i, j)] -= v;
            if i != j {
                l[(j, i)] -= v;
            }
        }
    }
    Ok(l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianVariant {
    #[default]
    Hypergraph,
    PairwiseGraph,
}

/// Laplacian of the chosen variant built from `a`.
pub fn build_laplacian(a: &AffinityMatrix, k: usize, variant: LaplacianVariant) -> Result<Matrix> {
    match variant {
        LaplacianVariant::Hypergraph => hypergraph_laplacian(&knn_hyperedges(a, k)?),
        LaplacianVariant::PairwiseGraph => pairwise_graph_laplacian(a, k),
    }
}

/// Writes `incidence.csv`, `affinity.csv` and `eigenvalues.csv` into `dir`.
pub fn dump_debug(
    dir: impl AsRef<Path>,
    hg: &Hypergraph,
    a: &AffinityMatrix,
    eigenvalues: &Vector,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix(dir.join("incidence.csv"), &hg.incidence, ',')?;
    write_matrix(dir.join("affinity.csv"), a.as_matrix(), ',')?;
    write_matrix(
        dir.join("eigenvalues.csv"),
        &Matrix::from_column_slice(eigenvalues.len(), 1, eigenvalues.as_slice()),
        ',',
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigen_ascending;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_affinity(n: usize, rng: &mut ChaCha8Rng) -> AffinityMatrix {
        let g = Matrix::from_fn(n, n, |_, _| rng.random_range(-0.2..1.0));
        view_affinity(&g, &Matrix::zeros(n, n))
    }

    #[test]
    fn view_affinity_examples() {
        let g = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let a = view_affinity(&g, &Matrix::zeros(2, 2));
        assert_eq!(
            a.as_matrix(),
            &Matrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0])
        );

        let s = Matrix::from_row_slice(3, 3, &[0.0, 0.3, 0.7, 0.3, 0.1, 0.2, 0.7, 0.2, 0.0]);
        assert_eq!(view_affinity(&s, &Matrix::zeros(3, 3)).as_matrix(), &s);

        let neg = Matrix::from_row_slice(2, 2, &[0.0, -1.0, -0.5, 0.0]);
        let a = view_affinity(&neg, &Matrix::zeros(2, 2));
        assert!(a.as_matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn global_affinity_is_the_mean() {
        let a = AffinityMatrix::new(Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let b = AffinityMatrix::new(Matrix::zeros(2, 2)).unwrap();
        let m = global_affinity(&[a.clone(), b]).unwrap();
        assert_eq!(
            m.as_matrix(),
            &Matrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0])
        );
        assert_eq!(global_affinity(&[a.clone()]).unwrap(), a);
        assert!(global_affinity(&[]).is_err());
    }

    #[test]
    fn knn_hand_trace() {
        let a = AffinityMatrix::new(Matrix::from_row_slice(
            3,
            3,
            &[0.0, 0.9, 0.1, 0.9, 0.0, 0.2, 0.1, 0.2, 0.0],
        ))
        .unwrap();
        let hg = knn_hyperedges(&a, 1).unwrap();
        assert_eq!(hg.members(0), vec![0, 1]);
        assert_eq!(hg.members(1), vec![0, 1]);
        assert_eq!(hg.members(2), vec![1, 2]);
        assert_eq!(hg.edge_degrees.as_slice(), &[2.0, 2.0, 2.0]);
        assert_eq!(hg.vertex_degrees.as_slice(), &[2.0, 3.0, 1.0]);
        assert_eq!(hg.n_edges(), 3);
    }

    #[test]
    fn knn_complete_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = random_affinity(5, &mut rng);
        let hg = knn_hyperedges(&a, 4).unwrap();
        assert!(hg.incidence.iter().all(|&h| h == 1.0));
        assert!(hg.vertex_degrees.iter().all(|&d| d == 5.0));
        assert!(matches!(
            knn_hyperedges(&a, 0),
            Err(Error::NeighborhoodOutOfRange { .. })
        ));
        assert!(knn_hyperedges(&a, 5).is_err());
    }

    #[test]
    fn knn_ties_prefer_lower_index() {
        let a = AffinityMatrix::new(Matrix::from_element(4, 4, 1.0)).unwrap();
        let hg = knn_hyperedges(&a, 2).unwrap();
        assert_eq!(hg.members(3), vec![0, 1, 3]);
        assert_eq!(hg.members(0), vec![0, 1, 2]);
    }

    #[test]
    fn two_vertex_laplacian() {
        let hg = Hypergraph::from_incidence(Matrix::from_column_slice(2, 1, &[1.0, 1.0]));
        let l = hypergraph_laplacian(&hg).unwrap();
        assert_eq!(l, Matrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]));
        let (values, _) = symmetric_eigen_ascending(&l).unwrap();
        assert!(values[0].abs() < 1e-15 && (values[1] - 1.0).abs() < 1e-15);

        let emb = spectral_indicator(&l, 1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((emb.indicator[(0, 0)] - s).abs() < 1e-12);
        assert!((emb.indicator[(1, 0)] - s).abs() < 1e-12);
    }

    #[test]
    fn isolated_vertex_is_reported() {
        let hg = Hypergraph::from_incidence(Matrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0]));
        assert!(matches!(
            hypergraph_laplacian(&hg),
            Err(Error::IsolatedVertex(2))
        ));
    }

    #[test]
    fn laplacian_properties_on_random_hypergraphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let n = rng.random_range(3..30);
            let k = rng.random_range(1..n);
            let a = random_affinity(n, &mut rng);
            let hg = knn_hyperedges(&a, k).unwrap();
            // degrees recomputed from H
            let again = Hypergraph::from_incidence(hg.incidence.clone());
            assert_eq!(again, hg);
            let l = hypergraph_laplacian(&hg).unwrap();
            assert_eq!(l, l.transpose());
            let root = hg.vertex_degrees.map(f64::sqrt);
            assert!((&l * root).abs().max() <= 1e-10);
        }
    }

    #[test]
    fn knn_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let n = 9;
        let a = random_affinity(n, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // relabeled vertex perm[i] is original vertex i
        let mut b = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                b[(perm[i], perm[j])] = a.as_matrix()[(i, j)];
            }
        }
        let h = knn_hyperedges(&a, 3).unwrap().incidence;
        let hp = knn_hyperedges(&AffinityMatrix::new(b).unwrap(), 3)
            .unwrap()
            .incidence;
        for e in 0..n {
            for v in 0..n {
                assert_eq!(hp[(perm[v], perm[e])], h[(v, e)]);
            }
        }
    }

    #[test]
    fn spectral_trace_matches_bottom_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_affinity(12, &mut rng);
        let l = hypergraph_laplacian(&knn_hyperedges(&a, 3).unwrap()).unwrap();
        for c in [1, 3, 12] {
            let emb = spectral_indicator(&l, c).unwrap();
            let f = &emb.indicator;
            let gram = f.transpose() * f;
            assert!((gram - Matrix::identity(c, c)).abs().max() < 1e-10);
            let tr = (f.transpose() * &l * f).trace();
            let bottom: f64 = emb.eigenvalues.rows(0, c).sum();
            assert!((tr - bottom).abs() < 1e-8);
            if c == 12 {
                assert!((tr - l.trace()).abs() < 1e-8);
            }
        }
        assert!(spectral_indicator(&l, 0).is_err());
    }

    #[test]
    fn pairwise_laplacian_examples() {
        let k3 = AffinityMatrix::new(Matrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 }))
            .unwrap();
        let l = pairwise_graph_laplacian(&k3, 2).unwrap();
        let (values, _) = symmetric_eigen_ascending(&l).unwrap();
        assert!(values[0].abs() < 1e-12);
        assert!((values[1] - 1.5).abs() < 1e-12 && (values[2] - 1.5).abs() < 1e-12);

        // two disjoint pairs
        let mut w = Matrix::zeros(4, 4);
        w[(0, 1)] = 1.0;
        w[(1, 0)] = 1.0;
        w[(2, 3)] = 2.0;
        w[(3, 2)] = 2.0;
        let l = pairwise_graph_laplacian(&AffinityMatrix::new(w).unwrap(), 1).unwrap();
        let (values, _) = symmetric_eigen_ascending(&l).unwrap();
        assert!(values[0].abs() < 1e-12 && values[1].abs() < 1e-12 && values[2] > 0.5);
        assert!((&l - l.transpose()).abs().max() <= 1e-12);
    }

    #[test]
    fn debug_dump_writes_files() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_affinity(5, &mut rng);
        let hg = knn_hyperedges(&a, 2).unwrap();
        let l = hypergraph_laplacian(&hg).unwrap();
        let emb = spectral_indicator(&l, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        dump_debug(dir.path(), &hg, &a, &emb.eigenvalues).unwrap();
        let back = crate::dataset::read_matrix(
            dir.path().join("incidence.csv"),
            crate::dataset::Delimiter::Auto,
        )
        .unwrap();
        assert_eq!(back, hg.incidence);
    }
}
