use nalgebra::{Cholesky, SymmetricEigen};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

pub(crate) fn cholesky(a: Matrix) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let n = a.nrows();
    Cholesky::new(a).ok_or(Error::Factorization(n))
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in ascending
/// order. Equal eigenvalues keep the solver's original column order.
pub(crate) fn symmetric_eigen_ascending(a: &Matrix) -> Result<(Vector, Matrix)> {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    if eig.eigenvalues.iter().any(|v| !v.is_finite())
        || eig.eigenvectors.iter().any(|v| !v.is_finite())
    {
        return Err(Error::Eigen);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Euclidean distances between every pair of columns.
pub(crate) fn column_distances(x: &Matrix) -> Matrix {
    let n = x.ncols();
    let mut d = Matrix::zeros(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let dist = x
                .column(i)
                .iter()
                .zip(x.column(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[(i, j)] = dist;
            d[(j, i)] = dist;
        }
    }
    d
}

pub(crate) fn frobenius_sq(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum()
}
