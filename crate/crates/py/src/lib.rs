//! Python module `fedmsc`.
//!
//! Matrices cross the boundary as lists of rows. Views are given with one row
//! per sample, matching the on-disk format.
//!
//! ```python
//! import fedmsc
//! ds = fedmsc.synthesize(n=150, c=3, view_dims=[20, 35], separation=8.0, noise=0.5, seed=0)
//! res = fedmsc.run(ds, seed=0, knn_k=10)
//! print(res.metrics, res.rounds)
//! ```

use std::path::PathBuf;

use fedmsc::config::ExperimentConfig;
use fedmsc::dataset::{self, SynthesisSpec};
use fedmsc::eval::{self, Metrics};
use fedmsc::federation::{self, RoundTrace};
use fedmsc::hypergraph::{self, AffinityMatrix};
use fedmsc::{Error, Matrix, MultiViewDataset};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyString};
use serde_json::Value;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Eigen | Error::Factorization(_) | Error::NodeFailure { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Row lists to a matrix; every row must have the same length.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<Matrix, String> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_cols) {
        return Err(format!(
            "row {i} has {} entries, expected {n_cols}",
            r.len()
        ));
    }
    Ok(Matrix::from_fn(n_rows, n_cols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn square(rows: &[Vec<f64>], what: &str) -> PyResult<Matrix> {
    let m = rows_to_matrix(rows).map_err(PyValueError::new_err)?;
    if m.nrows() != m.ncols() {
        return Err(PyValueError::new_err(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m)
}

fn metrics_dict<'py>(py: Python<'py>, m: &Metrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("acc", m.acc)?;
    d.set_item("purity", m.purity)?;
    d.set_item("nmi", m.nmi)?;
    Ok(d)
}

/// A multi-view dataset: one feature matrix per view over shared samples.
#[pyclass(name = "Dataset", module = "fedmsc", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDataset {
    inner: MultiViewDataset,
}

#[pymethods]
impl PyDataset {
    /// `views[k][sample][feature]`; labels are optional integer ids.
    #[new]
    #[pyo3(signature = (views, labels=None, n_clusters=None))]
    fn new(
        views: Vec<Vec<Vec<f64>>>,
        labels: Option<Vec<usize>>,
        n_clusters: Option<usize>,
    ) -> PyResult<Self> {
        let mats = views
            .iter()
            .enumerate()
            .map(|(k, v)| {
                rows_to_matrix(v)
                    .map(|m| m.transpose())
                    .map_err(|e| PyValueError::new_err(format!("view {k}: {e}")))
            })
            .collect::<PyResult<Vec<_>>>()?;
        let inner = MultiViewDataset::new(mats, labels, n_clusters).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    /// Reads a dataset manifest (TOML).
    #[staticmethod]
    fn load(manifest: PathBuf) -> PyResult<Self> {
        let m = dataset::DatasetManifest::read(&manifest).map_err(to_py_err)?;
        let inner = dataset::load_dataset(&m).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    /// Writes views, labels and a manifest into `directory`; returns the
    /// manifest path.
    fn save(&self, directory: PathBuf) -> PyResult<PathBuf> {
        dataset::write_dataset(&self.inner, directory).map_err(to_py_err)
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    #[getter]
    fn n_views(&self) -> usize {
        self.inner.n_views()
    }

    #[getter]
    fn view_dims(&self) -> Vec<usize> {
        self.inner.view_dims()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<usize>> {
        self.inner.labels().map(<[usize]>::to_vec)
    }

    #[getter]
    fn n_clusters(&self) -> Option<usize> {
        self.inner.n_clusters()
    }

    /// View `k` as rows of samples.
    fn view(&self, k: usize) -> PyResult<Vec<Vec<f64>>> {
        if k >= self.inner.n_views() {
            return Err(PyValueError::new_err(format!(
                "view {k} out of range ({} views)",
                self.inner.n_views()
            )));
        }
        Ok(matrix_to_rows(&self.inner.view(k).transpose()))
    }

    /// Copy with every feature centred and scaled to unit variance.
    fn standardized(&self) -> Self {
        Self {
            inner: self.inner.standardized(),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n_samples={}, view_dims={:?}, n_clusters={})",
            self.inner.n_samples(),
            self.inner.view_dims(),
            self.inner
                .n_clusters()
                .map_or("None".into(), |c| c.to_string())
        )
    }
}

/// Outcome of one federated run.
#[pyclass(name = "RunResult", module = "fedmsc", frozen)]
pub struct PyRunResult {
    labels: Vec<usize>,
    metrics: Option<Metrics>,
    traces: Vec<RoundTrace>,
    converged: bool,
    theta: Vec<f64>,
    eigenvalues: Vec<f64>,
    g: Matrix,
    f: Matrix,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.labels.clone()
    }

    /// `{"acc", "purity", "nmi"}`, or None without ground truth.
    #[getter]
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyDict>>> {
        self.metrics
            .as_ref()
            .map(|m| metrics_dict(py, m))
            .transpose()
    }

    #[getter]
    fn rounds(&self) -> usize {
        self.traces.len()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.converged
    }

    /// Full objective after each round.
    #[getter]
    fn objective_trace(&self) -> Vec<f64> {
        self.traces.iter().map(|t| t.full_objective).collect()
    }

    /// Per-round local objectives, one list per round.
    #[getter]
    fn local_objectives(&self) -> Vec<Vec<f64>> {
        self.traces
            .iter()
            .map(|t| t.local_objectives.clone())
            .collect()
    }

    /// Final per-view fusion weights.
    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.theta.clone()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.clone()
    }

    /// Global subspace G (n × n rows).
    #[getter]
    fn global_subspace(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.g)
    }

    /// Spectral indicator F (n × c rows).
    #[getter]
    fn indicator(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.f)
    }

    fn __repr__(&self) -> String {
        let metrics = self.metrics.as_ref().map_or("None".into(), |m| {
            format!(
                "{{'acc': {:?}, 'purity': {:?}, 'nmi': {:?}}}",
                m.acc, m.purity, m.nmi
            )
        });
        format!(
            "RunResult(rounds={}, converged={}, metrics={metrics})",
            self.traces.len(),
            if self.converged { "True" } else { "False" },
        )
    }
}

#[pyfunction]
#[pyo3(signature = (n, c, view_dims, separation, noise, latent_dim=10, seed=0))]
fn synthesize(
    n: usize,
    c: usize,
    view_dims: Vec<usize>,
    separation: f64,
    noise: f64,
    latent_dim: usize,
    seed: u64,
) -> PyResult<PyDataset> {
    let spec = SynthesisSpec {
        n,
        c,
        view_dims,
        cluster_separation: separation,
        noise_sigma: noise,
        latent_dim,
        seed,
    };
    let inner = dataset::synthesize(&spec).map_err(to_py_err)?;
    Ok(PyDataset { inner })
}

fn to_json(key: &str, v: &Bound<'_, PyAny>) -> PyResult<Value> {
    if v.is_instance_of::<PyBool>() {
        Ok(Value::Bool(v.extract()?))
    } else if v.is_instance_of::<PyInt>() {
        Ok(Value::from(v.extract::<u64>()?))
    } else if v.is_instance_of::<PyFloat>() {
        Ok(Value::from(v.extract::<f64>()?))
    } else if v.is_instance_of::<PyString>() {
        Ok(Value::String(v.extract()?))
    } else {
        Err(PyValueError::new_err(format!(
            "{key}: expected bool, int, float or str"
        )))
    }
}

/// Runs the federation on `dataset`. Keyword arguments are experiment config
/// keys (`lambda1`, `beta`, `knn_k`, `laplacian_variant`, ...).
#[pyfunction]
#[pyo3(signature = (dataset, seed=0, **params))]
fn run(
    py: Python<'_>,
    dataset: &PyDataset,
    seed: u64,
    params: Option<&Bound<'_, PyDict>>,
) -> PyResult<PyRunResult> {
    let mut cfg = ExperimentConfig::default();
    if let Some(params) = params {
        let mut value =
            serde_json::to_value(&cfg).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let obj = value.as_object_mut().expect("config serializes to a table");
        for (k, v) in params.iter() {
            let key: String = k.extract()?;
            if key == "dataset" || key == "seeds" || key == "output_dir" {
                return Err(PyValueError::new_err(format!(
                    "{key} is not a run parameter"
                )));
            }
            if !obj.contains_key(&key) {
                return Err(PyValueError::new_err(format!("unknown parameter {key:?}")));
            }
            obj.insert(key.clone(), to_json(&key, &v)?);
        }
        cfg = serde_json::from_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    }
    let fed = cfg.federation_config(seed);
    let ds = dataset.inner.clone();
    let r = py
        .detach(move || federation::run_federation(&ds, &fed))
        .map_err(to_py_err)?;
    Ok(PyRunResult {
        labels: r.labels,
        metrics: r.metrics,
        traces: r.traces,
        converged: r.converged,
        theta: r.theta,
        eigenvalues: r.eigenvalues.iter().copied().collect(),
        g: r.g,
        f: r.f,
    })
}

/// ACC, purity and NMI of `pred` against `truth`.
#[pyfunction]
fn metrics<'py>(
    py: Python<'py>,
    pred: Vec<usize>,
    truth: Vec<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(PyValueError::new_err(
            "pred and truth must be non-empty and of equal length",
        ));
    }
    metrics_dict(py, &Metrics::compute(&pred, &truth))
}

/// Normalized Laplacian of the k-NN hypergraph (or pairwise graph when
/// `variant="pairwise_graph"`) built from a symmetric affinity matrix.
#[pyfunction]
#[pyo3(signature = (affinity, k, variant="hypergraph"))]
fn laplacian(affinity: Vec<Vec<f64>>, k: usize, variant: &str) -> PyResult<Vec<Vec<f64>>> {
    let a = AffinityMatrix::new(square(&affinity, "affinity")?).map_err(to_py_err)?;
    let variant = serde_json::from_value(Value::String(variant.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown variant {variant:?}")))?;
    let l = hypergraph::build_laplacian(&a, k, variant).map_err(to_py_err)?;
    Ok(matrix_to_rows(&l))
}

/// Bottom-`c` eigenpairs of a Laplacian: `(eigenvalues, F rows)`.
#[pyfunction]
fn spectral_embedding(laplacian: Vec<Vec<f64>>, c: usize) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let l = square(&laplacian, "laplacian")?;
    let emb = hypergraph::spectral_indicator(&l, c).map_err(to_py_err)?;
    Ok((
        emb.eigenvalues.iter().copied().collect(),
        matrix_to_rows(&emb.indicator),
    ))
}

/// Cluster labels from indicator rows (row-normalized k-means).
#[pyfunction]
#[pyo3(signature = (indicator, c, seed=0))]
fn labels_from_indicator(indicator: Vec<Vec<f64>>, c: usize, seed: u64) -> PyResult<Vec<usize>> {
    let f = rows_to_matrix(&indicator).map_err(PyValueError::new_err)?;
    if c == 0 || c > f.nrows() {
        return Err(PyValueError::new_err(format!(
            "c must be in 1..={}, got {c}",
            f.nrows()
        )));
    }
    Ok(eval::labels_from_indicator(&f, c, seed))
}

#[pymodule]
#[pyo3(name = "fedmsc")]
fn fedmsc_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(laplacian, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_embedding, m)?)?;
    m.add_function(wrap_pyfunction!(labels_from_indicator, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let m = rows_to_matrix(&rows).unwrap();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m[(1, 0)], 4.0);
        assert_eq!(matrix_to_rows(&m), rows);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let err = rows_to_matrix(&[vec![1.0], vec![1.0, 2.0]]).unwrap_err();
        assert!(err.contains("row 1"), "{err}");
    }
}
