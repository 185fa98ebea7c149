//! Multi-view datasets: loading from delimited text, synthetic generation and
//! the vertical split of views across nodes.
//!
//! Views are stored feature-major: view `k` is a `d_k × n` matrix whose column
//! `j` is sample `j`. Files on disk default to the opposite (one sample per
//! row), which is what most public multi-view sets ship with; the manifest's
//! `rows_are_samples` flag selects the orientation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Matrix;

/// One node's private feature block, `d_k × n`.
pub type ViewMatrix = Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    views: Vec<ViewMatrix>,
    labels: Option<Vec<usize>>,
    n_clusters: Option<usize>,
}

impl MultiViewDataset {
    /// Validates and assembles a dataset. When labels are given they must be
    /// contiguous ids `0..c`; `n_clusters`, if also given, must agree with them.
    pub fn new(
        views: Vec<ViewMatrix>,
        labels: Option<Vec<usize>>,
        n_clusters: Option<usize>,
    ) -> Result<Self> {
        let first = views
            .first()
            .ok_or_else(|| Error::InvalidDataset("dataset has no views".into()))?;
        let n = first.ncols();
        if n == 0 {
            return Err(Error::InvalidDataset("dataset has no samples".into()));
        }
        for (k, v) in views.iter().enumerate() {
            if v.nrows() == 0 {
                return Err(Error::InvalidDataset(format!("view {k} has no features")));
            }
            if v.ncols() != n {
                return Err(Error::InvalidDataset(format!(
                    "view {k} has {} samples, view 0 has {n}",
                    v.ncols()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "view {k} contains non-finite values"
                )));
            }
        }
        let n_clusters = match &labels {
            Some(labels) => {
                if labels.len() != n {
                    return Err(Error::InvalidDataset(format!(
                        "{} labels for {n} samples",
                        labels.len()
                    )));
                }
                let c = labels.iter().max().map_or(0, |m| m + 1);
                let mut seen = vec![false; c];
                for &l in labels {
                    seen[l] = true;
                }
                if let Some(missing) = seen.iter().position(|s| !s) {
                    return Err(Error::InvalidDataset(format!(
                        "cluster id {missing} never occurs in the labels"
                    )));
                }
                if let Some(expected) = n_clusters {
                    if expected != c {
                        return Err(Error::InvalidDataset(format!(
                            "labels contain {c} clusters, {expected} requested"
                        )));
                    }
                }
                Some(c)
            }
            None => n_clusters,
        };
        if let Some(c) = n_clusters {
            if c == 0 || c > n {
                return Err(Error::InvalidDataset(format!(
                    "cluster count {c} out of range for {n} samples"
                )));
            }
        }
        Ok(Self {
            views,
            labels,
            n_clusters,
        })
    }

    pub fn views(&self) -> &[ViewMatrix] {
        &self.views
    }

    pub fn view(&self, k: usize) -> &ViewMatrix {
        &self.views[k]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_samples(&self) -> usize {
        self.views[0].ncols()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.nrows()).collect()
    }

    pub fn n_clusters(&self) -> Option<usize> {
        self.n_clusters
    }

    pub fn with_n_clusters(mut self, c: usize) -> Result<Self> {
        if let Some(existing) = self.n_clusters {
            if self.labels.is_some() && existing != c {
                return Err(Error::InvalidDataset(format!(
                    "labels contain {existing} clusters, {c} requested"
                )));
            }
        }
        if c == 0 || c > self.n_samples() {
            return Err(Error::InvalidDataset(format!(
                "cluster count {c} out of range for {} samples",
                self.n_samples()
            )));
        }
        self.n_clusters = Some(c);
        Ok(self)
    }

    /// Per-feature standardization to zero mean and unit variance. Constant
    /// features are centered and left at zero.
    pub fn standardized(&self) -> Self {
        let views = self
            .views
            .iter()
            .map(|v| {
                let n = v.ncols() as f64;
                let mut out = v.clone();
                for mut row in out.row_iter_mut() {
                    let mean = row.iter().sum::<f64>() / n;
                    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                    let scale = if var > 0.0 { var.sqrt().recip() } else { 0.0 };
                    for x in row.iter_mut() {
                        *x = (*x - mean) * scale;
                    }
                }
                out
            })
            .collect();
        Self {
            views,
            labels: self.labels.clone(),
            n_clusters: self.n_clusters,
        }
    }
}

// ---------------------------------------------------------------------------
// Manifest and delimited-text IO

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Delimiter {
    /// Comma if the line contains one, otherwise runs of whitespace.
    #[default]
    Auto,
    Char(char),
    Whitespace,
}

impl Delimiter {
    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Delimiter::Auto if line.contains(',') => line.split(',').map(str::trim).collect(),
            Delimiter::Auto | Delimiter::Whitespace => line.split_whitespace().collect(),
            Delimiter::Char(c) => line.split(*c).map(str::trim).collect(),
        }
    }
}

impl fmt::Display for Delimiter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Delimiter::Auto => f.write_str("auto"),
            Delimiter::Whitespace => f.write_str("whitespace"),
            Delimiter::Char(c) => write!(f, "{c}"),
        }
    }
}

impl TryFrom<String> for Delimiter {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        match s.as_str() {
            "auto" => Ok(Delimiter::Auto),
            "whitespace" | "space" => Ok(Delimiter::Whitespace),
            "tab" => Ok(Delimiter::Char('\t')),
            _ => {
                let mut chars = s.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Ok(Delimiter::Char(c)),
                    _ => Err(format!("unsupported delimiter {s:?}")),
                }
            }
        }
    }
}

impl From<Delimiter> for String {
    fn from(d: Delimiter) -> String {
        d.to_string()
    }
}

impl Serialize for Delimiter {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Delimiter {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Delimiter::try_from(s).map_err(serde::de::Error::custom)
    }
}

fn default_true() -> bool {
    true
}

/// On-disk description of a dataset: one matrix file per view plus optional
/// labels. Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub views: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub rows_are_samples: bool,
    #[serde(default)]
    pub delimiter: Delimiter,
}

impl DatasetManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest = toml::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if manifest.views.is_empty() {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                message: "no views listed".into(),
            });
        }
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for v in &mut manifest.views {
            if v.is_relative() {
                *v = base.join(&*v);
            }
        }
        if let Some(l) = &mut manifest.labels {
            if l.is_relative() {
                *l = base.join(&*l);
            }
        }
        Ok(manifest)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string(self).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Reads a header-free numeric matrix; rows of the file become rows of the
/// returned matrix. Blank lines and lines starting with `#` are skipped.
pub fn read_matrix(path: impl AsRef<Path>, delimiter: Delimiter) -> Result<Matrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cells = delimiter.split(trimmed);
        let mut row = Vec::with_capacity(cells.len());
        for (col, cell) in cells.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                path: path.to_path_buf(),
                line: idx + 1,
                column: col + 1,
                cell: cell.to_string(),
            })?;
            row.push(value);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::RaggedMatrix {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    expected: first.len(),
                    found: row.len(),
                });
            }
        }
        rows.push(row);
    }
    let n_cols = match rows.first() {
        Some(r) => r.len(),
        None => {
            return Err(Error::EmptyMatrix {
                path: path.to_path_buf(),
            })
        }
    };
    Ok(Matrix::from_fn(rows.len(), n_cols, |i, j| rows[i][j]))
}

/// Writes a matrix one row per line with the shortest round-trip float text.
pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix, delimiter: char) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(m.len() * 12);
    let sep = delimiter.to_string();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&line.join(&sep));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads integer labels (any whitespace or comma separation) and remaps them
/// to contiguous ids in increasing order of the original values.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut raw = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        for (col, cell) in Delimiter::Auto.split(trimmed).iter().enumerate() {
            let value: i64 = cell.parse().map_err(|_| Error::NonNumeric {
                path: path.to_path_buf(),
                line: idx + 1,
                column: col + 1,
                cell: cell.to_string(),
            })?;
            raw.push(value);
        }
    }
    if raw.is_empty() {
        return Err(Error::EmptyMatrix {
            path: path.to_path_buf(),
        });
    }
    Ok(remap_labels(&raw))
}

/// Order-preserving relabeling onto `0..c`.
pub fn remap_labels(raw: &[i64]) -> Vec<usize> {
    let mut distinct = raw.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    raw.iter()
        .map(|v| distinct.binary_search(v).expect("value is present"))
        .collect()
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(manifest: &DatasetManifest) -> Result<MultiViewDataset> {
    let mut views = Vec::with_capacity(manifest.views.len());
    let mut n: Option<usize> = None;
    for path in &manifest.views {
        let raw = read_matrix(path, manifest.delimiter)?;
        let view = if manifest.rows_are_samples {
            raw.transpose()
        } else {
            raw
        };
        match n {
            None => n = Some(view.ncols()),
            Some(expected) if expected != view.ncols() => {
                return Err(Error::SampleCountMismatch {
                    path: path.clone(),
                    expected,
                    found: view.ncols(),
                })
            }
            Some(_) => {}
        }
        views.push(view);
    }
    let labels = match &manifest.labels {
        Some(path) => {
            let labels = read_labels(path)?;
            let expected = n.unwrap_or(0);
            if labels.len() != expected {
                return Err(Error::SampleCountMismatch {
                    path: path.clone(),
                    expected,
                    found: labels.len(),
                });
            }
            Some(labels)
        }
        None => None,
    };
    MultiViewDataset::new(views, labels, None)
}

/// Writes `view_<k>.csv` (rows are samples), `labels.csv` and
/// `manifest.toml` into `dir`, returning the manifest path.
pub fn write_dataset(dataset: &MultiViewDataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut view_paths = Vec::with_capacity(dataset.n_views());
    for (k, view) in dataset.views().iter().enumerate() {
        let name = format!("view_{}.csv", k + 1);
        write_matrix(dir.join(&name), &view.transpose(), ',')?;
        view_paths.push(PathBuf::from(name));
    }
    let labels = match dataset.labels() {
        Some(labels) => {
            write_labels(dir.join("labels.csv"), labels)?;
            Some(PathBuf::from("labels.csv"))
        }
        None => None,
    };
    let manifest = DatasetManifest {
        views: view_paths,
        labels,
        rows_are_samples: true,
        delimiter: Delimiter::Char(','),
    };
    let path = dir.join("manifest.toml");
    manifest.write(&path)?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// Synthetic data

fn default_latent_dim() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSpec {
    pub n: usize,
    pub c: usize,
    pub view_dims: Vec<usize>,
    pub cluster_separation: f64,
    pub noise_sigma: f64,
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SynthesisSpec {
    pub fn validate(&self) -> Result<()> {
        if self.c < 2 || self.n < self.c {
            return Err(Error::InvalidParameter(format!(
                "synthesis needs n >= c >= 2 (n={}, c={})",
                self.n, self.c
            )));
        }
        if self.view_dims.is_empty() || self.view_dims.contains(&0) {
            return Err(Error::InvalidParameter(
                "every view needs at least one feature".into(),
            ));
        }
        if !(self.cluster_separation >= 0.0 && self.cluster_separation.is_finite()) {
            return Err(Error::InvalidParameter(
                "cluster_separation must be finite and >= 0".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(
                "noise_sigma must be finite and >= 0".into(),
            ));
        }
        if self.latent_dim == 0 {
            return Err(Error::InvalidParameter(
                "latent_dim must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Gaussian-blob clusters in a latent space pushed through a random linear
/// map per view, plus isotropic noise.
///
/// Centers are pairwise `cluster_separation` apart: scaled orthonormal
/// directions when `latent_dim >= c`, evenly spaced on a random line
/// otherwise. Sample `j` belongs to cluster `j mod c`. View maps have
/// `N(0, 1/d_k)` entries so latent distances are roughly preserved.
pub fn synthesize(spec: &SynthesisSpec) -> Result<MultiViewDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, c, latent) = (spec.n, spec.c, spec.latent_dim);

    let centers = if latent >= c {
        let gauss = Matrix::from_fn(latent, c, |_, _| StandardNormal.sample(&mut rng));
        let q = gauss.qr().q();
        q * (spec.cluster_separation / std::f64::consts::SQRT_2)
    } else {
        let mut dir =
            nalgebra::DVector::<f64>::from_fn(latent, |_, _| StandardNormal.sample(&mut rng));
        let norm = dir.norm();
        if norm > 0.0 {
            dir /= norm;
        } else {
            dir[0] = 1.0;
        }
        Matrix::from_fn(latent, c, |r, i| {
            dir[r] * spec.cluster_separation * i as f64
        })
    };

    let labels: Vec<usize> = (0..n).map(|j| j % c).collect();
    let mut views = Vec::with_capacity(spec.view_dims.len());
    let noise = Normal::new(0.0, spec.noise_sigma).expect("noise_sigma validated");
    for &d in &spec.view_dims {
        let scale = (d as f64).sqrt().recip();
        let map = Matrix::from_fn(d, latent, |_, _| {
            scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let projected = &map * &centers;
        let mut view = Matrix::zeros(d, n);
        for j in 0..n {
            view.set_column(j, &projected.column(labels[j]));
        }
        if spec.noise_sigma > 0.0 {
            for x in view.iter_mut() {
                *x += noise.sample(&mut rng);
            }
        }
        views.push(view);
    }
    MultiViewDataset::new(views, Some(labels), Some(c))
}

// ---------------------------------------------------------------------------
// Vertical partition

/// A node's view of the federation: its own feature block and nothing else.
#[derive(Debug, Clone)]
pub struct NodeHandle {
    id: usize,
    view: Arc<ViewMatrix>,
}

impl NodeHandle {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn view(&self) -> &ViewMatrix {
        &self.view
    }

    /// Access a view by owner id; only the node's own view is reachable.
    pub fn view_of(&self, owner: usize) -> Result<&ViewMatrix> {
        if owner == self.id {
            Ok(&self.view)
        } else {
            Err(Error::AccessDenied {
                requester: self.id,
                owner,
            })
        }
    }

    pub fn n_features(&self) -> usize {
        self.view.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.view.ncols()
    }
}

/// Node `k` receives exactly view `k`. Labels stay with the caller.
pub fn partition(dataset: &MultiViewDataset) -> Vec<NodeHandle> {
    dataset
        .views()
        .iter()
        .enumerate()
        .map(|(id, v)| NodeHandle {
            id,
            view: Arc::new(v.clone()),
        })
        .collect()
}
