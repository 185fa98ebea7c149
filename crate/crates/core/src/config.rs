//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seeds = [0, 1, 2]
//! lambda1 = 100.0
//! beta = 0.01
//! knn_k = 5
//!
//! [dataset]
//! manifest = "data/manifest.toml"   # or a [dataset.synthetic] table
//! standardize = false
//! ```
//!
//! Every hyperparameter key is optional; missing keys take the defaults of
//! [`ExperimentConfig::default`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{load_dataset, synthesize, DatasetManifest, MultiViewDataset, SynthesisSpec};
use crate::error::{Error, Result};
use crate::federation::FederationConfig;
use crate::hypergraph::LaplacianVariant;
use crate::local::{ConstraintAxis, LocalHyperparams, ManifoldMode, ProjectionMode};

/// Synthetic source; without an explicit seed each run seed generates its
/// own draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub n: usize,
    pub c: usize,
    pub view_dims: Vec<usize>,
    pub cluster_separation: f64,
    pub noise_sigma: f64,
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_latent_dim() -> usize {
    10
}

impl SyntheticSource {
    pub fn spec(&self, run_seed: u64) -> SynthesisSpec {
        SynthesisSpec {
            n: self.n,
            c: self.c,
            view_dims: self.view_dims.clone(),
            cluster_separation: self.cluster_separation,
            noise_sigma: self.noise_sigma,
            latent_dim: self.latent_dim,
            seed: self.seed.unwrap_or(run_seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSource>,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_clusters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub beta: f64,
    pub knn_k: usize,
    pub inner_iters: usize,
    pub central_iters: usize,
    pub max_rounds: usize,
    pub tol: f64,
    pub manifold_mode: ManifoldMode,
    pub manifold_fallback: bool,
    pub constraint_axis: ConstraintAxis,
    pub projection: ProjectionMode,
    pub laplacian_variant: LaplacianVariant,
    pub seeds: Vec<u64>,
    pub parallel: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let fed = FederationConfig::default();
        Self {
            dataset: DatasetConfig::default(),
            lambda1: fed.local.lambda1,
            lambda2: fed.local.lambda2,
            lambda3: fed.local.lambda3,
            beta: fed.beta,
            knn_k: fed.knn_k,
            inner_iters: fed.local.inner_iters,
            central_iters: fed.central_iters,
            max_rounds: fed.max_rounds,
            tol: fed.tol,
            manifold_mode: fed.local.manifold_mode,
            manifold_fallback: fed.local.manifold_fallback,
            constraint_axis: fed.local.constraint_axis,
            projection: fed.local.projection,
            laplacian_variant: fed.laplacian_variant,
            seeds: vec![0],
            parallel: true,
            output_dir: None,
        }
    }
}

/// Names accepted by [`ExperimentConfig::set_param`], in sweep order.
pub const SWEEPABLE: &[&str] = &[
    "lambda1",
    "lambda2",
    "lambda3",
    "beta",
    "knn_k",
    "inner_iters",
    "central_iters",
    "max_rounds",
    "tol",
];

impl ExperimentConfig {
    /// Parses a config file; relative dataset and output paths are resolved
    /// against the file's directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        if let Some(m) = &mut cfg.dataset.manifest {
            if m.is_relative() {
                *m = base.join(&*m);
            }
        }
        if let Some(o) = &mut cfg.output_dir {
            if o.is_relative() {
                *o = base.join(&*o);
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.dataset.manifest, &self.dataset.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "dataset: give either `manifest` or `synthetic`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "dataset: one of `manifest` or `synthetic` is required".into(),
                ))
            }
            _ => {}
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        self.local_params().validate()?;
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Config(format!(
                "beta must be >= 0 (got {})",
                self.beta
            )));
        }
        for (name, v) in [
            ("knn_k", self.knn_k),
            ("central_iters", self.central_iters),
            ("max_rounds", self.max_rounds),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::Config(format!(
                "tol must be >= 0 (got {})",
                self.tol
            )));
        }
        Ok(())
    }

    pub fn local_params(&self) -> LocalHyperparams {
        LocalHyperparams {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            inner_iters: self.inner_iters,
            manifold_mode: self.manifold_mode,
            manifold_fallback: self.manifold_fallback,
            constraint_axis: self.constraint_axis,
            projection: self.projection,
        }
    }

    pub fn federation_config(&self, seed: u64) -> FederationConfig {
        FederationConfig {
            local: self.local_params(),
            beta: self.beta,
            central_iters: self.central_iters,
            knn_k: self.knn_k,
            laplacian_variant: self.laplacian_variant,
            n_clusters: self.dataset.n_clusters,
            max_rounds: self.max_rounds,
            tol: self.tol,
            seed,
            parallel: self.parallel,
        }
    }

    /// Loads or generates the dataset for one run seed.
    pub fn dataset_for(&self, seed: u64) -> Result<MultiViewDataset> {
        let ds = match (&self.dataset.manifest, &self.dataset.synthetic) {
            (Some(path), None) => load_dataset(&DatasetManifest::read(path)?)?,
            (None, Some(syn)) => synthesize(&syn.spec(seed))?,
            _ => {
                self.validate()?;
                unreachable!("validate rejects other combinations")
            }
        };
        let ds = match self.dataset.n_clusters {
            Some(c) => ds.with_n_clusters(c)?,
            None => ds,
        };
        Ok(if self.dataset.standardize {
            ds.standardized()
        } else {
            ds
        })
    }

    /// Sets a numeric hyperparameter by name.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!(
                    "{name} needs a non-negative integer, got {v}"
                )))
            }
        };
        match name {
            "lambda1" => self.lambda1 = value,
            "lambda2" => self.lambda2 = value,
            "lambda3" => self.lambda3 = value,
            "beta" => self.beta = value,
            "tol" => self.tol = value,
            "knn_k" => self.knn_k = as_count(value)?,
            "inner_iters" => self.inner_iters = as_count(value)?,
            "central_iters" => self.central_iters = as_count(value)?,
            "max_rounds" => self.max_rounds = as_count(value)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown hyperparameter {other:?} (expected one of {})",
                    SWEEPABLE.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn get_param(&self, name: &str) -> Option<f64> {
        Some(match name {
            "lambda1" => self.lambda1,
            "lambda2" => self.lambda2,
            "lambda3" => self.lambda3,
            "beta" => self.beta,
            "tol" => self.tol,
            "knn_k" => self.knn_k as f64,
            "inner_iters" => self.inner_iters as f64,
            "central_iters" => self.central_iters as f64,
            "max_rounds" => self.max_rounds as f64,
            _ => return None,
        })
    }
}

/// Hyperparameter grids searched by default.
pub fn default_lambda_grid() -> Vec<f64> {
    vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3]
}

pub fn default_beta_grid() -> Vec<f64> {
    vec![1e-2, 1e-1, 1.0, 1e1, 1e2]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_synthetic_config() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            seeds = [1, 2]
            beta = 0.5
            laplacian_variant = "pairwise_graph"

            [dataset.synthetic]
            n = 30
            c = 3
            view_dims = [4, 6]
            cluster_separation = 5.0
            noise_sigma = 0.2
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.beta, 0.5);
        assert_eq!(cfg.laplacian_variant, LaplacianVariant::PairwiseGraph);
        assert_eq!(cfg.knn_k, ExperimentConfig::default().knn_k);
        let a = cfg.dataset_for(1).unwrap();
        let b = cfg.dataset_for(2).unwrap();
        assert_ne!(a, b);
        assert_eq!(a.n_samples(), 30);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml("lambda9 = 1.0").is_err());
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_err(), "no dataset");
        cfg.dataset.manifest = Some("x".into());
        cfg.validate().unwrap();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        cfg.seeds = vec![0];
        cfg.lambda1 = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn set_and_get_params() {
        let mut cfg = ExperimentConfig::default();
        for name in SWEEPABLE {
            cfg.set_param(name, 3.0).unwrap();
            assert_eq!(cfg.get_param(name), Some(3.0));
        }
        assert!(cfg.set_param("knn_k", 2.5).is_err());
        assert!(cfg.set_param("nope", 1.0).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.manifest = Some("m.toml".into());
        cfg.seeds = vec![3, 4];
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
