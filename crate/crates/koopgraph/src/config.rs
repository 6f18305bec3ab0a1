//! Dataset manifests and run configuration.
//!
//! A run is described by one JSON file with nested `dataset`, `dynamic`,
//! `dmd`, `model`, `train` sections plus a `seed`. The dmd section picks
//! exactly one truncation: `"xi": 0.85`, `"rank": 40`, or an explicit
//! `"xi": null` for no truncation.

use crate::dmd::{ModeKind, PidmdConstraint, Truncation};
use crate::dynamics::DynamicSpec;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::io;
use crate::model::Arch;
use crate::tasks::nodeclass::NodeClassDataset;
use crate::tasks::stg::StgDataset;
use crate::tasks::synth::normalize_rows;
use crate::tasks::{LinkPredDataset, ModelConfig, TrainConfig};
use serde::{Deserialize, Deserializer, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Nodeclass,
    Linkpred,
    Stg,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StgParams {
    pub lags: usize,
    pub horizon: usize,
}

/// Describes where a dataset lives on disk and how to interpret it. Paths
/// are resolved relative to the manifest file's directory.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub kind: DatasetKind,
    pub edges: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<PathBuf>,
    #[serde(default)]
    pub directed: bool,
    #[serde(default = "default_true")]
    pub normalize_features: bool,
    #[serde(default = "default_true")]
    pub normalize_adjacency: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stg: Option<StgParams>,
    /// Node count; inferred from the feature/signal matrix when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_nodes: Option<usize>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let manifest: DatasetManifest =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            DatasetKind::Nodeclass => {
                if self.features.is_none() || self.labels.is_none() {
                    return Err(Error::Config(
                        "nodeclass manifest needs `features` and `labels`".into(),
                    ));
                }
            }
            DatasetKind::Linkpred => {
                if self.features.is_none() {
                    return Err(Error::Config("linkpred manifest needs `features`".into()));
                }
            }
            DatasetKind::Stg => {
                if self.signal.is_none() || self.stg.is_none() {
                    return Err(Error::Config(
                        "stg manifest needs `signal` and `stg: {lags, horizon}`".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// A loaded dataset of whichever kind the manifest declared.
pub enum TaskDataset {
    NodeClass(NodeClassDataset),
    LinkPred(LinkPredDataset),
    Stg(StgDataset),
}

/// Read all files referenced by a manifest and assemble the dataset.
/// `seed` drives the edge split for link prediction.
pub fn load_dataset(manifest_path: &Path, manifest: &DatasetManifest, seed: u64) -> Result<TaskDataset> {
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let edges = io::load_edge_list(&resolve(base, &manifest.edges))?;
    match manifest.kind {
        DatasetKind::Nodeclass => {
            let mut features =
                io::load_csv_matrix(&resolve(base, manifest.features.as_ref().unwrap()))?;
            if manifest.normalize_features {
                normalize_rows(&mut features);
            }
            let labels = io::load_labels(&resolve(base, manifest.labels.as_ref().unwrap()))?;
            let n = manifest.n_nodes.unwrap_or(features.rows());
            let graph = Graph::new(n, edges, manifest.directed)?;
            let splits_path = manifest.splits.as_ref().ok_or_else(|| {
                Error::Config("nodeclass manifest needs a `splits` file".into())
            })?;
            let splits = io::load_splits(&resolve(base, splits_path))?;
            let ds = NodeClassDataset {
                graph,
                features,
                labels,
                train_mask: splits.train,
                val_mask: splits.val,
                test_mask: splits.test,
            };
            ds.validate()?;
            Ok(TaskDataset::NodeClass(ds))
        }
        DatasetKind::Linkpred => {
            let mut features =
                io::load_csv_matrix(&resolve(base, manifest.features.as_ref().unwrap()))?;
            if manifest.normalize_features {
                normalize_rows(&mut features);
            }
            let n = manifest.n_nodes.unwrap_or(features.rows());
            let graph = Graph::new(n, edges, manifest.directed)?;
            Ok(TaskDataset::LinkPred(LinkPredDataset::build(graph, features, seed)?))
        }
        DatasetKind::Stg => {
            let signal = io::load_csv_matrix(&resolve(base, manifest.signal.as_ref().unwrap()))?;
            let params = manifest.stg.as_ref().unwrap();
            let n = manifest.n_nodes.unwrap_or(signal.cols());
            let graph = Graph::new(n, edges, manifest.directed)?;
            Ok(TaskDataset::Stg(StgDataset::new(graph, signal, params.lags, params.horizon)?))
        }
    }
}

// ---------------------------------------------------------------- run config

/// Serde helper distinguishing an absent key from an explicit null.
fn double_option<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Option<f64>>, D::Error> {
    Option::<f64>::deserialize(d).map(Some)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DmdSection {
    /// Energy truncation; explicit null means keep the full rank.
    #[serde(default, deserialize_with = "double_option", skip_serializing_if = "Option::is_none")]
    pub xi: Option<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default = "default_mode_kind")]
    pub mode_kind: ModeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<PidmdConstraint>,
}

fn default_mode_kind() -> ModeKind {
    ModeKind::Projected
}

impl DmdSection {
    pub fn truncation(&self) -> Result<Truncation> {
        match (&self.xi, &self.rank) {
            (Some(_), Some(_)) => {
                Err(Error::Config("dmd section sets both xi and rank; pick one".into()))
            }
            (Some(Some(xi)), None) => Ok(Truncation::Energy(*xi)),
            (Some(None), None) => Ok(Truncation::Full),
            (None, Some(r)) => Ok(Truncation::Rank(*r)),
            (None, None) => Err(Error::Config(
                "dmd section must set exactly one of xi (number or null) or rank".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelSection {
    pub arch: Arch,
    pub hidden_dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainSection {
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub dropout: f64,
    pub epochs: usize,
    pub loss: crate::model::LossKind,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Path to the dataset manifest, relative to this config file.
    pub dataset: PathBuf,
    pub dynamic: DynamicSpec,
    pub dmd: DmdSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        RunConfig::parse(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.dynamic.validate()?;
        self.dmd.truncation()?;
        self.model_config().train.validate()?;
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            arch: self.model.arch,
            train: TrainConfig {
                lr: self.train.lr,
                weight_decay: self.train.weight_decay,
                dropout: self.train.dropout,
                hidden_dim: self.model.hidden_dim,
                epochs: self.train.epochs,
                loss: self.train.loss,
            },
        }
    }

    pub fn manifest_path(&self, config_path: &Path) -> PathBuf {
        resolve(config_path.parent().unwrap_or_else(|| Path::new(".")), &self.dataset)
    }
}
