//! End-to-end pipelines wiring dynamics -> DMD -> model for node
//! classification, link prediction, spatio-temporal forecasting, and the
//! quantum-evolution demo.

pub mod linkpred;
pub mod metrics;
pub mod nodeclass;
pub mod schrodinger;
pub mod stg;
pub mod synth;

use crate::dmd::{
    dmd_fit, pidmd_fit, realify_eigenvectors, truncation_rank, ModeKind, PidmdConstraint,
    Truncation,
};
use crate::dynamics::{rollout, snapshots_from_trajectory, DynamicSpec, SnapshotPair};
use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, Graph};
use crate::kernels::{eig_general, eig_symmetric, svd, Matrix};
use crate::model::{Arch, LossKind};
use serde::{Deserialize, Serialize};

pub use linkpred::{run_link_prediction, LinkPredDataset, LinkPredOutcome};
pub use nodeclass::{run_node_classification, NodeClassDataset, NodeClassOutcome, SplitMetrics};
pub use schrodinger::{schrodinger_demo, SchrodingerReport, SchrodingerSetup};
pub use stg::{run_stg_forecast, StgDataset, StgOutcome};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub dropout: f64,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub loss: LossKind,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Contract(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if self.epochs < 1 {
            return Err(Error::Contract("epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Contract(format!("dropout must lie in [0,1), got {}", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub arch: Arch,
    #[serde(flatten)]
    pub train: TrainConfig,
}

/// One line of the training log, emitted per epoch as JSONL.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
    pub test_metric: f64,
}

/// Summary of the spectral estimate that fed the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DmdSummary {
    pub rank: usize,
    pub energy_captured: f64,
    pub warnings: Vec<String>,
}

/// Shared front half of the graph pipelines: roll the dynamic out from the
/// node features, fit DMD (or a constrained variant), and hand back the
/// realified modes for the filter layer.
///
/// For constrained fits the rank still comes from the singular values of
/// the snapshot input (the same truncation rule as plain DMD) and the
/// modes are the top eigenvectors of the constrained ambient operator.
pub fn modes_from_pipeline(
    graph: &Graph,
    features: &Matrix,
    dynamic: &DynamicSpec,
    trunc: Truncation,
    mode_kind: ModeKind,
    constraint: Option<PidmdConstraint>,
) -> Result<(Matrix, DmdSummary)> {
    let adj = normalized_adjacency(graph, false)?;
    let traj = rollout(dynamic, &adj, features)?;
    let pair = snapshots_from_trajectory(&traj)?;
    modes_from_pair(&pair, trunc, mode_kind, constraint)
}

/// Same as [`modes_from_pipeline`] but starting from an existing pair.
pub fn modes_from_pair(
    pair: &SnapshotPair,
    trunc: Truncation,
    mode_kind: ModeKind,
    constraint: Option<PidmdConstraint>,
) -> Result<(Matrix, DmdSummary)> {
    match constraint {
        None | Some(PidmdConstraint::None) => {
            let fit = dmd_fit(pair, trunc, mode_kind)?;
            let summary = DmdSummary {
                rank: fit.rank,
                energy_captured: fit.energy_captured,
                warnings: fit.warnings,
            };
            Ok((fit.modes, summary))
        }
        Some(c) => {
            let f = svd(&pair.x)?;
            let rank = truncation_rank(&f.sigma, trunc)?;
            let energy: f64 = f.sigma[..rank].iter().map(|s| s * s).sum::<f64>()
                / f.sigma.iter().map(|s| s * s).sum::<f64>();
            let k = pidmd_fit(pair, c)?;
            let modes = match c {
                PidmdConstraint::Symmetric => {
                    let (vals, vecs) = eig_symmetric(&k)?;
                    let mut order: Vec<usize> = (0..vals.len()).collect();
                    order.sort_by(|&i, &j| vals[j].abs().partial_cmp(&vals[i].abs()).unwrap());
                    Matrix::from_fn(k.rows(), rank, |i, j| vecs[(i, order[j])])
                }
                _ => {
                    let eig = eig_general(&k)?;
                    // keep a conjugate pair intact at the cut
                    let mut take = rank.min(eig.values.len());
                    if take < eig.values.len()
                        && take > 0
                        && eig.values[take - 1].im != 0.0
                        && eig.values[take - 1] == eig.values[take].conj()
                    {
                        take += 1;
                    }
                    let mut coeff = realify_eigenvectors(&eig.values[..take], &eig.vectors[..take]);
                    for j in 0..coeff.cols() {
                        let nrm = coeff.col(j).iter().map(|v| v * v).sum::<f64>().sqrt();
                        if nrm > 0.0 {
                            for i in 0..coeff.rows() {
                                coeff[(i, j)] /= nrm;
                            }
                        }
                    }
                    coeff
                }
            };
            let rank = modes.cols();
            Ok((modes, DmdSummary { rank, energy_captured: energy, warnings: vec![] }))
        }
    }
}
