//! Initial feature dynamics on a graph. Rolling one of these out produces
//! the snapshot pairs that the DMD estimators consume.

use crate::error::{Error, Result};
use crate::kernels::{eig_symmetric, Matrix};
use serde::{Deserialize, Serialize};

/// Entry magnitude beyond which a rollout is declared divergent. The
/// Allen-Cahn reaction term is cubic, so explicit stepping can blow up.
const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DynamicKind {
    /// h -> A h
    Gcn,
    /// h -> A^s h
    Sgc { s: u32 },
    /// h -> alpha A^2 h + (1 - alpha) h
    Dmdpp { alpha: f64 },
    /// h -> (A - B) h + h (.) (1 - h (.) h), with B equal to a scalar b on
    /// the support of A and zero elsewhere.
    Acmp { b: f64 },
    /// h -> exp(-tau (I - A)) h, computed by symmetric eigendecomposition.
    Heat { tau: f64 },
    /// h -> M h for an explicit operator; escape hatch, not expressible in
    /// the JSON config.
    #[serde(skip)]
    CustomLinear { op: Matrix },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DynamicSpec {
    #[serde(flatten)]
    pub kind: DynamicKind,
    pub steps: usize,
}

impl DynamicSpec {
    pub fn new(kind: DynamicKind, steps: usize) -> Result<Self> {
        let spec = DynamicSpec { kind, steps };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::Contract("dynamic steps must be >= 1".into()));
        }
        match &self.kind {
            DynamicKind::Sgc { s } if *s < 1 => {
                Err(Error::Contract("sgc power s must be >= 1".into()))
            }
            DynamicKind::Dmdpp { alpha } if !(0.0..=1.0).contains(alpha) => {
                Err(Error::Contract(format!("dmdpp alpha must lie in [0,1], got {alpha}")))
            }
            DynamicKind::Acmp { b } if !(*b >= 0.0) => {
                Err(Error::Contract(format!("acmp b must be >= 0, got {b}")))
            }
            DynamicKind::Heat { tau } if !(*tau >= 0.0) || !tau.is_finite() => {
                Err(Error::Contract(format!("heat tau must be finite and >= 0, got {tau}")))
            }
            _ => Ok(()),
        }
    }
}

/// One step of the dynamic applied to state `h` (rows = nodes).
pub fn step(kind: &DynamicKind, adj: &Matrix, h: &Matrix) -> Result<Matrix> {
    let expected_rows = match kind {
        DynamicKind::CustomLinear { op } => op.cols(),
        _ => adj.rows(),
    };
    if h.rows() != expected_rows {
        return Err(Error::Contract(format!(
            "state has {} rows but the operator acts on {}",
            h.rows(),
            expected_rows
        )));
    }
    Ok(match kind {
        DynamicKind::Gcn => adj.matmul(h),
        DynamicKind::Sgc { s } => {
            let mut out = adj.matmul(h);
            for _ in 1..*s {
                out = adj.matmul(&out);
            }
            out
        }
        DynamicKind::Dmdpp { alpha } => {
            let a2h = adj.matmul(&adj.matmul(h));
            a2h.scale(*alpha).add(&h.scale(1.0 - alpha))
        }
        DynamicKind::Acmp { b } => {
            let diffusion = adj.matmul(h);
            let support = adj.map(|v| if v != 0.0 { 1.0 } else { 0.0 });
            let repulsion = support.matmul(h).scale(*b);
            let reaction = h.hadamard(&h.map(|v| 1.0 - v * v));
            diffusion.sub(&repulsion).add(&reaction)
        }
        DynamicKind::Heat { tau } => heat_operator(adj, *tau)?.matmul(h),
        DynamicKind::CustomLinear { op } => op.matmul(h),
    })
}

/// exp(-tau L) with L = I - A, via symmetric eigendecomposition. Exact up
/// to the eigensolver, which is what makes the semigroup property testable.
pub fn heat_operator(adj: &Matrix, tau: f64) -> Result<Matrix> {
    let n = adj.rows();
    let mut lap = adj.scale(-1.0);
    for i in 0..n {
        lap[(i, i)] += 1.0;
    }
    let (vals, vecs) = eig_symmetric(&lap)?;
    let mut scaled = vecs.clone();
    for j in 0..n {
        let decay = (-tau * vals[j]).exp();
        for i in 0..n {
            scaled[(i, j)] *= decay;
        }
    }
    Ok(scaled.matmul(&vecs.transpose()))
}

/// The linear operator a dynamic applies per step, when one exists (all
/// kinds except ACMP).
pub fn effective_operator(kind: &DynamicKind, adj: &Matrix) -> Result<Option<Matrix>> {
    Ok(match kind {
        DynamicKind::Gcn => Some(adj.clone()),
        DynamicKind::Sgc { s } => {
            let mut op = adj.clone();
            for _ in 1..*s {
                op = op.matmul(adj);
            }
            Some(op)
        }
        DynamicKind::Dmdpp { alpha } => {
            let mut op = adj.matmul(adj).scale(*alpha);
            for i in 0..op.rows() {
                op[(i, i)] += 1.0 - alpha;
            }
            Some(op)
        }
        DynamicKind::Heat { tau } => Some(heat_operator(adj, *tau)?),
        DynamicKind::CustomLinear { op } => Some(op.clone()),
        DynamicKind::Acmp { .. } => None,
    })
}

/// A rolled-out trajectory plus the spec and operator that produced it.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<Matrix>,
    pub spec: DynamicSpec,
    pub adj: Matrix,
}

/// Roll the dynamic out for `spec.steps` steps from `h0`. The trajectory
/// includes the initial state, so its length is steps + 1.
pub fn rollout(spec: &DynamicSpec, adj: &Matrix, h0: &Matrix) -> Result<Trajectory> {
    spec.validate()?;
    let mut states = Vec::with_capacity(spec.steps + 1);
    states.push(h0.clone());
    for k in 0..spec.steps {
        let next = step(&spec.kind, adj, &states[k])?;
        if !next.is_finite() || next.max_abs() > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                step: k + 1,
                detail: format!(
                    "state magnitude reached {:.3e} (limit {DIVERGENCE_LIMIT:.0e})",
                    next.max_abs()
                ),
            });
        }
        states.push(next);
    }
    Ok(Trajectory { states, spec: spec.clone(), adj: adj.clone() })
}

/// Aligned snapshot matrices: column j of `y` is the one-step image of
/// column j of `x` under the generating dynamic.
#[derive(Debug, Clone)]
pub struct SnapshotPair {
    pub x: Matrix,
    pub y: Matrix,
    pub meta: Option<DynamicSpec>,
}

impl SnapshotPair {
    /// Pair from raw data (signal transitions, externally generated states).
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.rows() != y.rows() || x.cols() != y.cols() {
            return Err(Error::Contract(format!(
                "snapshot shapes differ: x is {}x{}, y is {}x{}",
                x.rows(),
                x.cols(),
                y.rows(),
                y.cols()
            )));
        }
        Ok(SnapshotPair { x, y, meta: None })
    }
}

/// Stack a trajectory into snapshot matrices. Columns are ordered by
/// (step, feature): a trajectory of T states with d feature columns yields
/// m = (T-1) * d snapshot columns. For linear dynamics the construction
/// verifies y = op * x before returning.
pub fn snapshots_from_trajectory(traj: &Trajectory) -> Result<SnapshotPair> {
    if traj.states.len() < 2 {
        return Err(Error::Contract("trajectory must contain at least 2 states".into()));
    }
    let t = traj.states.len();
    let x_blocks: Vec<&Matrix> = traj.states[..t - 1].iter().collect();
    let y_blocks: Vec<&Matrix> = traj.states[1..].iter().collect();
    let x = Matrix::hcat(&x_blocks);
    let y = Matrix::hcat(&y_blocks);
    if let Some(op) = effective_operator(&traj.spec.kind, &traj.adj)? {
        let err = op.matmul(&x).sub(&y).max_abs();
        let scale = y.max_abs().max(1.0);
        if err > 1e-10 * scale {
            return Err(Error::Numerical(format!(
                "snapshot consistency check failed: |op*x - y| = {err:.3e}"
            )));
        }
    }
    Ok(SnapshotPair { x, y, meta: Some(traj.spec.clone()) })
}
