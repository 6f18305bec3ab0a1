//! Free-particle quantum evolution on a 1-D lattice, used to demonstrate
//! that the constrained estimators respect physical structure.
//!
//! Ground truth integrates i hbar dpsi/dt = H psi with the Crank-Nicolson
//! one-step map, H = (hbar^2 / 2m) L for the chain-graph Laplacian L. The
//! CN map is exactly unitary for Hermitian H, so the truth conserves the
//! norm up to round-off; the orthogonal-constrained estimate conserves it
//! by construction.

use crate::dmd::{pidmd_fit, PidmdConstraint};
use crate::dynamics::SnapshotPair;
use crate::error::{Error, Result};
use crate::graph::chain_graph;
use crate::kernels::Matrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchrodingerSetup {
    pub n_nodes: usize,
    /// Initial packet center, in lattice units.
    pub x0: f64,
    pub dt: f64,
    /// CN steps to integrate; also the number of snapshot pairs.
    pub steps: usize,
    pub hbar: f64,
    pub mass: f64,
    /// Packet momentum per lattice spacing.
    pub wavenumber: f64,
    /// Packet width, in lattice units.
    pub sigma: f64,
    /// Constraint used for the physics-informed rollout.
    pub constraint: PidmdConstraint,
    /// Rollout length for the conservation checks.
    pub rollout_steps: usize,
}

impl Default for SchrodingerSetup {
    fn default() -> Self {
        SchrodingerSetup {
            n_nodes: 100,
            x0: 2.0,
            dt: 0.1,
            steps: 240,
            hbar: 1.0,
            mass: 1.0,
            wavenumber: std::f64::consts::FRAC_PI_4,
            sigma: 10.0,
            constraint: PidmdConstraint::Orthogonal,
            rollout_steps: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchrodingerReport {
    /// Max relative norm drift of the CN ground truth over all steps.
    pub truth_norm_drift: f64,
    /// Relative error of the unconstrained one-step prediction on the
    /// held-out final transition.
    pub dmd_onestep_err: f64,
    /// Max relative state error of the constrained rollout vs truth.
    pub pidmd_rollout_err: f64,
    /// Max relative norm drift of the constrained rollout.
    pub pidmd_norm_drift: f64,
    pub constraint: PidmdConstraint,
}

/// Demo outputs: the report plus the real-form trajectories (2n x T+1),
/// for external plotting.
#[derive(Debug)]
pub struct SchrodingerOutcome {
    pub report: SchrodingerReport,
    pub truth: Matrix,
    pub pidmd_recon: Matrix,
}

/// Thomas solve for a complex tridiagonal system with constant
/// off-diagonal `off`. The CN matrix is strictly diagonally dominant, so
/// no pivoting is needed.
fn tridiag_solve(diag: &[Complex64], off: Complex64, rhs: &[Complex64]) -> Vec<Complex64> {
    let n = diag.len();
    let mut c_prime = vec![Complex64::ZERO; n];
    let mut d_prime = vec![Complex64::ZERO; n];
    c_prime[0] = off / diag[0];
    d_prime[0] = rhs[0] / diag[0];
    for i in 1..n {
        let up = if i + 1 < n { off } else { Complex64::ZERO };
        let denom = diag[i] - off * c_prime[i - 1];
        c_prime[i] = up / denom;
        d_prime[i] = (rhs[i] - off * d_prime[i - 1]) / denom;
    }
    let mut x = vec![Complex64::ZERO; n];
    x[n - 1] = d_prime[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d_prime[i] - c_prime[i] * x[i + 1];
    }
    x
}

fn norm(psi: &[Complex64]) -> f64 {
    psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Run the demo: CN truth trajectory, unconstrained one-step check, and a
/// constrained rollout with conservation diagnostics.
pub fn schrodinger_demo(setup: &SchrodingerSetup) -> Result<SchrodingerOutcome> {
    if setup.dt <= 0.0 || !setup.dt.is_finite() {
        return Err(Error::Contract(format!("dt must be positive, got {}", setup.dt)));
    }
    if setup.steps < 2 {
        return Err(Error::Contract("need at least 2 steps".into()));
    }
    if setup.sigma <= 0.0 {
        return Err(Error::Contract("packet width sigma must be positive".into()));
    }
    let n = setup.n_nodes;
    let graph = chain_graph(n)?;

    // H = (hbar^2 / 2m) (D - A) on the chain: tridiagonal, so the CN solve
    // stays a Thomas sweep.
    let scale = setup.hbar * setup.hbar / (2.0 * setup.mass);
    let adjacency = graph.adjacency();
    let h_diag: Vec<f64> =
        (0..n).map(|i| scale * adjacency.row(i).iter().sum::<f64>()).collect();
    let h_off = -scale;

    // CN: (I + i dt/(2 hbar) H) psi_{t+1} = (I - i dt/(2 hbar) H) psi_t
    let alpha = Complex64::new(0.0, setup.dt / (2.0 * setup.hbar));
    let a_diag: Vec<Complex64> =
        h_diag.iter().map(|&d| Complex64::ONE + alpha * d).collect();
    let a_off = alpha * h_off;

    // Gaussian packet at x0, cosine-modulated real part and sine-modulated
    // imaginary part, normalized.
    let mut psi: Vec<Complex64> = (0..n)
        .map(|i| {
            let x = i as f64;
            let g = (-(x - setup.x0).powi(2) / (2.0 * setup.sigma * setup.sigma)).exp();
            Complex64::new(g * (setup.wavenumber * x).cos(), g * (setup.wavenumber * x).sin())
        })
        .collect();
    let n0 = norm(&psi);
    if n0 <= 0.0 {
        return Err(Error::Degenerate("initial wave packet is numerically zero".into()));
    }
    for z in psi.iter_mut() {
        *z /= n0;
    }

    // integrate and record the real-form trajectory z = [Re psi; Im psi]
    let mut truth = Matrix::zeros(2 * n, setup.steps + 1);
    let mut truth_norm_drift = 0.0_f64;
    let store = |m: &mut Matrix, col: usize, psi: &[Complex64]| {
        for (i, z) in psi.iter().enumerate() {
            m[(i, col)] = z.re;
            m[(n + i, col)] = z.im;
        }
    };
    store(&mut truth, 0, &psi);
    for t in 0..setup.steps {
        // rhs = B psi with B = conj(A) applied as tridiagonal product
        let mut rhs = vec![Complex64::ZERO; n];
        let b_off = -a_off;
        for i in 0..n {
            let mut acc = (Complex64::ONE - alpha * h_diag[i]) * psi[i];
            if i > 0 {
                acc += b_off * psi[i - 1];
            }
            if i + 1 < n {
                acc += b_off * psi[i + 1];
            }
            rhs[i] = acc;
        }
        psi = tridiag_solve(&a_diag, a_off, &rhs);
        truth_norm_drift = truth_norm_drift.max((norm(&psi) - 1.0).abs());
        store(&mut truth, t + 1, &psi);
    }

    // snapshot pairs from the real-form trajectory; hold out the last
    // transition for the one-step check
    let t_fit = setup.steps - 1;
    let x = truth.col_slice(0, t_fit);
    let y = truth.col_slice(1, t_fit + 1);
    let pair = SnapshotPair::new(x.clone(), y.clone())?;
    // The packet excites high-frequency modes at amplitudes spanning many
    // orders of magnitude; a cutoff near sqrt(eps) balances the error from
    // discarded directions against conditioning error in the inverse.
    let k_plain = y.matmul(&crate::kernels::pinv(&x, 1e-8)?);
    let z_last = Matrix::from_column(&truth.col(setup.steps - 1));
    let z_next = truth.col(setup.steps);
    let pred = k_plain.matmul(&z_last);
    let err: f64 = pred
        .col(0)
        .iter()
        .zip(&z_next)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let dmd_onestep_err = err / crate::kernels::norm2(&z_next);

    // constrained estimate and rollout
    let k_pi = pidmd_fit(&pair, setup.constraint)?;
    let rollout_steps = setup.rollout_steps.min(setup.steps);
    let mut recon = Matrix::zeros(2 * n, rollout_steps + 1);
    let mut state = Matrix::from_column(&truth.col(0));
    for i in 0..2 * n {
        recon[(i, 0)] = state[(i, 0)];
    }
    let z0_norm = state.frobenius_norm();
    let mut pidmd_norm_drift = 0.0_f64;
    let mut pidmd_rollout_err = 0.0_f64;
    for t in 0..rollout_steps {
        state = k_pi.matmul(&state);
        for i in 0..2 * n {
            recon[(i, t + 1)] = state[(i, 0)];
        }
        pidmd_norm_drift =
            pidmd_norm_drift.max((state.frobenius_norm() - z0_norm).abs() / z0_norm);
        let truth_col = truth.col(t + 1);
        let err: f64 = state
            .col(0)
            .iter()
            .zip(&truth_col)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        pidmd_rollout_err = pidmd_rollout_err.max(err / crate::kernels::norm2(&truth_col));
    }

    Ok(SchrodingerOutcome {
        report: SchrodingerReport {
            truth_norm_drift,
            dmd_onestep_err,
            pidmd_rollout_err,
            pidmd_norm_drift,
            constraint: setup.constraint,
        },
        truth,
        pidmd_recon: recon,
    })
}
