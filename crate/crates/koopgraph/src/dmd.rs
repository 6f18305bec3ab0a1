//! Core estimators: truncated DMD with projected/exact modes,
//! physics-informed constrained variants, and the slow-subspace diagnostic.

use crate::dynamics::SnapshotPair;
use crate::error::{Error, Result};
use crate::kernels::{
    eig_general, eig_symmetric, largest_principal_angle, lstsq, pinv, svd, Matrix, DEFAULT_RCOND,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// How the retained rank is chosen from the singular values of x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Truncation {
    /// Smallest r whose cumulative squared-singular-value energy reaches
    /// the given fraction of the total. Must lie in (0, 1].
    Energy(f64),
    /// Explicit rank.
    Rank(usize),
    /// Keep the full numerical rank.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    /// Psi = M_r U(K~): modes lifted through the left singular vectors.
    Projected,
    /// Psi = Y V_r Sigma_r^{-1} U(K~): modes lifted through the output data.
    Exact,
}

/// Result of a truncated DMD fit.
#[derive(Debug, Clone)]
pub struct DmdResult {
    pub rank: usize,
    /// Full singular-value list of x, non-increasing.
    pub sing_values: Vec<f64>,
    /// Reduced operator K~ = M_r^T Y V_r Sigma_r^{-1}, r x r.
    pub k_reduced: Matrix,
    /// Eigenvalues of K~, ordered by descending |lambda|.
    pub eigenvalues: Vec<Complex64>,
    /// Realified modes, N x r, unit-norm columns. Each complex conjugate
    /// eigenpair contributes the two real columns (Re v, Im v).
    pub modes: Matrix,
    pub mode_kind: ModeKind,
    /// Fraction of squared singular-value energy retained, in (0, 1].
    pub energy_captured: f64,
    pub warnings: Vec<String>,
}

/// Singular values with a ratio to sigma_1 below this are never retained.
const RANK_FLOOR: f64 = 1e-12;
/// Ratio below which a retained singular value earns an ill-conditioning
/// warning.
const ILL_CONDITIONED: f64 = 1e-14;
/// Two singular values within this relative distance of each other are a
/// tie; energy-based truncation never splits a tie.
const TIE_TOL: f64 = 1e-12;

/// Smallest r whose cumulative squared energy reaches xi. Pure function of
/// the singular values; the oracle in the acceptance suite re-implements
/// exactly this sum independently.
pub fn rank_for_energy(sigma: &[f64], xi: f64) -> usize {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total <= 0.0 {
        return 0;
    }
    let mut cum = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        cum += s * s;
        if cum >= xi * total {
            return i + 1;
        }
    }
    sigma.len()
}

fn numerical_rank(sigma: &[f64]) -> usize {
    let floor = sigma.first().copied().unwrap_or(0.0) * RANK_FLOOR;
    sigma.iter().take_while(|s| **s > floor).count()
}

fn resolve_rank(sigma: &[f64], trunc: Truncation, warnings: &mut Vec<String>) -> Result<usize> {
    let k_num = numerical_rank(sigma);
    if k_num == 0 {
        return Err(Error::Degenerate("snapshot matrix x is numerically zero".into()));
    }
    let sigma1 = sigma[0];
    let r = match trunc {
        Truncation::Rank(r) => {
            if r < 1 || r > sigma.len() {
                return Err(Error::Contract(format!(
                    "requested rank {r} outside 1..={}",
                    sigma.len()
                )));
            }
            if r > k_num {
                warnings.push(format!(
                    "requested rank {r} exceeds numerical rank {k_num}; clamped to {k_num}"
                ));
                k_num
            } else {
                r
            }
        }
        Truncation::Energy(xi) => {
            if !(xi > 0.0 && xi <= 1.0) {
                return Err(Error::Contract(format!("energy xi must lie in (0,1], got {xi}")));
            }
            if xi >= 1.0 {
                k_num
            } else {
                let mut r = rank_for_energy(sigma, xi).min(k_num);
                // never split a tied pair at the truncation boundary
                while r < k_num && (sigma[r - 1] - sigma[r]).abs() <= TIE_TOL * sigma1 {
                    r += 1;
                }
                r
            }
        }
        Truncation::Full => k_num,
    };
    if sigma[r - 1] < ILL_CONDITIONED * sigma1 {
        warnings.push(format!(
            "ill-conditioned truncation: sigma_{r}/sigma_1 = {:.3e}",
            sigma[r - 1] / sigma1
        ));
    }
    Ok(r)
}

/// Rank the given truncation selects for these singular values, without
/// fitting anything. Constrained fits use this when they need a mode count.
pub fn truncation_rank(sigma: &[f64], trunc: Truncation) -> Result<usize> {
    let mut warnings = Vec::new();
    resolve_rank(sigma, trunc, &mut warnings)
}

/// Coefficient matrix turning complex eigenvectors into real columns: real
/// eigenvectors pass through as their real part, and each conjugate pair
/// contributes (Re v, Im v) taken from the member with Im(lambda) > 0.
/// The two real columns span the same invariant 2-D subspace as the pair.
pub(crate) fn realify_eigenvectors(values: &[Complex64], vectors: &[Vec<Complex64>]) -> Matrix {
    let r = values.len();
    let n = vectors.first().map_or(0, |v| v.len());
    let mut coeff = Matrix::zeros(n, r);
    let mut j = 0;
    while j < r {
        if values[j].im == 0.0 {
            for i in 0..n {
                coeff[(i, j)] = vectors[j][i].re;
            }
            j += 1;
        } else {
            // conjugate pair occupies slots j, j+1 in the eigen ordering
            let member = if values[j].im > 0.0 { j } else { j + 1 };
            for i in 0..n {
                coeff[(i, j)] = vectors[member][i].re;
                if j + 1 < r {
                    coeff[(i, j + 1)] = vectors[member][i].im;
                }
            }
            j += 2;
        }
    }
    coeff
}

fn normalize_columns(m: &mut Matrix) {
    for j in 0..m.cols() {
        let nrm = m.col(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm > 0.0 {
            for i in 0..m.rows() {
                m[(i, j)] /= nrm;
            }
        }
    }
}

struct ReducedFit {
    u_r: Matrix,
    /// Y V_r Sigma_r^{-1}; lifts reduced-space vectors through the output data.
    yvs: Matrix,
    k_reduced: Matrix,
    rank: usize,
    sing_values: Vec<f64>,
    energy_captured: f64,
    warnings: Vec<String>,
}

fn reduced_fit(pair: &SnapshotPair, trunc: Truncation) -> Result<ReducedFit> {
    if pair.x.max_abs() == 0.0 {
        return Err(Error::Degenerate("snapshot matrix x is identically zero".into()));
    }
    let f = svd(&pair.x)?;
    let mut warnings = Vec::new();
    let rank = resolve_rank(&f.sigma, trunc, &mut warnings)?;
    let u_r = f.u.col_slice(0, rank);
    // V_r Sigma_r^{-1}, built column-wise from vt rows
    let v_sig = Matrix::from_fn(pair.x.cols(), rank, |i, j| f.vt[(j, i)] / f.sigma[j]);
    let yvs = pair.y.matmul(&v_sig);
    let k_reduced = u_r.tr_matmul(&yvs);
    let total: f64 = f.sigma.iter().map(|s| s * s).sum();
    let energy_captured = f.sigma[..rank].iter().map(|s| s * s).sum::<f64>() / total;
    Ok(ReducedFit { u_r, yvs, k_reduced, rank, sing_values: f.sigma, energy_captured, warnings })
}

/// Truncated DMD: SVD of x, reduced operator K~, its eigendecomposition,
/// and realified modes lifted back to ambient space.
pub fn dmd_fit(pair: &SnapshotPair, trunc: Truncation, mode_kind: ModeKind) -> Result<DmdResult> {
    let fit = reduced_fit(pair, trunc)?;
    let eig = eig_general(&fit.k_reduced)?;
    let coeff = realify_eigenvectors(&eig.values, &eig.vectors);
    let mut modes = match mode_kind {
        ModeKind::Projected => fit.u_r.matmul(&coeff),
        ModeKind::Exact => fit.yvs.matmul(&coeff),
    };
    normalize_columns(&mut modes);
    Ok(DmdResult {
        rank: fit.rank,
        sing_values: fit.sing_values,
        k_reduced: fit.k_reduced,
        eigenvalues: eig.values,
        modes,
        mode_kind,
        energy_captured: fit.energy_captured,
        warnings: fit.warnings,
    })
}

/// Max column-wise angle (radians) between exact and projected modes at
/// rank r. The comparison runs per eigenpair on the complex mode columns
/// (Hermitian angle), since the lifts agree only up to a complex scalar
/// when the column spaces coincide. Modes attached to near-zero
/// eigenvalues are skipped: the exact lift of a zero mode collapses to
/// the zero vector whenever the column spaces agree, so its direction
/// carries no information.
pub fn exact_equals_projected_check(pair: &SnapshotPair, r: usize) -> Result<f64> {
    let fit = reduced_fit(pair, Truncation::Rank(r))?;
    let eig = eig_general(&fit.k_reduced)?;
    let lambda_max = eig.values.first().map_or(0.0, |l| l.norm());
    let lift = |basis: &Matrix, u: &[Complex64]| -> Vec<Complex64> {
        (0..basis.rows())
            .map(|i| {
                let mut acc = Complex64::ZERO;
                for (j, uj) in u.iter().enumerate() {
                    acc += uj * basis[(i, j)];
                }
                acc
            })
            .collect()
    };
    let mut worst: f64 = 0.0;
    for (lambda, u) in eig.values.iter().zip(&eig.vectors) {
        if lambda.norm() <= 1e-10 * lambda_max.max(1.0) {
            continue;
        }
        let p = lift(&fit.u_r, u);
        let e = lift(&fit.yvs, u);
        let np: f64 = p.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let ne: f64 = e.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if np == 0.0 || ne == 0.0 {
            continue;
        }
        // sine of the Hermitian angle: component of e orthogonal to p,
        // which stays accurate for angles near zero
        let coeff: Complex64 =
            p.iter().zip(&e).map(|(a, b)| a.conj() * b).sum::<Complex64>() / (np * np);
        let resid: f64 = p
            .iter()
            .zip(&e)
            .map(|(a, b)| (b - coeff * a).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max((resid / ne).clamp(0.0, 1.0).asin());
    }
    Ok(worst)
}

/// Constraint manifold for the physics-informed fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PidmdConstraint {
    /// Plain least squares K = Y X+.
    None,
    /// K = K^T, solved in closed form on the SVD of X.
    Symmetric,
    /// K^T K = I, the orthogonal Procrustes solution.
    Orthogonal,
    /// Squared-Frobenius ridge with the given lambda.
    Ridge(f64),
}

/// Constrained least-squares estimate of the full operator, at ambient
/// size N x N, fit directly on the snapshot matrices.
pub fn pidmd_fit(pair: &SnapshotPair, constraint: PidmdConstraint) -> Result<Matrix> {
    if pair.x.max_abs() == 0.0 {
        return Err(Error::Degenerate("snapshot matrix x is identically zero".into()));
    }
    match constraint {
        PidmdConstraint::None => Ok(pair.y.matmul(&pinv(&pair.x, DEFAULT_RCOND)?)),
        PidmdConstraint::Symmetric => symmetric_procrustes(&pair.x, &pair.y),
        PidmdConstraint::Orthogonal => {
            let f = svd(&pair.y.matmul(&pair.x.transpose()))?;
            Ok(f.u.matmul(&f.vt))
        }
        PidmdConstraint::Ridge(lambda) => {
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(Error::Contract(format!(
                    "ridge lambda must be finite and >= 0, got {lambda}"
                )));
            }
            // K = Y X^T (X X^T + lambda I)^{-1}, via the symmetric solve
            // G K^T = X Y^T.
            let n = pair.x.rows();
            let mut gram = pair.x.matmul(&pair.x.transpose());
            for i in 0..n {
                gram[(i, i)] += lambda;
            }
            let kt = lstsq(&gram, &pair.x.matmul(&pair.y.transpose()))?;
            Ok(kt.transpose())
        }
    }
}

/// Higham's closed-form minimizer of ||K X - Y||_F over symmetric K.
///
/// With the thin SVD X = U1 S V1^T and C = U1^T Y V1, the minimizer is
/// K = U G U^T over the full orthonormal U = [U1 U2], where
/// G_ij = (s_j C_ij + s_i C_ji) / (s_i^2 + s_j^2) and s_i = 0 beyond the
/// rank. The U2 blocks reduce to G21 = U2^T Y V1 S^{-1} and G22 = 0, so
/// the assembly below works with (I - U1 U1^T) Y V1 S^{-1} and never
/// materializes U2.
fn symmetric_procrustes(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.rows() != y.rows() || x.cols() != y.cols() {
        return Err(Error::Contract("snapshot shapes differ".into()));
    }
    let f = svd(x)?;
    let k = f.sigma.len();
    let cutoff = f.sigma[0] * RANK_FLOOR;
    let sig: Vec<f64> = f.sigma.iter().map(|&s| if s > cutoff { s } else { 0.0 }).collect();

    let v1 = f.vt.transpose(); // m x k
    let c = f.u.tr_matmul(&y.matmul(&v1)); // k x k
    let mut g11 = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let denom = sig[i] * sig[i] + sig[j] * sig[j];
            if denom > 0.0 {
                g11[(i, j)] = (sig[j] * c[(i, j)] + sig[i] * c[(j, i)]) / denom;
            }
        }
    }
    // W = Y V1 S^+, then its component orthogonal to col(U1)
    let mut w = y.matmul(&v1);
    for j in 0..k {
        let inv = if sig[j] > 0.0 { 1.0 / sig[j] } else { 0.0 };
        for i in 0..w.rows() {
            w[(i, j)] *= inv;
        }
    }
    let w_perp = w.sub(&f.u.matmul(&f.u.tr_matmul(&w)));

    let u_g = f.u.matmul(&g11);
    let mut kmat = u_g.matmul(&f.u.transpose());
    let cross = w_perp.matmul(&f.u.transpose());
    kmat = kmat.add(&cross).add(&cross.transpose());
    kmat.symmetrize();
    Ok(kmat)
}

/// Which spectrum the snapshots were sampled from, for matching DMD
/// eigenvalues against the true operator's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectrumSource {
    /// x_{k+1} = A x_k: DMD eigenvalues estimate A's directly.
    Discrete,
    /// dx/dt = A x sampled every dt: DMD eigenvalues estimate exp(lambda dt).
    Continuous { dt: f64 },
}

/// Diagnostic comparing a DMD fit against the slow spectral subspace of a
/// known symmetric operator.
#[derive(Debug, Clone)]
pub struct SlowSubspaceReport {
    /// The d slowest-decaying true eigenvalues.
    pub true_slow_eigs: Vec<f64>,
    pub dmd_eigs: Vec<Complex64>,
    /// Max |lambda_dmd - target| over the nearest-distance matching, where
    /// target is exp(lambda dt) for continuous sources and lambda itself
    /// for discrete ones.
    pub matched_error: f64,
    /// Largest principal angle between span(Psi) and the slow eigenspace.
    pub subspace_angle: f64,
    pub warnings: Vec<String>,
}

/// Fit DMD on the pair (at full numerical rank) and report how well it
/// recovers the d-dimensional slow subspace of `a_true`.
pub fn slow_subspace_report(
    a_true: &Matrix,
    split_d: usize,
    pair: &SnapshotPair,
    source: SpectrumSource,
) -> Result<SlowSubspaceReport> {
    if split_d == 0 || split_d > a_true.rows() {
        return Err(Error::Contract(format!(
            "slow-subspace dimension {split_d} outside 1..={}",
            a_true.rows()
        )));
    }
    let (vals, vecs) = eig_symmetric(a_true)?;
    // slowest decay: largest lambda for continuous sources (least negative
    // exponent), largest |lambda| for discrete maps
    let mut order: Vec<usize> = (0..vals.len()).collect();
    if matches!(source, SpectrumSource::Discrete) {
        order.sort_by(|&i, &j| vals[j].abs().partial_cmp(&vals[i].abs()).unwrap());
    }
    let slow_idx: Vec<usize> = order[..split_d].to_vec();
    let true_slow_eigs: Vec<f64> = slow_idx.iter().map(|&i| vals[i]).collect();
    let slow_basis = Matrix::from_fn(a_true.rows(), split_d, |i, j| vecs[(i, slow_idx[j])]);

    let fit = dmd_fit(pair, Truncation::Full, ModeKind::Projected)?;
    let mut warnings = fit.warnings.clone();
    if fit.rank != split_d {
        warnings.push(format!(
            "DMD rank {} does not match slow-subspace dimension {split_d}",
            fit.rank
        ));
    }

    let targets: Vec<Complex64> = true_slow_eigs
        .iter()
        .map(|&l| match source {
            SpectrumSource::Discrete => Complex64::new(l, 0.0),
            SpectrumSource::Continuous { dt } => Complex64::new((l * dt).exp(), 0.0),
        })
        .collect();
    // greedy nearest-distance assignment in the complex plane
    let mut used = vec![false; fit.eigenvalues.len()];
    let mut matched_error = 0.0_f64;
    for t in &targets {
        let mut best: Option<(usize, f64)> = None;
        for (i, l) in fit.eigenvalues.iter().enumerate() {
            if used[i] {
                continue;
            }
            let d = (l - t).norm();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, d)) => {
                used[i] = true;
                matched_error = matched_error.max(d);
            }
            None => {
                warnings.push("fewer DMD eigenvalues than slow targets".into());
                matched_error = f64::INFINITY;
            }
        }
    }

    let subspace_angle = largest_principal_angle(&fit.modes, &slow_basis)?;
    Ok(SlowSubspaceReport {
        true_slow_eigs,
        dmd_eigs: fit.eigenvalues,
        matched_error,
        subspace_angle,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Random symmetric rank-k operator on R^n, plus an orthonormal basis
    /// of its nonzero eigenspace.
    fn random_symmetric_low_rank(n: usize, k: usize, rng: &mut ChaCha8Rng) -> (Matrix, Matrix, Vec<f64>) {
        let raw = random_matrix(n, k, rng);
        let basis = crate::kernels::orthonormal_basis(&raw).unwrap();
        let eigs: Vec<f64> = (0..k).map(|i| rng.random_range(0.5..2.0) * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let mut scaled = basis.clone();
        for j in 0..k {
            for i in 0..n {
                scaled[(i, j)] *= eigs[j];
            }
        }
        let op = scaled.matmul(&basis.transpose());
        (op, basis, eigs)
    }

    #[test]
    fn identity_dynamics_gives_unit_eigenvalues() {
        let mut rng = stream(1, "dmd-test");
        let x = random_matrix(6, 4, &mut rng);
        let pair = SnapshotPair::new(x.clone(), x).unwrap();
        let fit = dmd_fit(&pair, Truncation::Energy(1.0), ModeKind::Projected).unwrap();
        for l in &fit.eigenvalues {
            assert!((l - Complex64::ONE).norm() < 1e-10, "{l}");
        }
    }

    #[test]
    fn scaling_dynamics_gives_eigenvalue_two() {
        let mut rng = stream(2, "dmd-test");
        let x = random_matrix(6, 4, &mut rng);
        let pair = SnapshotPair::new(x.clone(), x.scale(2.0)).unwrap();
        let fit = dmd_fit(&pair, Truncation::Energy(1.0), ModeKind::Projected).unwrap();
        for l in &fit.eigenvalues {
            assert!((l - Complex64::new(2.0, 0.0)).norm() < 1e-10, "{l}");
        }
    }

    #[test]
    fn recovers_rank5_symmetric_operator_on_invariant_span() {
        // x is a random 50x20 matrix whose column space contains range(K)
        // and otherwise lies in its null space, i.e. an invariant subspace.
        let mut rng = stream(3, "dmd-test");
        let (n, k) = (50, 5);
        let (op, basis, mut eigs) = random_symmetric_low_rank(n, k, &mut rng);
        let raw = random_matrix(n, 15, &mut rng);
        // null-space directions: project range(K) out
        let null_part = raw.sub(&basis.matmul(&basis.tr_matmul(&raw)));
        let span = Matrix::hcat(&[&basis, &null_part]);
        let x = span.matmul(&random_matrix(20, 20, &mut rng));
        let y = op.matmul(&x);
        let pair = SnapshotPair::new(x, y).unwrap();
        let fit = dmd_fit(&pair, Truncation::Energy(1.0), ModeKind::Projected).unwrap();

        eigs.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
        for (i, want) in eigs.iter().enumerate() {
            let got = fit.eigenvalues[i];
            assert!(got.im.abs() < 1e-9);
            assert!((got.re - want).abs() < 1e-8, "eig {i}: {} vs {want}", got.re);
        }
        for l in fit.eigenvalues.iter().skip(k) {
            assert!(l.norm() < 1e-8, "expected ~0, got {l}");
        }
        // the top-k modes span the operator's nonzero eigenspace
        let top_modes = fit.modes.col_slice(0, k);
        let angle = largest_principal_angle(&top_modes, &basis).unwrap();
        assert!(angle < 1e-8, "principal angle {angle}");
    }

    #[test]
    fn energy_truncation_cumulative_sum_example() {
        // sigma = [2,1,1], xi = 0.5: cumulative 4/6 >= 0.5 at r = 1
        assert_eq!(rank_for_energy(&[2.0, 1.0, 1.0], 0.5), 1);
        assert_eq!(rank_for_energy(&[2.0, 1.0, 1.0], 0.7), 2);
        assert_eq!(rank_for_energy(&[2.0, 1.0, 1.0], 1.0), 3);
    }

    #[test]
    fn energy_truncation_through_fit_matches_constructed_sigma() {
        // build x with prescribed singular values via two reflectors
        let mut rng = stream(4, "dmd-test");
        let sigma = [2.0, 1.0, 1.0];
        let u = crate::kernels::orthonormal_basis(&random_matrix(5, 3, &mut rng)).unwrap();
        let v = crate::kernels::orthonormal_basis(&random_matrix(3, 3, &mut rng)).unwrap();
        let mut us = u.clone();
        for j in 0..3 {
            for i in 0..5 {
                us[(i, j)] *= sigma[j];
            }
        }
        let x = us.matmul(&v.transpose());
        let pair = SnapshotPair::new(x.clone(), x).unwrap();
        let fit = dmd_fit(&pair, Truncation::Energy(0.5), ModeKind::Projected).unwrap();
        // sigma_2 == sigma_3 is a tie but sits beyond the boundary at r=1
        assert_eq!(fit.rank, 1);
        assert!(fit.energy_captured >= 0.5);
    }

    #[test]
    fn tie_at_truncation_boundary_expands_rank() {
        // sigma = [2, 1, 1]: xi = 0.8 wants r = 2 (energy 5/6), but the
        // boundary splits the tied pair, so both are kept.
        assert_eq!(rank_for_energy(&[2.0, 1.0, 1.0], 0.8), 2);
        let mut rng = stream(5, "dmd-test");
        let u = crate::kernels::orthonormal_basis(&random_matrix(5, 3, &mut rng)).unwrap();
        let v = crate::kernels::orthonormal_basis(&random_matrix(3, 3, &mut rng)).unwrap();
        let mut us = u.clone();
        let sigma = [2.0, 1.0, 1.0];
        for j in 0..3 {
            for i in 0..5 {
                us[(i, j)] *= sigma[j];
            }
        }
        let x = us.matmul(&v.transpose());
        let pair = SnapshotPair::new(x.clone(), x).unwrap();
        let fit = dmd_fit(&pair, Truncation::Energy(0.8), ModeKind::Projected).unwrap();
        assert_eq!(fit.rank, 3);
    }

    #[test]
    fn degenerate_zero_input_errors() {
        let pair = SnapshotPair::new(Matrix::zeros(4, 3), Matrix::zeros(4, 3)).unwrap();
        assert!(matches!(
            dmd_fit(&pair, Truncation::Full, ModeKind::Projected),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            pidmd_fit(&pair, PidmdConstraint::None),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn exact_equals_projected_when_y_shares_column_space() {
        let mut rng = stream(6, "dmd-test");
        let x = random_matrix(8, 4, &mut rng);
        // y = x: angle 0
        let pair = SnapshotPair::new(x.clone(), x.clone()).unwrap();
        assert!(exact_equals_projected_check(&pair, 4).unwrap() < 1e-10);
        // y = x R for invertible R: same column space
        let r = random_matrix(4, 4, &mut rng);
        let pair = SnapshotPair::new(x.clone(), x.matmul(&r)).unwrap();
        assert!(exact_equals_projected_check(&pair, 4).unwrap() < 1e-8);
    }

    #[test]
    fn exact_differs_from_projected_outside_column_space() {
        let mut rng = stream(7, "dmd-test");
        let x = random_matrix(8, 3, &mut rng);
        let r = random_matrix(3, 3, &mut rng);
        // add a component orthogonal to col(x)
        let raw = random_matrix(8, 3, &mut rng);
        let basis = crate::kernels::orthonormal_basis(&x).unwrap();
        let perp = raw.sub(&basis.matmul(&basis.tr_matmul(&raw)));
        let y = x.matmul(&r).add(&perp.scale(0.8));
        let pair = SnapshotPair::new(x, y).unwrap();
        let angle = exact_equals_projected_check(&pair, 3).unwrap();
        assert!(angle > 1e-3, "angle {angle}");
    }

    #[test]
    fn pidmd_symmetric_with_identity_x_is_nearest_symmetric_matrix() {
        let mut rng = stream(8, "dmd-test");
        let y = random_matrix(5, 5, &mut rng);
        let pair = SnapshotPair::new(Matrix::identity(5), y.clone()).unwrap();
        let k = pidmd_fit(&pair, PidmdConstraint::Symmetric).unwrap();
        let expected = y.add(&y.transpose()).scale(0.5);
        assert!(k.sub(&expected).max_abs() < 1e-10);
    }

    #[test]
    fn pidmd_symmetric_recovers_planted_operator() {
        let mut rng = stream(9, "dmd-test");
        let s_raw = random_matrix(6, 6, &mut rng);
        let s = s_raw.add(&s_raw.transpose()).scale(0.5);
        let x = random_matrix(6, 10, &mut rng); // full row rank a.s.
        let y = s.matmul(&x);
        let pair = SnapshotPair::new(x, y).unwrap();
        let k = pidmd_fit(&pair, PidmdConstraint::Symmetric).unwrap();
        assert!(k.sub(&s).max_abs() < 1e-8);
        assert_eq!(k.asymmetry(), 0.0);
    }

    #[test]
    fn pidmd_orthogonal_recovers_planted_rotation() {
        let mut rng = stream(10, "dmd-test");
        let q = crate::kernels::orthonormal_basis(&random_matrix(5, 5, &mut rng)).unwrap();
        let x = random_matrix(5, 9, &mut rng);
        let y = q.matmul(&x);
        let pair = SnapshotPair::new(x, y).unwrap();
        let k = pidmd_fit(&pair, PidmdConstraint::Orthogonal).unwrap();
        assert!(k.sub(&q).max_abs() < 1e-8);
        let ktk = k.tr_matmul(&k);
        assert!(ktk.sub(&Matrix::identity(5)).max_abs() < 1e-10);
    }

    #[test]
    fn pidmd_ridge_zero_equals_unconstrained_on_full_row_rank() {
        let mut rng = stream(11, "dmd-test");
        let x = random_matrix(4, 8, &mut rng);
        let y = random_matrix(4, 8, &mut rng);
        let pair = SnapshotPair::new(x, y).unwrap();
        let ridge = pidmd_fit(&pair, PidmdConstraint::Ridge(0.0)).unwrap();
        let plain = pidmd_fit(&pair, PidmdConstraint::None).unwrap();
        assert!(ridge.sub(&plain).max_abs() < 1e-8);
    }

    #[test]
    fn pidmd_symmetric_objective_matches_brute_force_oracle() {
        // brute force: least squares over the n(n+1)/2 free parameters of a
        // symmetric matrix, assembled entry by entry and solved with lstsq.
        let rng = stream(12, "dmd-test");
        for trial in 0..20 {
            let n = 6;
            let mut trial_rng = stream(100 + trial, "dmd-test");
            let x = random_matrix(n, 6, &mut trial_rng);
            let y = random_matrix(n, 6, &mut trial_rng);
            let m = x.cols();
            let params: Vec<(usize, usize)> =
                (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
            let mut design = Matrix::zeros(n * m, params.len());
            let mut rhs = Matrix::zeros(n * m, 1);
            for p in 0..n {
                for q in 0..m {
                    let row = p * m + q;
                    rhs[(row, 0)] = y[(p, q)];
                    for (col, &(i, j)) in params.iter().enumerate() {
                        let mut v = 0.0;
                        if i == p {
                            v += x[(j, q)];
                        }
                        if j == p && i != j {
                            v += x[(i, q)];
                        }
                        design[(row, col)] = v;
                    }
                }
            }
            let sol = lstsq(&design, &rhs).unwrap();
            let mut k_brute = Matrix::zeros(n, n);
            for (col, &(i, j)) in params.iter().enumerate() {
                k_brute[(i, j)] = sol[(col, 0)];
                k_brute[(j, i)] = sol[(col, 0)];
            }
            let pair = SnapshotPair::new(x.clone(), y.clone()).unwrap();
            let k = pidmd_fit(&pair, PidmdConstraint::Symmetric).unwrap();
            let obj = |kk: &Matrix| kk.matmul(&x).sub(&y).frobenius_norm().powi(2);
            assert!(
                obj(&k) <= obj(&k_brute) + 1e-8,
                "trial {trial}: {} vs brute {}",
                obj(&k),
                obj(&k_brute)
            );
            assert_eq!(k.asymmetry(), 0.0);
        }
        let _ = rng;
    }

    #[test]
    fn realified_pair_spans_the_invariant_subspace() {
        // rotation-like dynamics produce a conjugate pair; check that the
        // two realified mode columns satisfy K [c1 c2] = [c1 c2] R with
        // R the 2x2 rotation-scaling block of the eigenvalue.
        let mut rng = stream(13, "dmd-test");
        let theta = 0.7_f64;
        let rot =
            Matrix::from_vec(2, 2, vec![theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        // embed in 4 dims with a decaying extra direction
        let mut op = Matrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                op[(i, j)] = rot[(i, j)];
            }
        }
        op[(2, 2)] = 0.5;
        op[(3, 3)] = 0.3;
        let x = random_matrix(4, 8, &mut rng);
        let y = op.matmul(&x);
        let pair = SnapshotPair::new(x, y).unwrap();
        let fit = dmd_fit(&pair, Truncation::Full, ModeKind::Projected).unwrap();
        let (l0, l1) = (fit.eigenvalues[0], fit.eigenvalues[1]);
        assert_eq!(l0, l1.conj());
        let c = fit.modes.col_slice(0, 2);
        let kc = op.matmul(&c);
        // K c1 = a c1 - b c2, K c2 = b c1 + a c2 for lambda = a + bi of the
        // +Im member; columns were renormalized, so solve for the block.
        let block = lstsq(&c, &kc).unwrap();
        let a = block[(0, 0)];
        let b = block[(0, 1)];
        assert!((block[(1, 1)] - a).abs() < 1e-8);
        assert!((block[(1, 0)] + b).abs() < 1e-8);
        let lam = Complex64::new(a, b.abs());
        let want = if l0.im > 0.0 { l0 } else { l1 };
        assert!((lam - want).norm() < 1e-8 || (lam.conj() - want).norm() < 1e-8);
        // projector comparison: the two real columns span the same plane as
        // the complex pair's real form
        let angle = largest_principal_angle(&c, &Matrix::from_fn(4, 2, |i, j| if i == j { 1.0 } else { 0.0 }))
            .unwrap();
        assert!(angle < 1e-8, "plane angle {angle}");
    }

    #[test]
    fn fit_consistency_with_pseudoinverse_operator_on_full_column_rank() {
        // with xi = 1 and x of full column rank, exact modes at nonzero
        // eigenvalues are eigenvectors of Y X+ (the form-of-the-operator
        // estimate): realified pairs satisfy the 2x2 block relation.
        let mut rng = stream(14, "dmd-test");
        let x = random_matrix(7, 4, &mut rng);
        let y = random_matrix(7, 4, &mut rng);
        let pair = SnapshotPair::new(x.clone(), y.clone()).unwrap();
        let k_full = y.matmul(&pinv(&x, DEFAULT_RCOND).unwrap());
        assert!(k_full.matmul(&x).sub(&y).max_abs() < 1e-8);
        let fit = dmd_fit(&pair, Truncation::Energy(1.0), ModeKind::Exact).unwrap();
        let mut j = 0;
        while j < fit.rank {
            let l = fit.eigenvalues[j];
            if l.norm() < 1e-8 {
                break; // ordered by |lambda|; the rest are ~0
            }
            if l.im == 0.0 {
                let v = Matrix::from_column(&fit.modes.col(j));
                let res = k_full.matmul(&v).sub(&v.scale(l.re)).max_abs();
                assert!(res < 1e-8, "residual {res} at eigenvalue {l}");
                j += 1;
            } else {
                let c = fit.modes.col_slice(j, j + 2);
                let kc = k_full.matmul(&c);
                let block = lstsq(&c, &kc).unwrap();
                let recon = c.matmul(&block);
                assert!(recon.sub(&kc).max_abs() < 1e-8);
                // block eigenvalues equal the conjugate pair
                let tr = block[(0, 0)] + block[(1, 1)];
                let det = block[(0, 0)] * block[(1, 1)] - block[(0, 1)] * block[(1, 0)];
                assert!((tr - 2.0 * l.re).abs() < 1e-8);
                assert!((det - l.norm_sqr()).abs() < 1e-8);
                j += 2;
            }
        }
    }

    #[test]
    fn slow_subspace_exact_for_linear_discrete_system() {
        let mut rng = stream(15, "dmd-test");
        let n = 8;
        let d = 3;
        let basis = crate::kernels::orthonormal_basis(&random_matrix(n, n, &mut rng)).unwrap();
        let mut eigs = vec![0.9, 0.85, 0.8, 0.1, 0.08, 0.05, 0.03, 0.01];
        let mut scaled = basis.clone();
        for j in 0..n {
            for i in 0..n {
                scaled[(i, j)] *= eigs[j];
            }
        }
        let a = scaled.matmul(&basis.transpose());
        // trajectories confined to the slow space
        let slow = basis.col_slice(0, d);
        let x = slow.matmul(&random_matrix(d, 6, &mut rng));
        let y = a.matmul(&x);
        let pair = SnapshotPair::new(x, y).unwrap();
        let report = slow_subspace_report(&a, d, &pair, SpectrumSource::Discrete).unwrap();
        assert!(report.matched_error < 1e-8, "matched error {}", report.matched_error);
        assert!(report.subspace_angle < 1e-8, "angle {}", report.subspace_angle);
        eigs.truncate(d);
        for (got, want) in report.true_slow_eigs.iter().zip(&eigs) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn slow_subspace_full_space_case() {
        let mut rng = stream(16, "dmd-test");
        let n = 5;
        let s_raw = random_matrix(n, n, &mut rng);
        let a = s_raw.add(&s_raw.transpose()).scale(0.3);
        let x = random_matrix(n, 10, &mut rng);
        let y = a.matmul(&x);
        let pair = SnapshotPair::new(x, y).unwrap();
        let report = slow_subspace_report(&a, n, &pair, SpectrumSource::Discrete).unwrap();
        assert!(report.subspace_angle < 1e-8);
        assert!(report.matched_error < 1e-8);
    }

    #[test]
    fn spectral_range_transfer_from_graph_dynamics() {
        use crate::dynamics::{rollout, snapshots_from_trajectory, DynamicKind, DynamicSpec};
        use crate::graph::{normalized_adjacency, sbm_generate};
        let mut rng = stream(17, "dmd-test");
        let (g, _) = sbm_generate(30, 2, 0.3, 0.1, &mut rng).unwrap();
        let adj = normalized_adjacency(&g, true).unwrap();
        let h0 = random_matrix(30, 6, &mut rng);
        // sgc(2): snapshots see A^2, so DMD eigenvalues are >= 0
        let spec = DynamicSpec::new(DynamicKind::Sgc { s: 2 }, 1).unwrap();
        let pair = snapshots_from_trajectory(&rollout(&spec, &adj, &h0).unwrap()).unwrap();
        let fit = dmd_fit(&pair, Truncation::Full, ModeKind::Projected).unwrap();
        for l in &fit.eigenvalues {
            assert!(l.im.abs() < 1e-8);
            assert!(l.re >= -1e-8, "sgc eigenvalue {l}");
            assert!(l.re <= 1.0 + 1e-8);
        }
        // gcn: eigenvalues lie in [-1, 1]
        let spec = DynamicSpec::new(DynamicKind::Gcn, 1).unwrap();
        let pair = snapshots_from_trajectory(&rollout(&spec, &adj, &h0).unwrap()).unwrap();
        let fit = dmd_fit(&pair, Truncation::Full, ModeKind::Projected).unwrap();
        for l in &fit.eigenvalues {
            assert!(l.norm() <= 1.0 + 1e-8, "gcn eigenvalue {l}");
        }
    }

    #[test]
    fn ill_conditioning_warning_is_attached() {
        let mut x = Matrix::identity(4);
        x[(3, 3)] = 1e-15;
        let pair = SnapshotPair::new(x.clone(), x).unwrap();
        let fit = dmd_fit(&pair, Truncation::Rank(4), ModeKind::Projected).unwrap();
        assert!(!fit.warnings.is_empty());
    }
}
