//! Dense factorizations: SVD, eigendecompositions, pseudo-inverse,
//! least squares.
//!
//! SVD, real Schur form and the symmetric eigensolver are delegated to
//! nalgebra; the contract checked by this crate's tests (reconstruction,
//! orthonormality, residuals, ordering) is what callers rely on, not the
//! provenance. Eigenvectors of general real matrices are recovered here
//! by back-substitution on the quasi-triangular Schur factor, since
//! nalgebra exposes only the eigenvalues.

use super::matrix::Matrix;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Iteration budget handed to nalgebra's implicit-QR loops. Generous; the
/// point is to fail loudly instead of spinning forever on pathological input.
const MAX_SWEEPS: usize = 10_000;

/// Relative singular-value cutoff for the default pseudo-inverse.
pub const DEFAULT_RCOND: f64 = 1e-12;

fn to_na(a: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_iterator(a.rows(), a.cols(), a.data().iter().copied())
}

fn from_na(a: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Thin SVD with singular values sorted non-increasing.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// m x k, orthonormal columns.
    pub u: Matrix,
    /// k singular values, non-increasing, k = min(m, n).
    pub sigma: Vec<f64>,
    /// k x n, orthonormal rows.
    pub vt: Matrix,
}

impl SvdFactors {
    /// u * diag(sigma) * vt.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.sigma.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.vt)
    }
}

pub fn svd(a: &Matrix) -> Result<SvdFactors> {
    if !a.is_finite() {
        return Err(Error::Contract("svd input contains non-finite entries".into()));
    }
    let fact = nalgebra::linalg::SVD::try_new(to_na(a), true, true, f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical("svd did not converge within iteration budget".into()))?;
    let u = from_na(&fact.u.expect("svd u requested"));
    let vt = from_na(&fact.v_t.expect("svd vt requested"));
    let sigma: Vec<f64> = fact.singular_values.as_slice().to_vec();

    // nalgebra sorts, but the non-increasing invariant is load-bearing for
    // truncation, so enforce it rather than assume it.
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    if order.iter().enumerate().any(|(p, &i)| p != i) {
        let sigma_sorted: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();
        let u_sorted = Matrix::from_fn(u.rows(), u.cols(), |i, j| u[(i, order[j])]);
        let vt_sorted = Matrix::from_fn(vt.rows(), vt.cols(), |i, j| vt[(order[i], j)]);
        return Ok(SvdFactors { u: u_sorted, sigma: sigma_sorted, vt: vt_sorted });
    }
    Ok(SvdFactors { u, sigma, vt })
}

/// Eigendecomposition of a general real square matrix.
///
/// Eigenpairs are ordered by descending |lambda|, ties broken by
/// descending real part then ascending imaginary part. For real input,
/// complex eigenpairs appear as exact conjugate pairs.
#[derive(Debug, Clone)]
pub struct EigResult {
    pub values: Vec<Complex64>,
    /// One column per eigenpair, aligned with `values`.
    pub vectors: Vec<Vec<Complex64>>,
    pub is_real: Vec<bool>,
}

pub fn eig_general(a: &Matrix) -> Result<EigResult> {
    if a.rows() != a.cols() {
        return Err(Error::Contract(format!(
            "eig_general needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::Contract("eig_general input contains non-finite entries".into()));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(EigResult { values: vec![], vectors: vec![], is_real: vec![] });
    }
    let schur = nalgebra::linalg::Schur::try_new(to_na(a), f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical("schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let q = from_na(&q);
    let t = from_na(&t);

    let mut pairs: Vec<(Complex64, Vec<Complex64>)> = Vec::with_capacity(n);
    let mut k = 0;
    while k < n {
        let two_by_two = k + 1 < n && t[(k + 1, k)] != 0.0;
        if two_by_two {
            let (tr, det) =
                (t[(k, k)] + t[(k + 1, k + 1)], t[(k, k)] * t[(k + 1, k + 1)] - t[(k, k + 1)] * t[(k + 1, k)]);
            let disc = tr * tr / 4.0 - det;
            if disc < 0.0 {
                let lambda = Complex64::new(tr / 2.0, (-disc).sqrt());
                let v = schur_eigenvector(&t, lambda, k, 2);
                let v_conj: Vec<Complex64> = v.iter().map(|z| z.conj()).collect();
                pairs.push((lambda, v));
                pairs.push((lambda.conj(), v_conj));
            } else {
                // Unstandardized block with two real eigenvalues.
                let s = disc.sqrt();
                for lam in [tr / 2.0 + s, tr / 2.0 - s] {
                    let lambda = Complex64::new(lam, 0.0);
                    pairs.push((lambda, schur_eigenvector(&t, lambda, k, 2)));
                }
            }
            k += 2;
        } else {
            let lambda = Complex64::new(t[(k, k)], 0.0);
            pairs.push((lambda, schur_eigenvector(&t, lambda, k, 1)));
            k += 1;
        }
    }

    // Lift from Schur basis, normalize, fix phase so the largest component
    // is real-positive (makes vectors of real eigenvalues exactly real).
    for (lambda, y) in pairs.iter_mut() {
        let mut v = vec![Complex64::ZERO; n];
        for (i, vi) in v.iter_mut().enumerate() {
            let mut acc = Complex64::ZERO;
            for (j, yj) in y.iter().enumerate() {
                acc += yj * q[(i, j)];
            }
            *vi = acc;
        }
        let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 0.0 {
            let pivot = v
                .iter()
                .cloned()
                .max_by(|a, b| a.norm_sqr().partial_cmp(&b.norm_sqr()).unwrap())
                .unwrap();
            let phase = pivot / pivot.norm();
            for z in v.iter_mut() {
                *z = *z / phase / nrm;
            }
        }
        if lambda.im == 0.0 {
            for z in v.iter_mut() {
                z.im = 0.0;
            }
        }
        *y = v;
    }

    pairs.sort_by(|(la, _), (lb, _)| {
        lb.norm()
            .partial_cmp(&la.norm())
            .unwrap()
            .then(lb.re.partial_cmp(&la.re).unwrap())
            .then(la.im.partial_cmp(&lb.im).unwrap())
    });

    let is_real = pairs.iter().map(|(l, _)| l.im == 0.0).collect();
    let (values, vectors) = pairs.into_iter().unzip();
    Ok(EigResult { values, vectors, is_real })
}

/// Solve (T - lambda I) y = 0 by back-substitution on the quasi-triangular
/// Schur factor, for the eigenvalue owned by the block at `k` of size
/// `block_size`. Returns y in the Schur basis.
fn schur_eigenvector(t: &Matrix, lambda: Complex64, k: usize, block_size: usize) -> Vec<Complex64> {
    let n = t.rows();
    let smlnum = f64::EPSILON * t.frobenius_norm().max(1.0);
    let mut y = vec![Complex64::ZERO; n];
    if block_size == 1 {
        y[k] = Complex64::ONE;
    } else {
        // Null vector of the 2x2 block; pick the better-conditioned row.
        let (a, b) = (t[(k, k)], t[(k, k + 1)]);
        let (c, d) = (t[(k + 1, k)], t[(k + 1, k + 1)]);
        let w_top = (Complex64::new(b, 0.0), lambda - a);
        let w_bot = (lambda - d, Complex64::new(c, 0.0));
        let (w0, w1) = if w_top.0.norm() + w_top.1.norm() >= w_bot.0.norm() + w_bot.1.norm() {
            w_top
        } else {
            w_bot
        };
        let scale = w0.norm().max(w1.norm());
        if scale > 0.0 {
            y[k] = w0 / scale;
            y[k + 1] = w1 / scale;
        } else {
            y[k] = Complex64::ONE;
        }
    }

    // Walk blocks upward, solving (T_block - lambda I) x = -r.
    let mut i = k;
    while i > 0 {
        let top_of_block = i >= 2 && t[(i - 1, i - 2)] != 0.0;
        let (lo, size) = if top_of_block { (i - 2, 2) } else { (i - 1, 1) };
        let residual = |row: usize| -> Complex64 {
            let mut acc = Complex64::ZERO;
            for j in (lo + size)..n {
                if y[j] != Complex64::ZERO {
                    acc += y[j] * t[(row, j)];
                }
            }
            acc
        };
        if size == 1 {
            let mut denom = Complex64::new(t[(lo, lo)], 0.0) - lambda;
            if denom.norm() < smlnum {
                denom = Complex64::new(smlnum, 0.0);
            }
            y[lo] = -residual(lo) / denom;
        } else {
            let a11 = Complex64::new(t[(lo, lo)], 0.0) - lambda;
            let a12 = Complex64::new(t[(lo, lo + 1)], 0.0);
            let a21 = Complex64::new(t[(lo + 1, lo)], 0.0);
            let a22 = Complex64::new(t[(lo + 1, lo + 1)], 0.0) - lambda;
            let (r1, r2) = (-residual(lo), -residual(lo + 1));
            let mut det = a11 * a22 - a12 * a21;
            if det.norm() < smlnum * smlnum {
                det = Complex64::new(smlnum * smlnum, 0.0);
            }
            y[lo] = (r1 * a22 - a12 * r2) / det;
            y[lo + 1] = (a11 * r2 - r1 * a21) / det;
        }
        i = lo;
    }
    y
}

/// Eigendecomposition of a symmetric matrix: real eigenvalues sorted
/// descending, orthonormal eigenvector columns.
///
/// Errors with a contract violation if the input is asymmetric beyond
/// 1e-10 * max |a_ij|.
pub fn eig_symmetric(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if a.rows() != a.cols() {
        return Err(Error::Contract(format!(
            "eig_symmetric needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let scale = a.max_abs();
    if a.asymmetry() > 1e-10 * scale.max(1e-300) {
        return Err(Error::Contract(format!(
            "eig_symmetric input asymmetric: max |a_ij - a_ji| = {:.3e} exceeds 1e-10 * {:.3e}",
            a.asymmetry(),
            scale
        )));
    }
    let eig = nalgebra::linalg::SymmetricEigen::try_new(to_na(a), f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical("symmetric eigen iteration did not converge".into()))?;
    let vals: Vec<f64> = eig.eigenvalues.as_slice().to_vec();
    let vecs = from_na(&eig.eigenvectors);
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| vals[j].partial_cmp(&vals[i]).unwrap());
    let sorted_vals: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let sorted_vecs = Matrix::from_fn(vecs.rows(), vecs.cols(), |i, j| vecs[(i, order[j])]);
    Ok((sorted_vals, sorted_vecs))
}

/// Moore-Penrose pseudo-inverse. Singular values below `rcond * sigma_max`
/// are treated as zero.
pub fn pinv(a: &Matrix, rcond: f64) -> Result<Matrix> {
    if !(0.0..1.0).contains(&rcond) || rcond <= 0.0 {
        return Err(Error::Contract(format!("pinv rcond must lie in (0,1), got {rcond}")));
    }
    let f = svd(a)?;
    let cutoff = rcond * f.sigma.first().copied().unwrap_or(0.0);
    // a+ = v * diag(1/sigma) * u^T
    let mut v_scaled = f.vt.transpose();
    for j in 0..v_scaled.cols() {
        let inv = if f.sigma[j] > cutoff { 1.0 / f.sigma[j] } else { 0.0 };
        for i in 0..v_scaled.rows() {
            v_scaled[(i, j)] *= inv;
        }
    }
    Ok(v_scaled.matmul(&f.u.transpose()))
}

/// Minimum-norm least-squares solution of a x = b via SVD.
pub fn lstsq(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::Contract(format!(
            "lstsq row mismatch: a is {}x{}, b is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(pinv(a, DEFAULT_RCOND)?.matmul(b))
}

/// Orthonormal basis for the column space of `a` (columns of U above the
/// rank cutoff).
pub fn orthonormal_basis(a: &Matrix) -> Result<Matrix> {
    let f = svd(a)?;
    let cutoff = DEFAULT_RCOND * f.sigma.first().copied().unwrap_or(0.0);
    let rank = f.sigma.iter().take_while(|s| **s > cutoff).count().max(1);
    Ok(f.u.col_slice(0, rank))
}

/// Largest principal angle (radians) between the column spaces of `a` and
/// `b`. Both are orthonormalized first, so raw spanning sets are fine.
///
/// Computed through sines, asin(||(I - Qa Qa^T) Qb||_2), which resolves
/// angles near zero to machine precision where the cosine form floors out
/// around sqrt(eps). When the spans have different dimensions the angles
/// measure how far span(b) leaves span(a).
pub fn largest_principal_angle(a: &Matrix, b: &Matrix) -> Result<f64> {
    let qa = orthonormal_basis(a)?;
    let qb = orthonormal_basis(b)?;
    let residual = qb.sub(&qa.matmul(&qa.tr_matmul(&qb)));
    let f = svd(&residual)?;
    let largest_sine = f.sigma.first().copied().unwrap_or(0.0);
    Ok(largest_sine.clamp(0.0, 1.0).asin())
}

/// Residual max_i ||A v_i - lambda_i v_i||_2, for tests and diagnostics.
pub fn eig_residual(a: &Matrix, eig: &EigResult) -> f64 {
    let n = a.rows();
    let mut worst = 0.0_f64;
    for (lambda, v) in eig.values.iter().zip(&eig.vectors) {
        let mut res = 0.0;
        for i in 0..n {
            let mut av = Complex64::ZERO;
            for (j, vj) in v.iter().enumerate() {
                av += vj * a[(i, j)];
            }
            res += (av - lambda * v[i]).norm_sqr();
        }
        worst = worst.max(res.sqrt());
    }
    worst
}
