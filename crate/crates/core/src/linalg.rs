//! Dense complex linear-algebra kernels shared across the crate.
//!
//! Everything here operates on desk-scale matrices (a few hundred rows at
//! most), so dense decompositions are used throughout. Hermitian inputs are
//! dispatched to the symmetric eigensolver; general spectra go through the
//! complex Schur form.

use alloc::{format, vec::Vec};
use nalgebra::SymmetricEigen;

use crate::{cr, C64, CMatrix, CVector, Error, Result};

/// Frobenius norm.
#[inline]
pub fn frob(m: &CMatrix) -> f64 {
    m.norm()
}

/// True when `‖M − M*‖_∞` (entrywise) is at most `tol`.
pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            if (m[(i, j)] - m[(j, i)].conj()).norm() > tol {
                return false;
            }
        }
    }
    true
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Returns eigenvalues in ascending order together with the matching
/// orthonormal eigenvector columns.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let se = SymmetricEigen::new(m.clone());
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &se.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Full eigenvalue list of a general complex matrix.
///
/// Hermitian inputs take the symmetric fast path; otherwise the complex
/// Schur form is computed and its diagonal returned.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "eigenvalues of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if is_hermitian(m, 1e-13 * (1.0 + m.camax())) {
        let (vals, _) = hermitian_eigen(m);
        return Ok(vals.into_iter().map(cr).collect());
    }
    let n = m.nrows();
    let schur = m
        .clone()
        .try_schur(1e-14, 200 * n.max(10))
        .ok_or_else(|| Error::EigenFailure(format!("Schur iteration on {n}x{n} matrix")))?;
    let t = schur.unpack().1;
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Spectral radius `max |λ|` of a general complex matrix.
pub fn spectral_radius(m: &CMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .into_iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Spectral (2-induced) norm: the largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values[0]
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    m.clone().svd(false, false).singular_values.as_slice().to_vec()
}

/// Rotate each column so its largest-magnitude entry is real positive.
///
/// Makes eigenvector/basis constructors deterministic across runs and
/// platforms; ties resolve to the first maximal index.
pub fn phase_normalize_columns(m: &mut CMatrix) {
    for j in 0..m.ncols() {
        let mut best = 0usize;
        let mut best_mag = 0.0f64;
        for i in 0..m.nrows() {
            let mag = m[(i, j)].norm();
            if mag > best_mag {
                best_mag = mag;
                best = i;
            }
        }
        if best_mag > 0.0 {
            let phase = m[(best, j)] / cr(best_mag);
            let rot = phase.conj();
            for i in 0..m.nrows() {
                m[(i, j)] *= rot;
            }
        }
    }
}

/// Modified Gram–Schmidt with one reorthogonalization pass.
///
/// Columns whose residual drops below `tol` times their input norm are
/// rejected as rank deficient.
pub fn orthonormalize_mgs(raw: &CMatrix, tol: f64) -> Result<CMatrix> {
    let (m, p) = raw.shape();
    if p > m {
        return Err(Error::Rank(format!("{p} columns in dimension {m}")));
    }
    let mut q = CMatrix::zeros(m, p);
    for j in 0..p {
        let mut v: CVector = raw.column(j).into();
        let input_norm = v.norm();
        if input_norm == 0.0 {
            return Err(Error::Rank(format!("column {j} is zero")));
        }
        for _pass in 0..2 {
            for i in 0..j {
                let qi = q.column(i);
                let coeff: C64 = qi.dotc(&v);
                v.axpy(-coeff, &qi.into_owned(), cr(1.0));
            }
        }
        let norm = v.norm();
        if norm < tol * input_norm {
            return Err(Error::Rank(format!(
                "column {j} is linearly dependent (residual {norm:.3e})"
            )));
        }
        v /= cr(norm);
        q.set_column(j, &v);
    }
    Ok(q)
}

/// Solve `A x = b` for Hermitian positive-definite `A` (Cholesky).
pub fn solve_hpd(a: &CMatrix, b: &CVector) -> Result<CVector> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Curvature("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Solve `A X = B` for Hermitian positive-definite `A` (Cholesky), matrix RHS.
pub fn solve_hpd_matrix(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Curvature("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Solve a general square system by LU with partial pivoting.
pub fn solve_lu(a: &CMatrix, b: &CVector) -> Result<CVector> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Rank("singular linear system".into()))
}

/// Orthonormal basis of the null space of a wide/tall matrix's adjoint
/// action, obtained as the eigenvalue-one eigenvectors of `I − D(D*D)^{-1}D*`.
///
/// `d` must have full column rank; returns an `M × (M − q)` semi-unitary
/// matrix spanning `{x : D* x = 0}`.
pub fn null_space_of_adjoint(d: &CMatrix) -> Result<CMatrix> {
    let (m, q) = d.shape();
    if q > m {
        return Err(Error::Rank(format!("{q} constraint columns in dimension {m}")));
    }
    let sv = singular_values(d);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    if smax == 0.0 || smin <= 1e-10 * smax {
        return Err(Error::Rank(format!(
            "constraint matrix is rank deficient (σ_min/σ_max = {:.3e})",
            if smax > 0.0 { smin / smax } else { 0.0 }
        )));
    }
    let gram = d.adjoint() * d;
    let dinv_dstar = solve_hpd_matrix(&gram, &d.adjoint())?;
    let complement = CMatrix::identity(m, m) - d * dinv_dstar;
    let (vals, vecs) = hermitian_eigen(&complement);
    let mut basis = CMatrix::zeros(m, m - q);
    let mut count = 0usize;
    for (i, &lambda) in vals.iter().enumerate() {
        if lambda > 0.5 {
            if count == m - q {
                return Err(Error::Rank("null-space dimension exceeds expectation".into()));
            }
            basis.set_column(count, &vecs.column(i));
            count += 1;
        }
    }
    if count != m - q {
        return Err(Error::Rank(format!(
            "null-space dimension {count}, expected {}",
            m - q
        )));
    }
    phase_normalize_columns(&mut basis);
    Ok(basis)
}
