//! Combination matrices: verification of the projector-limit conditions and
//! feasibility design by alternating projections.
//!
//! A sparse block matrix `A` replaces the centralized projector `P_U = U U*`
//! when its powers converge to it, which holds exactly when `A U = U`,
//! `U* A = U*`, and `ρ(A − P_U) < 1`. [`verify_conditions`] measures those
//! three quantities; [`design_pocs`] finds a Hermitian `A` on a given
//! neighborhood pattern by alternating exact projections between the affine
//! set `{sparsity ∧ A U = U ∧ A = A*}` and the spectral ball
//! `{‖A − P_U‖₂ ≤ 1 − ε}` (both convex).

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::linalg::{self, hermitian_eigen, spectral_norm, spectral_radius};
use crate::subspace::Subspace;
use crate::topology::{BlockAccess, BlockMatrix, Topology};
use crate::{cr, CMatrix, Error, Result};

/// Tolerances for [`verify_conditions`].
#[derive(Debug, Clone)]
pub struct VerifyConfig {
    /// Threshold on the eigenvector residuals `‖AU − U‖_F`, `‖U*A − U*‖_F`.
    pub residual_tol: f64,
    /// Required contraction margin: the report passes only when
    /// `ρ(A − P_U) ≤ 1 − epsilon_report`. The default keeps a hair of
    /// margin so a numerically-unit radius (e.g. `A = I`) never passes.
    pub epsilon_report: f64,
    /// Window for counting unit eigenvalues (`|λ − 1| ≤ unit_tol`).
    pub unit_tol: f64,
    /// Power at which `‖A^i − P_U‖₂` is sampled for the report.
    pub power_len: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-7,
            epsilon_report: 1e-9,
            unit_tol: 1e-8,
            power_len: 50,
        }
    }
}

/// Measured conditions for one candidate combination matrix.
#[derive(Debug, Clone)]
pub struct VerificationReport {
    /// `‖A U − U‖_F` (columns of `U` as right eigenvectors at 1).
    pub right_eig_residual: f64,
    /// `‖U* A − U*‖_F` (columns of `U` as left eigenvectors at 1).
    pub left_eig_residual: f64,
    /// Spectral radius `ρ(A − P_U)`.
    pub spectral_radius_gap: f64,
    /// Number of eigenvalues of `A` with `|λ − 1| ≤ unit_tol`.
    pub unit_eig_count: usize,
    /// `‖A^i − P_U‖₂` at the final checked power `i = power_len`.
    pub power_limit_residual: f64,
    /// Both residuals within tolerance and the spectral gap at most
    /// `1 − epsilon_report`.
    pub passes: bool,
}

/// Evaluate the projector-limit conditions for `A` against subspace `s`.
pub fn verify_conditions(
    a: &BlockMatrix,
    s: &Subspace,
    cfg: &VerifyConfig,
) -> Result<VerificationReport> {
    if a.topology().block_sizes() != s.block_sizes() {
        return Err(Error::Shape(format!(
            "combiner layout {:?} does not match subspace layout {:?}",
            a.topology().block_sizes(),
            s.block_sizes()
        )));
    }
    let dense = a.to_dense();
    let u = s.basis();
    let p_u = s.projector();

    let right = linalg::frob(&(&dense * u - u));
    let left = linalg::frob(&(u.adjoint() * &dense - u.adjoint()));
    let gap = spectral_radius(&(&dense - &p_u))?;
    let unit_eig_count = linalg::eigenvalues(&dense)?
        .into_iter()
        .filter(|z| (z - cr(1.0)).norm() <= cfg.unit_tol)
        .count();

    let mut power = dense.clone();
    for _ in 1..cfg.power_len.max(1) {
        power = &power * &dense;
    }
    let power_limit_residual = spectral_norm(&(&power - &p_u));

    let passes =
        right <= cfg.residual_tol && left <= cfg.residual_tol && gap <= 1.0 - cfg.epsilon_report;
    Ok(VerificationReport {
        right_eig_residual: right,
        left_eig_residual: left,
        spectral_radius_gap: gap,
        unit_eig_count,
        power_limit_residual,
        passes,
    })
}

/// The sequence `‖A^i − P_U‖₂` for `i = 1..=i_max`.
///
/// For any `A` passing [`verify_conditions`] this decays geometrically,
/// since `A^i − P_U = (A − P_U)^i`.
pub fn power_limit_check(a: &BlockMatrix, s: &Subspace, i_max: usize) -> Result<Vec<f64>> {
    if a.topology().block_sizes() != s.block_sizes() {
        return Err(Error::Shape("combiner/subspace layout mismatch".into()));
    }
    let dense = a.to_dense();
    let p_u = s.projector();
    let mut out = Vec::with_capacity(i_max);
    let mut power = CMatrix::identity(dense.nrows(), dense.ncols());
    for _ in 0..i_max {
        power = &power * &dense;
        out.push(spectral_norm(&(&power - &p_u)));
    }
    Ok(out)
}

/// Parameters of the alternating-projection design.
#[derive(Debug, Clone)]
pub struct DesignConfig {
    /// Contraction margin: the designed matrix satisfies
    /// `‖A − P_U‖₂ ≤ 1 − epsilon`.
    pub epsilon: f64,
    /// Maximum alternating-projection cycles before declaring infeasibility.
    pub max_iters: usize,
    /// Residual threshold for the eigenvector conditions and for the
    /// convergence of the spectral bound.
    pub tol: f64,
    /// Constrain the design to Hermitian matrices (the convexified problem).
    pub hermitian: bool,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            max_iters: 5000,
            tol: 1e-8,
            hermitian: true,
        }
    }
}

/// Design summary returned alongside the matrix.
#[derive(Debug, Clone)]
pub struct DesignOutcome {
    pub matrix: BlockMatrix,
    /// Alternating-projection cycles used.
    pub cycles: usize,
    /// Final `‖A − P_U‖₂` of the returned matrix.
    pub spectral_bound: f64,
    /// Final `‖A U − U‖_F` of the returned matrix.
    pub affine_residual: f64,
}

/// Sparsity-plus-symmetry projector and the structured least-squares
/// projection onto `{A on pattern, A = A* (optional), A U = U (+ U*A = U*)}`.
struct AffineProjector<'a> {
    mask: Vec<bool>,
    m: usize,
    u: &'a CMatrix,
    hermitian: bool,
    /// Warm-started multiplier (M×P, or M×2P in the non-Hermitian case).
    multiplier: CMatrix,
}

fn re_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.re * y.re + x.im * y.im;
    }
    acc
}

impl<'a> AffineProjector<'a> {
    fn new(topology: &Topology, u: &'a CMatrix, hermitian: bool) -> Self {
        let m = topology.total_dim();
        let mut agent_of = Vec::with_capacity(m);
        for k in 0..topology.n_agents() {
            for _ in 0..topology.block_size(k) {
                agent_of.push(k);
            }
        }
        let mut mask = alloc::vec![false; m * m];
        for i in 0..m {
            for j in 0..m {
                mask[i * m + j] = topology.contains_edge(agent_of[i], agent_of[j]);
            }
        }
        let p = u.ncols();
        let cols = if hermitian { p } else { 2 * p };
        Self {
            mask,
            m,
            u,
            hermitian,
            multiplier: CMatrix::zeros(m, cols),
        }
    }

    /// Orthogonal projection onto the pattern (and Hermitian) subspace.
    fn structure(&self, x: &CMatrix) -> CMatrix {
        let m = self.m;
        let mut out = CMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                if self.mask[i * m + j] {
                    out[(i, j)] = if self.hermitian {
                        (x[(i, j)] + x[(j, i)].conj()) * cr(0.5)
                    } else {
                        x[(i, j)]
                    };
                }
            }
        }
        out
    }

    /// Correction matrix generated by a multiplier.
    fn correction(&self, lambda: &CMatrix) -> CMatrix {
        let p = self.u.ncols();
        if self.hermitian {
            self.structure(&(lambda * self.u.adjoint()))
        } else {
            let l1 = lambda.columns(0, p);
            let l2 = lambda.columns(p, p);
            self.structure(&(l1 * self.u.adjoint() + self.u * l2.adjoint()))
        }
    }

    /// Constraint map applied to a structured matrix.
    fn constraint(&self, a: &CMatrix) -> CMatrix {
        let p = self.u.ncols();
        if self.hermitian {
            a * self.u
        } else {
            let mut out = CMatrix::zeros(self.m, 2 * p);
            out.columns_mut(0, p).copy_from(&(a * self.u));
            out.columns_mut(p, p).copy_from(&(a.adjoint() * self.u));
            out
        }
    }

    /// Exact projection of `y` onto the affine set, via CG on the normal
    /// equations of the multiplier (warm-started across cycles).
    ///
    /// `cg_tol` is the absolute constraint-residual target; the CG residual
    /// equals the violation `‖A U − U‖` of the projected point.
    fn project(&mut self, y: &CMatrix, cg_tol: f64) -> CMatrix {
        let y0 = self.structure(y);
        let p = self.u.ncols();
        let target = {
            let mut t = CMatrix::zeros(self.m, if self.hermitian { p } else { 2 * p });
            if self.hermitian {
                t.copy_from(self.u);
            } else {
                t.columns_mut(0, p).copy_from(self.u);
                t.columns_mut(p, p).copy_from(self.u);
            }
            t
        };
        let rhs = &target - self.constraint(&y0);

        // CG over the real inner product; the operator Λ ↦ constraint(correction(Λ))
        // is self-adjoint positive semidefinite and the system is consistent
        // whenever the affine set is nonempty.
        let gx = |lam: &CMatrix, this: &Self| this.constraint(&this.correction(lam));
        let mut x = self.multiplier.clone();
        let mut r = &rhs - gx(&x, self);
        let mut pdir = r.clone();
        let mut rs = re_inner(&r, &r);
        let tol_sq = cg_tol * cg_tol;
        let max_cg = 20 * (self.m * p).max(25);
        let mut it = 0usize;
        while rs > tol_sq && it < max_cg {
            let gp = gx(&pdir, self);
            let denom = re_inner(&pdir, &gp);
            if denom <= f64::MIN_POSITIVE * rs || !denom.is_finite() {
                break;
            }
            let alpha = rs / denom;
            x.zip_apply(&pdir, |xi, pi| *xi += cr(alpha) * pi);
            r.zip_apply(&gp, |ri, gi| *ri -= cr(alpha) * gi);
            let rs_new = re_inner(&r, &r);
            let beta = rs_new / rs;
            rs = rs_new;
            let mut new_p = r.clone();
            new_p.zip_apply(&pdir, |ni, pi| *ni += cr(beta) * pi);
            pdir = new_p;
            it += 1;
        }
        self.multiplier = x.clone();
        y0 + self.correction(&x)
    }
}

/// Find a combination matrix on `topology` whose powers converge to the
/// projector of `s`, by alternating exact projections between the affine
/// structure set and the spectral ball `‖A − P_U‖₂ ≤ 1 − ε`.
///
/// Fails with [`Error::Infeasible`] when the eigenvector conditions are
/// inconsistent with the sparsity pattern, or when the spectral bound
/// cannot be met within `max_iters` cycles (the topology cannot support
/// the subspace).
pub fn design_pocs(
    topology: &Arc<Topology>,
    s: &Subspace,
    cfg: &DesignConfig,
) -> Result<DesignOutcome> {
    if !(cfg.epsilon > 0.0 && cfg.epsilon < 1.0) {
        return Err(Error::Config(format!("epsilon = {} outside (0, 1)", cfg.epsilon)));
    }
    if cfg.tol <= 0.0 {
        return Err(Error::Config("tol must be positive".into()));
    }
    if topology.block_sizes() != s.block_sizes() {
        return Err(Error::Shape(format!(
            "topology layout {:?} does not match subspace layout {:?}",
            topology.block_sizes(),
            s.block_sizes()
        )));
    }
    // Clip strictly inside the requested ball so the returned (affine-exact)
    // iterate still satisfies the bound after its last projection.
    let slack = (10.0 * cfg.tol).max(1e-6);
    let clip = 1.0 - cfg.epsilon - slack;
    if clip <= 0.0 {
        return Err(Error::Config(format!(
            "epsilon = {} leaves no contraction room",
            cfg.epsilon
        )));
    }

    let u = s.basis();
    let p_u = s.projector();
    let mut proj = AffineProjector::new(topology, u, cfg.hermitian);
    let cg_tol = (cfg.tol * 1e-3).max(1e-13);

    let mut a = proj.project(&p_u, cg_tol);
    let aff_res = linalg::frob(&(&a * u - u));
    if aff_res > cfg.tol {
        return Err(Error::Infeasible {
            reason: "eigenvector conditions are inconsistent with the sparsity pattern".into(),
            residual: aff_res,
            iterations: 0,
        });
    }

    let mut excess = f64::INFINITY;
    for cycle in 0..cfg.max_iters {
        let b = &a - &p_u;
        let bound;
        let clipped = if cfg.hermitian {
            let (vals, vecs) = hermitian_eigen(&b);
            bound = vals.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
            if bound <= clip + cfg.tol {
                let matrix = BlockMatrix::from_dense_on_pattern(topology.clone(), &a)?;
                return Ok(DesignOutcome {
                    matrix,
                    cycles: cycle,
                    spectral_bound: bound,
                    affine_residual: linalg::frob(&(&a * u - u)),
                });
            }
            let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                vals.len(),
                vals.iter().map(|&v| cr(v.clamp(-clip, clip))),
            ));
            &vecs * d * vecs.adjoint()
        } else {
            let svd = b.clone().svd(true, true);
            bound = svd.singular_values.iter().fold(0.0f64, |acc, &v| acc.max(v));
            if bound <= clip + cfg.tol {
                let matrix = BlockMatrix::from_dense_on_pattern(topology.clone(), &a)?;
                return Ok(DesignOutcome {
                    matrix,
                    cycles: cycle,
                    spectral_bound: bound,
                    affine_residual: linalg::frob(&(&a * u - u)),
                });
            }
            let ut = svd.u.as_ref().unwrap();
            let vt = svd.v_t.as_ref().unwrap();
            let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                svd.singular_values.len(),
                svd.singular_values.iter().map(|&v| cr(v.min(clip))),
            ));
            ut * d * vt
        };
        excess = bound - clip;
        a = proj.project(&(&p_u + clipped), cg_tol);
    }
    Err(Error::Infeasible {
        reason: "spectral bound failed to converge; topology cannot support the subspace".into(),
        residual: excess,
        iterations: cfg.max_iters,
    })
}

/// Expand an `N × N` doubly stochastic matrix into the block combiner
/// `A = A_small ⊗ I_L` on a topology with uniform block size `L`.
pub fn consensus_combiner(
    topology: &Arc<Topology>,
    a_small: &DMatrix<f64>,
    l: usize,
) -> Result<BlockMatrix> {
    let n = topology.n_agents();
    if a_small.shape() != (n, n) {
        return Err(Error::Shape(format!(
            "combiner is {}x{}, topology has {n} agents",
            a_small.nrows(),
            a_small.ncols()
        )));
    }
    if topology.block_sizes().iter().any(|&b| b != l) {
        return Err(Error::Shape(format!("topology blocks must all equal L = {l}")));
    }
    for k in 0..n {
        let row: f64 = a_small.row(k).iter().sum();
        let col: f64 = a_small.column(k).iter().sum();
        if (row - 1.0).abs() > 1e-10 || (col - 1.0).abs() > 1e-10 {
            return Err(Error::Stochasticity(format!(
                "row/column {k} sums ({row}, {col}) deviate from 1"
            )));
        }
        for j in 0..n {
            let v = a_small[(k, j)];
            if v < -1e-12 {
                return Err(Error::Stochasticity(format!("negative entry at ({k},{j})")));
            }
            if v.abs() > 1e-12 && !topology.contains_edge(k, j) {
                return Err(Error::Topology(format!(
                    "nonzero weight at ({k},{j}) outside the neighborhood pattern"
                )));
            }
        }
    }
    let mut out = BlockMatrix::new(topology.clone());
    let eye = CMatrix::identity(l, l);
    for k in 0..n {
        for &j in topology.neighborhood(k) {
            let v = a_small[(k, j)];
            if v != 0.0 {
                out.set_block(k, j, &eye * cr(v))?;
            }
        }
    }
    Ok(out)
}

/// Eigenstructure summary of a verified combination matrix.
#[derive(Debug, Clone)]
pub struct EigenstructureReport {
    /// Eigenvalues at one (must equal the subspace rank `P`).
    pub unit_count: usize,
    /// Largest modulus among the remaining eigenvalues.
    pub max_sub_unit_modulus: f64,
    /// `‖P_U − P_eig‖_F` where `P_eig` projects onto the unit-eigenvalue
    /// invariant subspace (computed from the null space of `A − I`).
    pub subspace_alignment: f64,
}

/// Inspect the eigenstructure of `A`: unit-eigenvalue multiplicity, the
/// sub-unit spectral margin, and the alignment of the unit-eigenvalue
/// invariant subspace with `R(U)`.
pub fn eigenstructure_report(
    a: &BlockMatrix,
    s: &Subspace,
    tol: f64,
) -> Result<EigenstructureReport> {
    if a.topology().block_sizes() != s.block_sizes() {
        return Err(Error::Shape("combiner/subspace layout mismatch".into()));
    }
    let dense = a.to_dense();
    let p = s.rank();
    let eigs = linalg::eigenvalues(&dense)?;
    let unit_count = eigs.iter().filter(|z| (**z - cr(1.0)).norm() <= tol).count();
    if unit_count != p {
        return Err(Error::Structure(format!(
            "unit eigenvalue multiplicity {unit_count}, expected {p}"
        )));
    }
    let max_sub_unit_modulus = eigs
        .iter()
        .filter(|z| (**z - cr(1.0)).norm() > tol)
        .map(|z| z.norm())
        .fold(0.0, f64::max);

    // Geometric eigenvectors at 1: the null space of A − I, via SVD.
    let shifted = &dense - CMatrix::identity(dense.nrows(), dense.ncols());
    let svd = shifted.clone().svd(false, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b)).max(1.0);
    let vt = svd.v_t.as_ref().unwrap();
    let mut null_cols = Vec::new();
    for (i, &sv) in svd.singular_values.iter().enumerate() {
        if sv <= tol.max(1e-12) * smax {
            null_cols.push(i);
        }
    }
    if null_cols.len() != p {
        return Err(Error::Structure(format!(
            "unit eigenvalue is defective: geometric multiplicity {}, algebraic {p}",
            null_cols.len()
        )));
    }
    let mut basis = CMatrix::zeros(dense.nrows(), p);
    for (dst, &src) in null_cols.iter().enumerate() {
        basis.set_column(dst, &vt.row(src).adjoint());
    }
    let p_eig = &basis * basis.adjoint();
    let subspace_alignment = linalg::frob(&(s.projector() - p_eig));
    Ok(EigenstructureReport {
        unit_count,
        max_sub_unit_modulus,
        subspace_alignment,
    })
}

/// Metropolis–Hastings weights for a topology: doubly stochastic, symmetric,
/// and zero off the neighborhood pattern.
pub fn metropolis_weights(topology: &Topology) -> DMatrix<f64> {
    let n = topology.n_agents();
    let degree: Vec<usize> = (0..n).map(|k| topology.neighborhood(k).len() - 1).collect();
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut off_sum = 0.0;
        for &l in topology.neighborhood(k) {
            if l != k {
                let w = 1.0 / (1.0 + degree[k].max(degree[l]) as f64);
                a[(k, l)] = w;
                off_sum += w;
            }
        }
        a[(k, k)] = 1.0 - off_sum;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frob;
    use crate::CVector;
    use crate::subspace::{consensus_subspace, orthonormalize};
    use crate::synth;
    use crate::topology::validate_sparsity;

    fn path3() -> Arc<Topology> {
        Arc::new(Topology::from_edges(alloc::vec![1, 1, 1], &[(0, 1), (1, 2)]).unwrap())
    }

    fn metropolis_path3(topology: &Arc<Topology>) -> BlockMatrix {
        let a = metropolis_weights(topology);
        consensus_combiner(topology, &a, 1).unwrap()
    }

    #[test]
    fn metropolis_weights_on_path_match_hand_values() {
        let a = metropolis_weights(&path3());
        assert!((a[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((a[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((a[(2, 2)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((a[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((a[(1, 2)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a[(0, 2)], 0.0);
    }

    #[test]
    fn metropolis_path_passes_verification() {
        let topo = path3();
        let a = metropolis_path3(&topo);
        let s = consensus_subspace(3, 1).unwrap();
        let report = verify_conditions(&a, &s, &VerifyConfig::default()).unwrap();
        assert!(report.passes, "{report:?}");
        assert!((report.spectral_radius_gap - 2.0 / 3.0).abs() < 1e-10);
        assert_eq!(report.unit_eig_count, 1);
    }

    #[test]
    fn projector_itself_passes_with_zero_gap() {
        let topo = Arc::new(Topology::fully_connected(4, 1).unwrap());
        let s = orthonormalize(&synth::random_matrix(3, 4, 2), alloc::vec![1; 4]).unwrap();
        let a = BlockMatrix::from_dense(topo, &s.projector()).unwrap();
        let report = verify_conditions(&a, &s, &VerifyConfig::default()).unwrap();
        assert!(report.passes);
        assert!(report.spectral_radius_gap < 1e-10);
        assert_eq!(report.unit_eig_count, 2);
        assert!(report.power_limit_residual < 1e-10);
    }

    #[test]
    fn identity_fails_when_rank_deficient() {
        let topo = Arc::new(Topology::fully_connected(3, 1).unwrap());
        let s = consensus_subspace(3, 1).unwrap();
        let a = BlockMatrix::from_dense(topo, &CMatrix::identity(3, 3)).unwrap();
        let report = verify_conditions(&a, &s, &VerifyConfig::default()).unwrap();
        assert!(!report.passes);
        assert!((report.spectral_radius_gap - 1.0).abs() < 1e-10);
    }

    #[test]
    fn metropolis_power_residuals_are_geometric() {
        let topo = path3();
        let a = metropolis_path3(&topo);
        let s = consensus_subspace(3, 1).unwrap();
        let residuals = power_limit_check(&a, &s, 12).unwrap();
        for (i, r) in residuals.iter().enumerate() {
            let expected = libm::pow(2.0 / 3.0, (i + 1) as f64);
            assert!((r - expected).abs() < 1e-10, "i={} r={} expected={}", i + 1, r, expected);
        }
    }

    #[test]
    fn design_on_fully_connected_recovers_projector_fast() {
        let topo = Arc::new(Topology::fully_connected(4, 1).unwrap());
        let s = orthonormalize(&synth::random_matrix(5, 4, 2), alloc::vec![1; 4]).unwrap();
        let out = design_pocs(&topo, &s, &DesignConfig::default()).unwrap();
        assert!(out.cycles <= 2, "cycles = {}", out.cycles);
        assert!(frob(&(out.matrix.to_dense() - s.projector())) < 1e-6);
    }

    #[test]
    fn designed_consensus_matrix_is_doubly_stochastic_like() {
        let topo = Arc::new(
            Topology::from_edges(alloc::vec![1; 4], &[(0, 1), (1, 2), (2, 3)]).unwrap(),
        );
        let s = consensus_subspace(4, 1).unwrap();
        let out = design_pocs(&topo, &s, &DesignConfig::default()).unwrap();
        let dense = out.matrix.to_dense();
        let ones = CVector::from_element(4, cr(1.0));
        assert!((&dense * &ones - &ones).norm() < 1e-7);
        assert!((dense.adjoint() * &ones - &ones).norm() < 1e-7);
        assert!(validate_sparsity(&out.matrix, &topo, 0.0).unwrap());
        assert!(frob(&(dense.adjoint() - dense.clone())) == 0.0);
        let report = verify_conditions(&out.matrix, &s, &VerifyConfig { epsilon_report: 0.009, ..Default::default() }).unwrap();
        assert!(report.passes, "{report:?}");
    }

    #[test]
    fn non_hermitian_design_also_verifies() {
        let topo = Arc::new(
            Topology::from_edges(alloc::vec![1; 4], &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap(),
        );
        let s = consensus_subspace(4, 1).unwrap();
        let cfg = DesignConfig { hermitian: false, ..Default::default() };
        let out = design_pocs(&topo, &s, &cfg).unwrap();
        assert!(validate_sparsity(&out.matrix, &topo, 0.0).unwrap());
        let report = verify_conditions(&out.matrix, &s, &VerifyConfig::default()).unwrap();
        assert!(report.passes, "{report:?}");
    }

    #[test]
    fn disconnected_consensus_design_is_infeasible() {
        let topo = Arc::new(Topology::from_edges(alloc::vec![1, 1], &[]).unwrap());
        let s = consensus_subspace(2, 1).unwrap();
        let cfg = DesignConfig { max_iters: 300, ..Default::default() };
        match design_pocs(&topo, &s, &cfg) {
            Err(Error::Infeasible { .. }) => {}
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn consensus_combiner_validates_stochasticity() {
        let topo = path3();
        let mut bad = metropolis_weights(&topo);
        bad[(0, 0)] += 0.1;
        assert!(matches!(
            consensus_combiner(&topo, &bad, 1),
            Err(Error::Stochasticity(_))
        ));
        let mut off_pattern = DMatrix::zeros(3, 3);
        off_pattern[(0, 2)] = 0.5;
        off_pattern[(2, 0)] = 0.5;
        off_pattern[(0, 0)] = 0.5;
        off_pattern[(2, 2)] = 0.5;
        off_pattern[(1, 1)] = 1.0;
        assert!(matches!(
            consensus_combiner(&topo, &off_pattern, 1),
            Err(Error::Topology(_))
        ));
    }

    #[test]
    fn identity_combiner_constructs_but_fails_verification() {
        let topo = path3();
        let a = consensus_combiner(&topo, &DMatrix::identity(3, 3), 1).unwrap();
        let s = consensus_subspace(3, 1).unwrap();
        let report = verify_conditions(&a, &s, &VerifyConfig::default()).unwrap();
        assert!(!report.passes);
    }

    #[test]
    fn uniform_averaging_has_zero_gap() {
        let topo = Arc::new(Topology::fully_connected(3, 1).unwrap());
        let a = consensus_combiner(&topo, &DMatrix::from_element(3, 3, 1.0 / 3.0), 1).unwrap();
        let s = consensus_subspace(3, 1).unwrap();
        let report = verify_conditions(&a, &s, &VerifyConfig::default()).unwrap();
        assert!(report.spectral_radius_gap < 1e-10);
    }

    #[test]
    fn kronecker_expansion_duplicates_eigenvalues() {
        let topo = Arc::new(Topology::from_edges(alloc::vec![2, 2, 2], &[(0, 1), (1, 2)]).unwrap());
        let a_small = metropolis_weights(&topo);
        let a = consensus_combiner(&topo, &a_small, 2).unwrap();
        let mut eigs: Vec<f64> = linalg::eigenvalues(&a.to_dense())
            .unwrap()
            .into_iter()
            .map(|z| z.re)
            .collect();
        eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let expected = [0.0, 0.0, 2.0 / 3.0, 2.0 / 3.0, 1.0, 1.0];
        for (e, x) in eigs.iter().zip(expected.iter()) {
            assert!((e - x).abs() < 1e-10, "{eigs:?}");
        }
    }

    #[test]
    fn eigenstructure_of_projector() {
        let topo = Arc::new(Topology::fully_connected(4, 1).unwrap());
        let s = orthonormalize(&synth::random_matrix(7, 4, 2), alloc::vec![1; 4]).unwrap();
        let a = BlockMatrix::from_dense(topo, &s.projector()).unwrap();
        let rep = eigenstructure_report(&a, &s, 1e-8).unwrap();
        assert_eq!(rep.unit_count, 2);
        assert!(rep.max_sub_unit_modulus < 1e-10);
        assert!(rep.subspace_alignment < 1e-10);
    }

    #[test]
    fn eigenstructure_of_metropolis_path() {
        let topo = path3();
        let a = metropolis_path3(&topo);
        let s = consensus_subspace(3, 1).unwrap();
        let rep = eigenstructure_report(&a, &s, 1e-8).unwrap();
        assert_eq!(rep.unit_count, 1);
        assert!((rep.max_sub_unit_modulus - 2.0 / 3.0).abs() < 1e-10);
        assert!(rep.subspace_alignment <= 1e-10);
    }

    #[test]
    fn eigenstructure_rejects_wrong_multiplicity() {
        let topo = Arc::new(Topology::fully_connected(3, 1).unwrap());
        let s = consensus_subspace(3, 1).unwrap();
        let a = BlockMatrix::from_dense(topo, &CMatrix::identity(3, 3)).unwrap();
        assert!(matches!(
            eigenstructure_report(&a, &s, 1e-8),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn commuting_powers_identity() {
        // (A − P_U)^i == A^i − P_U for verified matrices.
        let topo = path3();
        let a = metropolis_path3(&topo).to_dense();
        let s = consensus_subspace(3, 1).unwrap();
        let p_u = s.projector();
        let b = &a - &p_u;
        let mut b_pow = CMatrix::identity(3, 3);
        let mut a_pow = CMatrix::identity(3, 3);
        for _ in 0..50 {
            b_pow = &b_pow * &b;
            a_pow = &a_pow * &a;
        }
        assert!(frob(&(b_pow - (&a_pow - &p_u))) <= 1e-8);
    }
}
