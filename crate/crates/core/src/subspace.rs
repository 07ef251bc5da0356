//! Constraint subspaces: semi-unitary bases, projectors, and the scenario
//! families (consensus, coupled variables, graph smoothness, affine sets).

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::linalg::{
    self, hermitian_eigen, null_space_of_adjoint, orthonormalize_mgs, phase_normalize_columns,
    solve_hpd,
};
use crate::{cr, CMatrix, CVector, Error, Result};

const SEMI_UNITARY_TOL: f64 = 1e-10;

/// A `P`-dimensional constraint subspace of the stacked network space,
/// held as a semi-unitary basis `U` (`U*U = I_P`) with a row-block layout
/// matching the agents' block sizes.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: CMatrix,
    block_sizes: Vec<usize>,
}

impl Subspace {
    /// Wrap an already semi-unitary basis. Fails if `U*U` deviates from the
    /// identity by more than `1e-10`, if `P > M`, or if the block layout
    /// does not sum to `M`.
    pub fn new(basis: CMatrix, block_sizes: Vec<usize>) -> Result<Self> {
        let (m, p) = basis.shape();
        if p > m {
            return Err(Error::Rank(format!("rank {p} exceeds dimension {m}")));
        }
        let total: usize = block_sizes.iter().sum();
        if total != m {
            return Err(Error::Shape(format!(
                "block layout sums to {total}, basis has {m} rows"
            )));
        }
        let gram = basis.adjoint() * &basis;
        let dev = linalg::frob(&(gram - CMatrix::identity(p, p)));
        if dev > SEMI_UNITARY_TOL {
            return Err(Error::Rank(format!(
                "basis is not semi-unitary (‖U*U − I‖ = {dev:.3e})"
            )));
        }
        Ok(Self { basis, block_sizes })
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    /// Subspace dimension `P`.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Ambient dimension `M`.
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// The orthogonal projector `P_U = U U*` (Hermitian, idempotent,
    /// trace `P`).
    pub fn projector(&self) -> CMatrix {
        &self.basis * self.basis.adjoint()
    }

    /// Apply the projector to a vector without materializing it: `U (U* x)`.
    pub fn project(&self, x: &CVector) -> CVector {
        &self.basis * (self.basis.adjoint() * x)
    }
}

/// An affine constraint set `{W : D* W = d}` with its subspace-plus-offset
/// reduction: `W = d_D + U s` where `d_D = D(D*D)^{-1} d`.
#[derive(Debug, Clone)]
pub struct AffineConstraint {
    d_matrix: CMatrix,
    d_vector: CVector,
    offset: CVector,
}

impl AffineConstraint {
    pub fn d_matrix(&self) -> &CMatrix {
        &self.d_matrix
    }

    pub fn d_vector(&self) -> &CVector {
        &self.d_vector
    }

    /// The least-norm particular solution `d_D` of `D* W = d`.
    pub fn offset(&self) -> &CVector {
        &self.offset
    }
}

/// Orthonormalize a full-column-rank raw basis (modified Gram–Schmidt with
/// one reorthogonalization pass), preserving its column span.
pub fn orthonormalize(raw_basis: &CMatrix, block_sizes: Vec<usize>) -> Result<Subspace> {
    let mut q = orthonormalize_mgs(raw_basis, 1e-10)?;
    phase_normalize_columns(&mut q);
    Subspace::new(q, block_sizes)
}

/// Consensus family: all agents share one `L`-dimensional parameter.
///
/// `U = (1/√N)(1_N ⊗ I_L)`, so `M = N·L` and `P = L`.
pub fn consensus_subspace(n_agents: usize, l: usize) -> Result<Subspace> {
    if n_agents == 0 || l == 0 {
        return Err(Error::Config("consensus subspace needs N ≥ 1 and L ≥ 1".into()));
    }
    let scale = cr(1.0 / libm::sqrt(n_agents as f64));
    let mut basis = CMatrix::zeros(n_agents * l, l);
    for k in 0..n_agents {
        for i in 0..l {
            basis[(k * l + i, i)] = scale;
        }
    }
    Subspace::new(basis, alloc::vec![l; n_agents])
}

/// Coupled-variable family: agent `k` owns the scalar global variables
/// listed in `assignment[k]`; the stacked vector is a selection of the
/// global vector, normalized per variable by `1/√multiplicity`.
///
/// Connectivity of the agents sharing each variable is the caller's
/// responsibility.
pub fn coupled_subspace(assignment: &[Vec<usize>], global_dim: usize) -> Result<Subspace> {
    if assignment.is_empty() || global_dim == 0 {
        return Err(Error::Config("coupled subspace needs agents and global variables".into()));
    }
    let mut multiplicity = alloc::vec![0usize; global_dim];
    for vars in assignment {
        for &g in vars {
            if g >= global_dim {
                return Err(Error::Config(format!("global variable {g} out of range")));
            }
            multiplicity[g] += 1;
        }
    }
    if let Some(unused) = multiplicity.iter().position(|&c| c == 0) {
        return Err(Error::Rank(format!("global variable {unused} is used by no agent")));
    }
    let block_sizes: Vec<usize> = assignment.iter().map(Vec::len).collect();
    if block_sizes.contains(&0) {
        return Err(Error::Config("every agent must own at least one variable".into()));
    }
    let m: usize = block_sizes.iter().sum();
    let mut basis = CMatrix::zeros(m, global_dim);
    let mut row = 0usize;
    for vars in assignment {
        for &g in vars {
            basis[(row, g)] = cr(1.0 / libm::sqrt(multiplicity[g] as f64));
            row += 1;
        }
    }
    Subspace::new(basis, block_sizes)
}

/// Result of [`smoothness_subspace`]: the basis plus the Laplacian spectrum
/// and a degeneracy flag raised when the cut `λ_p / λ_{p+1}` is not clean
/// (e.g. a disconnected graph), in which case the retained eigenvectors are
/// not unique.
#[derive(Debug, Clone)]
pub struct SmoothnessBasis {
    pub subspace: Subspace,
    pub laplacian_eigenvalues: Vec<f64>,
    pub degenerate_cut: bool,
}

/// Smoothness family: the `p` Laplacian eigenvectors with smallest
/// eigenvalues, Kronecker-expanded by `I_L`.
///
/// `adjacency` must be symmetric with zero diagonal and nonnegative weights.
pub fn smoothness_subspace(adjacency: &DMatrix<f64>, p: usize, l: usize) -> Result<SmoothnessBasis> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n || n == 0 {
        return Err(Error::Shape("adjacency must be square and nonempty".into()));
    }
    if p < 1 || p > n || l == 0 {
        return Err(Error::Config(format!("need 1 ≤ p ≤ {n} and L ≥ 1")));
    }
    for i in 0..n {
        if adjacency[(i, i)] != 0.0 {
            return Err(Error::Config("adjacency diagonal must be zero".into()));
        }
        for j in 0..n {
            if adjacency[(i, j)] < 0.0 {
                return Err(Error::Config("adjacency weights must be nonnegative".into()));
            }
            if (adjacency[(i, j)] - adjacency[(j, i)]).abs() > 0.0 {
                return Err(Error::Config("adjacency must be symmetric".into()));
            }
        }
    }
    // L_c = diag(C 1) − C, promoted to complex for the shared eigensolver.
    let mut lap = CMatrix::zeros(n, n);
    for i in 0..n {
        let degree: f64 = adjacency.row(i).iter().sum();
        lap[(i, i)] = cr(degree);
        for j in 0..n {
            if i != j {
                lap[(i, j)] = cr(-adjacency[(i, j)]);
            }
        }
    }
    let (vals, vecs) = hermitian_eigen(&lap);
    let scale = vals.last().copied().unwrap_or(1.0).max(1.0);
    let degenerate_cut = p < n && (vals[p] - vals[p - 1]).abs() <= 1e-9 * scale;
    let mut small = vecs.columns(0, p).into_owned();
    phase_normalize_columns(&mut small);
    // Kronecker expansion by I_L.
    let mut basis = CMatrix::zeros(n * l, p * l);
    for r in 0..n {
        for c in 0..p {
            for i in 0..l {
                basis[(r * l + i, c * l + i)] = small[(r, c)];
            }
        }
    }
    Ok(SmoothnessBasis {
        subspace: Subspace::new(basis, alloc::vec![l; n])?,
        laplacian_eigenvalues: vals,
        degenerate_cut,
    })
}

/// Reduce the affine set `{W : D* W = d}` to a subspace plus offset.
///
/// The returned basis spans the null space of `D*` (the eigenvalue-one
/// eigenvectors of `I − D(D*D)^{-1}D*`), and the constraint carries the
/// least-norm offset `d_D = D(D*D)^{-1} d`.
pub fn affine_to_subspace(
    dmat: &CMatrix,
    dvec: &CVector,
    block_sizes: Vec<usize>,
) -> Result<(Subspace, AffineConstraint)> {
    let (m, q) = dmat.shape();
    if dvec.len() != q {
        return Err(Error::Shape(format!(
            "constraint vector has {} entries for {q} constraint columns",
            dvec.len()
        )));
    }
    let basis = null_space_of_adjoint(dmat)?;
    let gram = dmat.adjoint() * dmat;
    let x = solve_hpd(&gram, dvec)?;
    let offset = dmat * x;
    debug_assert!(m == basis.nrows());
    let subspace = Subspace::new(basis, block_sizes)?;
    Ok((
        subspace,
        AffineConstraint {
            d_matrix: dmat.clone(),
            d_vector: dvec.clone(),
            offset,
        },
    ))
}
