//! Seeded synthetic instances: random topologies, subspaces, costs, and
//! combination matrices with prescribed spectra. Deterministic given the
//! seed; used by benchmarks, experiments, and the test suites.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::costs::QuadraticCost;
use crate::linalg::null_space_of_adjoint;
use crate::rng::DrawSeq;
use crate::subspace::Subspace;
use crate::topology::Topology;
use crate::{cr, C64, CMatrix, CVector, Result};

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn random_matrix(seed: u64, rows: usize, cols: usize) -> CMatrix {
    let mut s = DrawSeq::for_cell(seed, 0, 0, 0);
    CMatrix::from_fn(rows, cols, |_, _| s.next_complex_gaussian())
}

/// Vector with i.i.d. standard complex Gaussian entries.
pub fn random_vector(seed: u64, n: usize) -> CVector {
    let mut s = DrawSeq::for_cell(seed, 0, 0, 1);
    CVector::from_fn(n, |_, _| s.next_complex_gaussian())
}

/// Hermitian positive-definite matrix `scale·(G G*/n + 0.1 I)`.
pub fn random_psd(seed: u64, n: usize, scale: f64) -> CMatrix {
    let g = random_matrix(seed, n, n);
    let mut out = &g * g.adjoint() / cr(n as f64);
    for i in 0..n {
        out[(i, i)] += cr(0.1);
    }
    out * cr(scale)
}

/// Connected undirected topology on `n` agents: a random spanning chain
/// plus independent extra edges with probability `edge_prob`. Block sizes
/// are drawn uniformly from `block_range`.
pub fn random_connected_topology(
    seed: u64,
    n: usize,
    block_range: (usize, usize),
    edge_prob: f64,
) -> Result<Arc<Topology>> {
    let mut s = DrawSeq::for_cell(seed, 0, 0, 2);
    let (lo, hi) = block_range;
    let sizes: Vec<usize> = (0..n)
        .map(|_| lo + (s.next_u64() as usize) % (hi - lo + 1))
        .collect();
    // Random chain over a shuffled agent order keeps connectivity.
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (s.next_u64() as usize) % (i + 1);
        order.swap(i, j);
    }
    let mut edges: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0], w[1])).collect();
    for a in 0..n {
        for b in (a + 1)..n {
            if s.next_unit() < edge_prob {
                edges.push((a, b));
            }
        }
    }
    Ok(Arc::new(Topology::from_edges(sizes, &edges)?))
}

/// Random `P`-dimensional subspace over the given block layout.
pub fn random_subspace(seed: u64, block_sizes: &[usize], p: usize) -> Result<Subspace> {
    let m: usize = block_sizes.iter().sum();
    let raw = random_matrix(seed, m, p);
    crate::subspace::orthonormalize(&raw, block_sizes.to_vec())
}

/// Random per-agent quadratic costs with positive-definite curvatures.
pub fn random_costs(seed: u64, block_sizes: &[usize]) -> Vec<QuadraticCost> {
    block_sizes
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let r = random_psd(seed.wrapping_add(1000 + k as u64), d, 1.0);
            let rv = random_vector(seed.wrapping_add(2000 + k as u64), d);
            QuadraticCost::new(r, rv, 0.0).expect("synthetic cost is valid")
        })
        .collect()
}

/// Random positive-definite costs whose per-agent minimizers all sit at the
/// blocks of `w_ref` (`r_k = R_k w_ref_k`), so a constraint-feasible
/// reference is the exact network optimum with zero bias.
pub fn zero_bias_costs(seed: u64, block_sizes: &[usize], w_ref: &CVector) -> Vec<QuadraticCost> {
    let mut out = Vec::with_capacity(block_sizes.len());
    let mut off = 0usize;
    for (k, &d) in block_sizes.iter().enumerate() {
        let r = random_psd(seed.wrapping_add(3000 + k as u64), d, 1.0);
        let rv = &r * w_ref.rows(off, d).into_owned();
        out.push(QuadraticCost::new(r, rv, 0.0).expect("synthetic cost is valid"));
        off += d;
    }
    out
}

/// A normal combination matrix with the exact spectrum
/// `{1 (×P)} ∪ sub_unit`: `A = P_U + V diag(sub_unit) V*` where `V` is an
/// orthonormal complement of the subspace basis.
///
/// Satisfies `A U = U` and `U* A = U*` by construction; it converges to the
/// projector iff every `sub_unit` modulus is below one.
pub fn combiner_with_spectrum(s: &Subspace, sub_unit: &[C64]) -> Result<CMatrix> {
    let m = s.dim();
    let p = s.rank();
    assert_eq!(sub_unit.len(), m - p, "need M − P sub-unit eigenvalues");
    let complement = null_space_of_adjoint(s.basis())?;
    let d = CMatrix::from_diagonal(&CVector::from_iterator(m - p, sub_unit.iter().copied()));
    Ok(s.projector() + &complement * d * complement.adjoint())
}

/// Uniformly random sub-unit eigenvalue list with moduli at most `rho_max`.
pub fn random_sub_unit_spectrum(seed: u64, count: usize, rho_max: f64) -> Vec<C64> {
    let mut s = DrawSeq::for_cell(seed, 0, 0, 3);
    (0..count)
        .map(|_| {
            let r = rho_max * s.next_unit();
            let theta = core::f64::consts::TAU * s.next_unit();
            C64::new(r * libm::cos(theta), r * libm::sin(theta))
        })
        .collect()
}
