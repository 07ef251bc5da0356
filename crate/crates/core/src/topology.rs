//! Agent network model: per-agent block dimensions, neighborhoods, and
//! block-sparse matrices tied to the neighborhood pattern.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::{CMatrix, CVector, Error, Result};

/// An undirected agent network with per-agent block sizes.
///
/// Neighborhoods always contain the agent itself, and membership is
/// symmetric. Immutable after construction; share via [`Arc`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n_agents: usize,
    block_sizes: Vec<usize>,
    neighborhoods: Vec<BTreeSet<usize>>,
    offsets: Vec<usize>,
    total_dim: usize,
}

impl Topology {
    /// Build from explicit neighborhood sets (self-loops may be omitted;
    /// they are inserted automatically).
    pub fn new(block_sizes: Vec<usize>, mut neighborhoods: Vec<BTreeSet<usize>>) -> Result<Self> {
        let n = block_sizes.len();
        if n == 0 {
            return Err(Error::Topology("empty network".into()));
        }
        if neighborhoods.len() != n {
            return Err(Error::Topology(format!(
                "{} neighborhoods for {} agents",
                neighborhoods.len(),
                n
            )));
        }
        if block_sizes.contains(&0) {
            return Err(Error::Topology("zero block size".into()));
        }
        for (k, set) in neighborhoods.iter_mut().enumerate() {
            set.insert(k);
            if let Some(&max) = set.iter().next_back() {
                if max >= n {
                    return Err(Error::Topology(format!("agent index {max} out of range")));
                }
            }
        }
        for k in 0..n {
            for &l in &neighborhoods[k] {
                if !neighborhoods[l].contains(&k) {
                    return Err(Error::Topology(format!(
                        "asymmetric membership: {l} in N_{k} but {k} not in N_{l}"
                    )));
                }
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut acc = 0usize;
        for &m in &block_sizes {
            offsets.push(acc);
            acc += m;
        }
        offsets.push(acc);
        Ok(Self {
            n_agents: n,
            block_sizes,
            neighborhoods,
            offsets,
            total_dim: acc,
        })
    }

    /// Build from an undirected edge list (0-based pairs).
    pub fn from_edges(block_sizes: Vec<usize>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = block_sizes.len();
        let mut nbrs: Vec<BTreeSet<usize>> = (0..n).map(|k| BTreeSet::from([k])).collect();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Topology(format!("edge ({a},{b}) out of range")));
            }
            nbrs[a].insert(b);
            nbrs[b].insert(a);
        }
        Self::new(block_sizes, nbrs)
    }

    /// Fully connected network with uniform block size.
    pub fn fully_connected(n_agents: usize, block_size: usize) -> Result<Self> {
        let all: BTreeSet<usize> = (0..n_agents).collect();
        Self::new(alloc::vec![block_size; n_agents], alloc::vec![all; n_agents])
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn block_size(&self, k: usize) -> usize {
        self.block_sizes[k]
    }

    /// Stacked dimension `M = Σ M_k`.
    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    /// Sorted neighborhood of agent `k`, including `k` itself.
    pub fn neighborhood(&self, k: usize) -> &BTreeSet<usize> {
        &self.neighborhoods[k]
    }

    pub fn contains_edge(&self, k: usize, l: usize) -> bool {
        self.neighborhoods[k].contains(&l)
    }

    /// Row/column range of agent `k` inside stacked vectors and matrices.
    pub fn block_range(&self, k: usize) -> core::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    /// Undirected edges (k < l), excluding self-loops.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for k in 0..self.n_agents {
            for &l in &self.neighborhoods[k] {
                if l > k {
                    out.push((k, l));
                }
            }
        }
        out
    }
}

/// Breadth-first connectivity of the undirected neighbor graph.
pub fn is_connected(topology: &Topology) -> bool {
    let n = topology.n_agents();
    let mut seen = alloc::vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1usize;
    while let Some(k) = queue.pop_front() {
        for &l in topology.neighborhood(k) {
            if !seen[l] {
                seen[l] = true;
                count += 1;
                queue.push_back(l);
            }
        }
    }
    count == n
}

/// Binary connection matrix `E` with `E[k,l] = 1` iff `l ∈ N_k`.
///
/// Symmetric with unit diagonal for every valid topology.
pub fn connection_matrix(topology: &Topology) -> DMatrix<f64> {
    let n = topology.n_agents();
    let mut e = DMatrix::zeros(n, n);
    for k in 0..n {
        for &l in topology.neighborhood(k) {
            e[(k, l)] = 1.0;
        }
    }
    e
}

/// Read-only access to the blocks of a combination matrix.
///
/// The distributed recursion mixes neighbor estimates exclusively through
/// this trait, so an implementation that only stores on-pattern blocks
/// enforces the locality contract structurally. Test doubles can fault on
/// off-pattern access.
pub trait BlockAccess {
    fn topology(&self) -> &Topology;

    /// The `(k, l)` block, if stored.
    fn block(&self, k: usize, l: usize) -> Option<&CMatrix>;

    /// Block-sparse product `y = A x`, touching only neighborhood blocks.
    fn apply(&self, x: &CVector) -> CVector {
        let topo = self.topology();
        let mut y = CVector::zeros(topo.total_dim());
        for k in 0..topo.n_agents() {
            let range_k = topo.block_range(k);
            for &l in topo.neighborhood(k) {
                if let Some(b) = self.block(k, l) {
                    let xl = x.rows(topo.block_range(l).start, topo.block_size(l));
                    let mut yk = y.rows_mut(range_k.start, range_k.len());
                    yk.gemv(crate::cr(1.0), b, &xl, crate::cr(1.0));
                }
            }
        }
        y
    }
}

/// A complex `M × M` matrix stored block-wise against a [`Topology`].
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    topology: Arc<Topology>,
    blocks: BTreeMap<(usize, usize), CMatrix>,
}

impl BlockMatrix {
    pub fn new(topology: Arc<Topology>) -> Self {
        Self {
            topology,
            blocks: BTreeMap::new(),
        }
    }

    /// Insert block `(k, l)`; its dimensions must match `(M_k, M_l)`.
    pub fn set_block(&mut self, k: usize, l: usize, block: CMatrix) -> Result<()> {
        let (mk, ml) = (self.topology.block_size(k), self.topology.block_size(l));
        if block.shape() != (mk, ml) {
            return Err(Error::Shape(format!(
                "block ({k},{l}) is {}x{}, expected {mk}x{ml}",
                block.nrows(),
                block.ncols()
            )));
        }
        self.blocks.insert((k, l), block);
        Ok(())
    }

    /// Capture every nonzero block of a dense matrix (including any
    /// off-pattern ones, so sparsity validation can inspect them).
    pub fn from_dense(topology: Arc<Topology>, dense: &CMatrix) -> Result<Self> {
        let m = topology.total_dim();
        if dense.shape() != (m, m) {
            return Err(Error::Shape(format!(
                "dense matrix is {}x{}, expected {m}x{m}",
                dense.nrows(),
                dense.ncols()
            )));
        }
        let mut out = Self::new(topology.clone());
        for k in 0..topology.n_agents() {
            for l in 0..topology.n_agents() {
                let rk = topology.block_range(k);
                let rl = topology.block_range(l);
                let view = dense.view((rk.start, rl.start), (rk.len(), rl.len()));
                if view.iter().any(|z| z.norm_sqr() != 0.0) {
                    out.blocks.insert((k, l), view.into_owned());
                }
            }
        }
        Ok(out)
    }

    /// Capture only on-pattern blocks of a dense matrix; anything off the
    /// neighborhood pattern is dropped (structurally zero).
    pub fn from_dense_on_pattern(topology: Arc<Topology>, dense: &CMatrix) -> Result<Self> {
        let mut out = Self::from_dense(topology.clone(), dense)?;
        out.blocks.retain(|&(k, l), _| topology.contains_edge(k, l));
        Ok(out)
    }

    pub fn topology_arc(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn stored_blocks(&self) -> impl Iterator<Item = (&(usize, usize), &CMatrix)> {
        self.blocks.iter()
    }

    /// Dense `M × M` materialization with zeros at unstored blocks.
    pub fn to_dense(&self) -> CMatrix {
        let m = self.topology.total_dim();
        let mut dense = CMatrix::zeros(m, m);
        for (&(k, l), b) in &self.blocks {
            let rk = self.topology.block_range(k);
            let rl = self.topology.block_range(l);
            dense.view_mut((rk.start, rl.start), (rk.len(), rl.len())).copy_from(b);
        }
        dense
    }
}

impl BlockAccess for BlockMatrix {
    fn topology(&self) -> &Topology {
        &self.topology
    }

    fn block(&self, k: usize, l: usize) -> Option<&CMatrix> {
        self.blocks.get(&(k, l))
    }
}

/// True iff every stored block outside the neighborhood pattern has
/// entrywise magnitude at most `tol`.
///
/// `topology` supplies the pattern; its block layout must match the
/// matrix's own.
pub fn validate_sparsity(a: &BlockMatrix, topology: &Topology, tol: f64) -> Result<bool> {
    if a.topology.block_sizes() != topology.block_sizes() {
        return Err(Error::Shape(format!(
            "block layouts differ: {:?} vs {:?}",
            a.topology.block_sizes(),
            topology.block_sizes()
        )));
    }
    for (&(k, l), block) in &a.blocks {
        if k != l && !topology.contains_edge(k, l) {
            let max_mag = block.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if max_mag > tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
