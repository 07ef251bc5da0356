//! File formats: combiner matrices and subspace bases as TOML documents,
//! metric outputs as RFC-4180-style CSV with `#`-prefixed metadata headers.
//!
//! Floats are written with Rust's shortest round-trip formatting (`.`
//! decimal, no locale), so identical inputs produce byte-identical files.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use netspan_core::combiner::VerificationReport;
use netspan_core::metrics::{AgentPlateau, EnsembleStats, ScalingReport, SinrCurve, Trajectory};
use netspan_core::subspace::Subspace;
use netspan_core::topology::{BlockMatrix, Topology};
use netspan_core::{C64, CMatrix};

use crate::{io_err, CliError, CliResult, TOOL_VERSION};

/// Reproducibility stamp carried by every CSV artifact.
#[derive(Debug, Clone, Copy)]
pub struct OutputMeta {
    pub config_hash: u64,
    pub master_seed: u64,
    pub runs: usize,
    pub mu: f64,
    pub variant: &'static str,
}

pub fn variant_name(v: netspan_core::engine::Variant) -> &'static str {
    use netspan_core::engine::Variant::*;
    match v {
        Centralized => "centralized",
        Distributed => "distributed",
        DistributedAffine => "distributed-affine",
        LinearProjection => "linear-projection",
    }
}

fn header(w: &mut impl Write, meta: &OutputMeta) -> std::io::Result<()> {
    writeln!(w, "# netspan v{TOOL_VERSION}")?;
    writeln!(w, "# config_hash: {:#018x}", meta.config_hash)?;
    writeln!(w, "# master_seed: {}", meta.master_seed)?;
    writeln!(w, "# runs: {}", meta.runs)?;
    writeln!(w, "# variant: {}", meta.variant)?;
    writeln!(w, "# mu: {}", meta.mu)
}

fn write_file(path: &Path, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> CliResult<()> {
    let mut buf = Vec::new();
    body(&mut buf).map_err(io_err(path.display()))?;
    std::fs::write(path, buf).map_err(io_err(path.display()))
}

pub fn write_msd_csv(path: &Path, stats: &EnsembleStats, meta: &OutputMeta) -> CliResult<()> {
    write_file(path, |w| {
        header(w, meta)?;
        writeln!(w, "iter,msd,stderr")?;
        for ((it, msd), se) in stats.iterations.iter().zip(&stats.msd).zip(&stats.stderr) {
            writeln!(w, "{it},{msd},{se}")?;
        }
        Ok(())
    })
}

pub fn write_per_agent_csv(path: &Path, table: &[AgentPlateau], meta: &OutputMeta) -> CliResult<()> {
    write_file(path, |w| {
        header(w, meta)?;
        writeln!(w, "agent,steady_state_mse,stderr")?;
        for row in table {
            writeln!(w, "{},{},{}", row.agent + 1, row.steady_state_mse, row.stderr)?;
        }
        Ok(())
    })
}

pub fn write_sinr_csv(path: &Path, curve: &SinrCurve, meta: &OutputMeta) -> CliResult<()> {
    write_file(path, |w| {
        header(w, meta)?;
        writeln!(w, "iter,sinr_db,stderr")?;
        for ((it, db), se) in curve.iterations.iter().zip(&curve.sinr_db).zip(&curve.stderr_db) {
            writeln!(w, "{it},{db},{se}")?;
        }
        Ok(())
    })
}

pub fn write_scaling_csv(path: &Path, report: &ScalingReport, meta: &OutputMeta) -> CliResult<()> {
    write_file(path, |w| {
        header(w, meta)?;
        writeln!(w, "mu,msd,stderr")?;
        for p in &report.points {
            writeln!(w, "{},{},{}", p.mu, p.steady_state_msd, p.stderr)?;
        }
        match report.slope {
            Some(slope) => writeln!(w, "# slope: {slope}"),
            None => writeln!(w, "# slope: skipped (all plateaus at numerical zero)"),
        }
    })
}

/// Per-run trajectory records (`iter,agent,sq_error`).
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, meta: &OutputMeta) -> CliResult<()> {
    write_file(path, |w| {
        header(w, meta)?;
        writeln!(w, "# run_index: {}", traj.meta.run_index)?;
        writeln!(w, "iter,agent,sq_error")?;
        for r in &traj.records {
            writeln!(w, "{},{},{}", r.iteration, r.agent + 1, r.sq_error)?;
        }
        Ok(())
    })
}

pub fn render_report(report: &VerificationReport) -> String {
    format!(
        "right eigenvector residual  ‖AU − U‖_F  : {:.6e}\n\
         left eigenvector residual   ‖U*A − U*‖_F: {:.6e}\n\
         spectral radius ρ(A − P_U)              : {:.9}\n\
         unit eigenvalue count                   : {}\n\
         power-limit residual ‖A^i − P_U‖₂       : {:.6e}\n\
         passes                                  : {}\n",
        report.right_eig_residual,
        report.left_eig_residual,
        report.spectral_radius_gap,
        report.unit_eig_count,
        report.power_limit_residual,
        if report.passes { "yes" } else { "no" }
    )
}

// ---------------------------------------------------------------------------
// Combiner matrix files.

fn fmt_rows(m: &CMatrix, part: fn(&C64) -> f64) -> String {
    let mut s = String::from("[");
    for i in 0..m.nrows() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push('[');
        for j in 0..m.ncols() {
            if j > 0 {
                s.push_str(", ");
            }
            s.push_str(&format!("{:?}", part(&m[(i, j)])));
        }
        s.push(']');
    }
    s.push(']');
    s
}

/// Serialize a block matrix as a TOML document of `{k, l, re, im}` blocks
/// (1-based indices).
pub fn write_block_matrix(path: &Path, a: &BlockMatrix) -> CliResult<()> {
    let topo = a.topology_arc();
    write_file(path, |w| {
        writeln!(w, "# combination matrix (blocks are 1-based)")?;
        writeln!(w, "n_agents = {}", topo.n_agents())?;
        writeln!(w, "block_sizes = {:?}", topo.block_sizes())?;
        for (&(k, l), block) in a.stored_blocks() {
            writeln!(w)?;
            writeln!(w, "[[blocks]]")?;
            writeln!(w, "k = {}", k + 1)?;
            writeln!(w, "l = {}", l + 1)?;
            writeln!(w, "re = {}", fmt_rows(block, |z| z.re))?;
            writeln!(w, "im = {}", fmt_rows(block, |z| z.im))?;
        }
        Ok(())
    })
}

#[derive(Deserialize)]
struct MatrixDoc {
    n_agents: usize,
    block_sizes: Vec<usize>,
    #[serde(default)]
    blocks: Vec<BlockDoc>,
}

#[derive(Deserialize)]
struct BlockDoc {
    k: usize,
    l: usize,
    re: Vec<Vec<f64>>,
    im: Option<Vec<Vec<f64>>>,
}

/// Read a block matrix; its layout must match `topology`.
pub fn read_block_matrix(path: &Path, topology: &Arc<Topology>) -> CliResult<BlockMatrix> {
    let text = std::fs::read_to_string(path).map_err(io_err(path.display()))?;
    let doc: MatrixDoc = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    if doc.n_agents != topology.n_agents() || doc.block_sizes != topology.block_sizes() {
        return Err(CliError::Config(format!(
            "matrix file layout ({:?}) does not match the configured topology ({:?})",
            doc.block_sizes,
            topology.block_sizes()
        )));
    }
    let mut out = BlockMatrix::new(topology.clone());
    for b in &doc.blocks {
        if b.k == 0 || b.l == 0 {
            return Err(CliError::Config("block indices are 1-based".into()));
        }
        let (k, l) = (b.k - 1, b.l - 1);
        let rows = b.re.len();
        let cols = b.re.first().map(Vec::len).unwrap_or(0);
        if b.re.iter().any(|r| r.len() != cols) {
            return Err(CliError::Config(format!("block ({},{}): ragged rows", b.k, b.l)));
        }
        if let Some(im) = &b.im {
            if im.len() != rows || im.iter().any(|r| r.len() != cols) {
                return Err(CliError::Config(format!(
                    "block ({},{}): imaginary part shape mismatch",
                    b.k, b.l
                )));
            }
        }
        let block = CMatrix::from_fn(rows, cols, |i, j| {
            C64::new(b.re[i][j], b.im.as_ref().map(|m| m[i][j]).unwrap_or(0.0))
        });
        out.set_block(k, l, block)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Topology files.

/// Serialize a topology (`n_agents`, `block_sizes`, 1-based `edges`).
pub fn write_topology(path: &Path, topology: &Topology) -> CliResult<()> {
    write_file(path, |w| {
        writeln!(w, "# network topology (edges are 1-based)")?;
        writeln!(w, "n_agents = {}", topology.n_agents())?;
        writeln!(w, "block_sizes = {:?}", topology.block_sizes())?;
        let edges: Vec<[usize; 2]> = topology
            .edges()
            .into_iter()
            .map(|(a, b)| [a + 1, b + 1])
            .collect();
        write!(w, "edges = [")?;
        for (i, e) in edges.iter().enumerate() {
            if i > 0 {
                write!(w, ", ")?;
            }
            write!(w, "[{}, {}]", e[0], e[1])?;
        }
        writeln!(w, "]")
    })
}

#[derive(Deserialize)]
struct TopologyDoc {
    n_agents: usize,
    block_sizes: Vec<usize>,
    edges: Vec<[usize; 2]>,
}

pub fn read_topology(path: &Path) -> CliResult<Arc<Topology>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path.display()))?;
    let doc: TopologyDoc = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    if doc.block_sizes.len() != doc.n_agents {
        return Err(CliError::Config("block_sizes length must equal n_agents".into()));
    }
    let edges: Vec<(usize, usize)> = doc
        .edges
        .iter()
        .map(|&[a, b]| {
            if a == 0 || b == 0 {
                Err(CliError::Config("edges are 1-based".into()))
            } else {
                Ok((a - 1, b - 1))
            }
        })
        .collect::<CliResult<_>>()?;
    Ok(Arc::new(Topology::from_edges(doc.block_sizes, &edges)?))
}

// ---------------------------------------------------------------------------
// Subspace files (pairs of real matrices).

/// Serialize a subspace basis as real and imaginary row-major parts.
pub fn write_subspace(path: &Path, s: &Subspace) -> CliResult<()> {
    write_file(path, |w| {
        writeln!(w, "# constraint subspace basis")?;
        writeln!(w, "block_sizes = {:?}", s.block_sizes())?;
        writeln!(w, "basis_re = {}", fmt_rows(s.basis(), |z| z.re))?;
        writeln!(w, "basis_im = {}", fmt_rows(s.basis(), |z| z.im))?;
        Ok(())
    })
}

#[derive(Deserialize)]
struct SubspaceDoc {
    block_sizes: Vec<usize>,
    basis_re: Vec<Vec<f64>>,
    basis_im: Option<Vec<Vec<f64>>>,
}

pub fn read_subspace(path: &Path) -> CliResult<Subspace> {
    let text = std::fs::read_to_string(path).map_err(io_err(path.display()))?;
    let doc: SubspaceDoc = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    let rows = doc.basis_re.len();
    let cols = doc.basis_re.first().map(Vec::len).unwrap_or(0);
    if doc.basis_re.iter().any(|r| r.len() != cols) {
        return Err(CliError::Config("basis_re has ragged rows".into()));
    }
    if let Some(im) = &doc.basis_im {
        if im.len() != rows || im.iter().any(|r| r.len() != cols) {
            return Err(CliError::Config("basis_im shape mismatch".into()));
        }
    }
    let basis = CMatrix::from_fn(rows, cols, |i, j| {
        C64::new(
            doc.basis_re[i][j],
            doc.basis_im.as_ref().map(|m| m[i][j]).unwrap_or(0.0),
        )
    });
    Ok(Subspace::new(basis, doc.block_sizes)?)
}
