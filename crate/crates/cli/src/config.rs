//! Declarative experiment configuration: one TOML file drives the whole
//! design → verify → run → metrics pipeline.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use netspan_core::beamformer::UlaScenario;
use netspan_core::combiner::{consensus_combiner, design_pocs, metropolis_weights, DesignConfig};
use netspan_core::costs::{network_optimum, QuadraticCost, SampleStream, StreamKind};
use netspan_core::engine::{GradientMode, RunConfig, Scenario, StochasticSource, Variant};
use netspan_core::rng::DrawSeq;
use netspan_core::subspace::{
    affine_to_subspace, consensus_subspace, coupled_subspace, smoothness_subspace, AffineConstraint,
    Subspace,
};
use netspan_core::topology::{BlockMatrix, Topology};
use netspan_core::{cr, C64, CMatrix, CVector};

use crate::formats;
use crate::{config_hash, io_err, CliError, CliResult};

fn c_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub topology: Option<TopologySection>,
    pub subspace: Option<SubspaceSection>,
    pub scenario: Option<ScenarioSection>,
    pub beamformer: Option<BeamformerSection>,
    #[serde(default)]
    pub combiner: CombinerSection,
    pub run: Option<RunSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub n_agents: usize,
    pub block_sizes: Vec<usize>,
    /// Undirected edges as 1-based `[k, l]` pairs.
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceSection {
    pub family: String,
    /// Per-agent parameter length for `consensus`/`smoothness`.
    pub l: Option<usize>,
    /// `coupled`: 1-based global variable ids per agent.
    pub assignment: Option<Vec<Vec<usize>>>,
    pub global_dim: Option<usize>,
    /// `smoothness`: symmetric weighted adjacency and spectral cutoff.
    pub adjacency: Option<Vec<Vec<f64>>>,
    pub p: Option<usize>,
    /// `affine`: constraint matrix and vector (real/imaginary parts).
    pub d_re: Option<Vec<Vec<f64>>>,
    pub d_im: Option<Vec<Vec<f64>>>,
    pub d_vec_re: Option<Vec<f64>>,
    pub d_vec_im: Option<Vec<f64>>,
    /// `file`: serialized basis path.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    /// `regression`, `minimum-variance`, or `beamformer`.
    pub kind: String,
    pub sigma_v: Option<f64>,
    /// Shared reference vector; omitted means a seeded random reference
    /// per agent.
    pub w_ref_re: Option<Vec<f64>>,
    pub w_ref_im: Option<Vec<f64>>,
    /// `identity` (default) or `explicit`.
    pub covariance: Option<String>,
    pub scale: Option<f64>,
    pub scales: Option<Vec<f64>>,
    pub cov_re: Option<Vec<Vec<f64>>>,
    pub cov_im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamformerSection {
    pub n_antennas: Option<usize>,
    pub nu: Option<usize>,
    pub doas_deg: Option<Vec<f64>>,
    pub powers: Option<Vec<f64>>,
    pub sigma_v: Option<f64>,
    pub spacing_ratio: Option<f64>,
    pub constraint_doas_deg: Option<Vec<f64>>,
    pub constraint_gains: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CombinerSection {
    /// `design` (default), `metropolis`, or `file`.
    pub source: Option<String>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub hermitian: Option<bool>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub variant: String,
    pub gradient: Option<String>,
    pub mu: Option<f64>,
    pub mus: Option<Vec<f64>>,
    pub iterations: u64,
    pub runs: Option<usize>,
    pub master_seed: Option<u64>,
    pub record_stride: Option<u64>,
    pub record_iterates: Option<bool>,
    /// `zeros` (default) or `random` (seeded from the master seed).
    pub w_init: Option<String>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// Also write the run-0 trajectory CSV.
    pub trajectories: Option<bool>,
}

/// A parsed config plus the hash of its raw bytes.
pub struct LoadedConfig {
    pub raw: RawConfig,
    pub hash: u64,
    pub path: PathBuf,
}

pub fn load(path: &Path) -> CliResult<LoadedConfig> {
    let bytes = std::fs::read(path).map_err(io_err(path.display()))?;
    let raw: RawConfig = toml::from_str(std::str::from_utf8(&bytes).map_err(c_err)?).map_err(c_err)?;
    Ok(LoadedConfig {
        raw,
        hash: config_hash(&bytes),
        path: path.to_path_buf(),
    })
}

/// The structural part of an experiment: network, constraint set, and the
/// beamformer description when applicable.
pub struct Structure {
    pub topology: Arc<Topology>,
    pub subspace: Subspace,
    pub affine: Option<AffineConstraint>,
    pub ula: Option<UlaScenario>,
}

fn complex_matrix(re: &[Vec<f64>], im: Option<&Vec<Vec<f64>>>, what: &str) -> CliResult<CMatrix> {
    let rows = re.len();
    if rows == 0 {
        return Err(CliError::Config(format!("{what}: empty matrix")));
    }
    let cols = re[0].len();
    if re.iter().any(|r| r.len() != cols) {
        return Err(CliError::Config(format!("{what}: ragged rows")));
    }
    if let Some(im) = im {
        if im.len() != rows || im.iter().any(|r| r.len() != cols) {
            return Err(CliError::Config(format!("{what}: imaginary part shape mismatch")));
        }
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| {
        C64::new(re[i][j], im.map(|m| m[i][j]).unwrap_or(0.0))
    }))
}

fn is_beamformer(raw: &RawConfig) -> bool {
    raw.scenario.as_ref().is_some_and(|s| s.kind == "beamformer") || raw.beamformer.is_some()
}

pub fn build_ula(raw: &RawConfig) -> CliResult<UlaScenario> {
    let b = raw.beamformer.as_ref();
    let defaults = UlaScenario::default();
    let sc = UlaScenario {
        n_antennas: b.and_then(|b| b.n_antennas).unwrap_or(defaults.n_antennas),
        nu: b.and_then(|b| b.nu).unwrap_or(defaults.nu),
        doas_deg: b.and_then(|b| b.doas_deg.clone()).unwrap_or(defaults.doas_deg),
        powers: b.and_then(|b| b.powers.clone()).unwrap_or(defaults.powers),
        noise_var: b
            .and_then(|b| b.sigma_v)
            .map(|s| s * s)
            .unwrap_or(defaults.noise_var),
        spacing_ratio: b.and_then(|b| b.spacing_ratio).unwrap_or(defaults.spacing_ratio),
        constraint_doas_deg: b
            .and_then(|b| b.constraint_doas_deg.clone())
            .unwrap_or(defaults.constraint_doas_deg),
        constraint_gains: b
            .and_then(|b| b.constraint_gains.clone())
            .map(|g| g.into_iter().map(cr).collect())
            .unwrap_or(defaults.constraint_gains),
    };
    sc.validate()?;
    Ok(sc)
}

/// Resolve topology, subspace, and affine constraints from the config.
pub fn build_structure(raw: &RawConfig) -> CliResult<Structure> {
    if is_beamformer(raw) {
        if raw.topology.is_some() || raw.subspace.is_some() {
            return Err(CliError::Config(
                "beamformer scenarios derive [topology] and [subspace]; remove those sections".into(),
            ));
        }
        let ula = build_ula(raw)?;
        let topology = ula.topology()?;
        let (subspace, affine) = ula.subspace_and_affine()?;
        return Ok(Structure {
            topology,
            subspace,
            affine: Some(affine),
            ula: Some(ula),
        });
    }

    let topo_sec = raw
        .topology
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [topology] section".into()))?;
    if topo_sec.block_sizes.len() != topo_sec.n_agents {
        return Err(CliError::Config(format!(
            "block_sizes has {} entries for n_agents = {}",
            topo_sec.block_sizes.len(),
            topo_sec.n_agents
        )));
    }
    let edges: Vec<(usize, usize)> = topo_sec
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
    let topology = Arc::new(Topology::from_edges(topo_sec.block_sizes.clone(), &edges)?);

    let sub_sec = raw
        .subspace
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [subspace] section".into()))?;
    let (subspace, affine) = match sub_sec.family.as_str() {
        "consensus" => {
            let l = sub_sec.l.ok_or_else(|| CliError::Config("consensus needs l".into()))?;
            (consensus_subspace(topology.n_agents(), l)?, None)
        }
        "coupled" => {
            let assignment = sub_sec
                .assignment
                .as_ref()
                .ok_or_else(|| CliError::Config("coupled needs assignment".into()))?;
            let global_dim = sub_sec
                .global_dim
                .ok_or_else(|| CliError::Config("coupled needs global_dim".into()))?;
            let zero_based: Vec<Vec<usize>> = assignment
                .iter()
                .map(|vars| {
                    vars.iter()
                        .map(|&v| {
                            if v == 0 {
                                Err(CliError::Config("assignment ids are 1-based".into()))
                            } else {
                                Ok(v - 1)
                            }
                        })
                        .collect()
                })
                .collect::<CliResult<_>>()?;
            (coupled_subspace(&zero_based, global_dim)?, None)
        }
        "smoothness" => {
            let l = sub_sec.l.ok_or_else(|| CliError::Config("smoothness needs l".into()))?;
            let p = sub_sec.p.ok_or_else(|| CliError::Config("smoothness needs p".into()))?;
            let adj_rows = sub_sec
                .adjacency
                .as_ref()
                .ok_or_else(|| CliError::Config("smoothness needs adjacency".into()))?;
            let n = adj_rows.len();
            if adj_rows.iter().any(|r| r.len() != n) {
                return Err(CliError::Config("adjacency must be square".into()));
            }
            let adj = nalgebra::DMatrix::from_fn(n, n, |i, j| adj_rows[i][j]);
            let basis = smoothness_subspace(&adj, p, l)?;
            if basis.degenerate_cut {
                eprintln!("warning: degenerate Laplacian eigenvalue cut; retained basis is not unique");
            }
            (basis.subspace, None)
        }
        "affine" => {
            let d_re = sub_sec
                .d_re
                .as_ref()
                .ok_or_else(|| CliError::Config("affine needs d_re".into()))?;
            let dmat = complex_matrix(d_re, sub_sec.d_im.as_ref(), "affine d")?;
            let q = dmat.ncols();
            let dvec = {
                let re = sub_sec
                    .d_vec_re
                    .clone()
                    .unwrap_or_else(|| vec![0.0; q]);
                let im = sub_sec.d_vec_im.clone().unwrap_or_else(|| vec![0.0; q]);
                if re.len() != q || im.len() != q {
                    return Err(CliError::Config("affine d_vec length mismatch".into()));
                }
                CVector::from_fn(q, |i, _| C64::new(re[i], im[i]))
            };
            let (sub, aff) = affine_to_subspace(&dmat, &dvec, topology.block_sizes().to_vec())?;
            (sub, Some(aff))
        }
        "file" => {
            let path = sub_sec
                .path
                .as_ref()
                .ok_or_else(|| CliError::Config("subspace family `file` needs path".into()))?;
            let sub = formats::read_subspace(path)?;
            (sub, None)
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown subspace family `{other}` (expected consensus|coupled|smoothness|affine|file)"
            )))
        }
    };
    if subspace.block_sizes() != topology.block_sizes() {
        return Err(CliError::Config(format!(
            "subspace layout {:?} does not match topology blocks {:?}",
            subspace.block_sizes(),
            topology.block_sizes()
        )));
    }
    Ok(Structure {
        topology,
        subspace,
        affine,
        ula: None,
    })
}

pub fn design_config(raw: &RawConfig) -> DesignConfig {
    let d = DesignConfig::default();
    DesignConfig {
        epsilon: raw.combiner.epsilon.unwrap_or(d.epsilon),
        max_iters: raw.combiner.max_iters.unwrap_or(d.max_iters),
        tol: raw.combiner.tol.unwrap_or(d.tol),
        hermitian: raw.combiner.hermitian.unwrap_or(d.hermitian),
    }
}

/// Resolve the combination matrix per `[combiner].source`.
pub fn resolve_combiner(
    raw: &RawConfig,
    structure: &Structure,
    config_dir: &Path,
) -> CliResult<BlockMatrix> {
    let source = raw.combiner.source.as_deref().unwrap_or("design");
    match source {
        "design" => {
            let out = design_pocs(&structure.topology, &structure.subspace, &design_config(raw))?;
            Ok(out.matrix)
        }
        "metropolis" => {
            let sizes = structure.topology.block_sizes();
            let l = sizes[0];
            if sizes.iter().any(|&s| s != l) {
                return Err(CliError::Config(
                    "metropolis combiner requires uniform block sizes".into(),
                ));
            }
            let a = metropolis_weights(&structure.topology);
            Ok(consensus_combiner(&structure.topology, &a, l)?)
        }
        "file" => {
            let path = raw
                .combiner
                .path
                .as_ref()
                .ok_or_else(|| CliError::Config("combiner source `file` needs path".into()))?;
            let resolved = if path.is_relative() {
                config_dir.join(path)
            } else {
                path.clone()
            };
            formats::read_block_matrix(&resolved, &structure.topology)
        }
        other => Err(CliError::Config(format!(
            "unknown combiner source `{other}` (expected design|metropolis|file)"
        ))),
    }
}

/// Everything needed to execute `run`/`sweep`.
pub struct Experiment {
    pub scenario: Scenario,
    pub ula: Option<UlaScenario>,
    pub run_cfg: RunConfig,
    pub mus: Vec<f64>,
    pub runs: usize,
    pub write_trajectories: bool,
}

fn parse_variant(s: &str) -> CliResult<Variant> {
    match s {
        "centralized" => Ok(Variant::Centralized),
        "distributed" => Ok(Variant::Distributed),
        "distributed-affine" => Ok(Variant::DistributedAffine),
        "linear-projection" => Ok(Variant::LinearProjection),
        other => Err(CliError::Config(format!("unknown variant `{other}`"))),
    }
}

fn parse_gradient(s: &str) -> CliResult<GradientMode> {
    match s {
        "true" => Ok(GradientMode::TrueGradient),
        "stochastic" => Ok(GradientMode::Stochastic),
        other => Err(CliError::Config(format!("unknown gradient mode `{other}`"))),
    }
}

fn quadratic_costs_and_streams(
    raw: &RawConfig,
    structure: &Structure,
    master_seed: u64,
) -> CliResult<(Vec<QuadraticCost>, Vec<SampleStream>)> {
    let sec = raw
        .scenario
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [scenario] section".into()))?;
    let topo = &structure.topology;
    let n = topo.n_agents();
    let kind = sec.kind.as_str();
    if kind != "regression" && kind != "minimum-variance" {
        return Err(CliError::Config(format!(
            "unknown scenario kind `{kind}` (expected regression|minimum-variance|beamformer)"
        )));
    }
    let covariance = sec.covariance.as_deref().unwrap_or("identity");
    let scales: Vec<f64> = match (&sec.scales, sec.scale) {
        (Some(list), _) => {
            if list.len() != n {
                return Err(CliError::Config("scales must have one entry per agent".into()));
            }
            list.clone()
        }
        (None, scale) => vec![scale.unwrap_or(1.0); n],
    };
    let sigma_v = sec.sigma_v.unwrap_or(0.0);

    let mut costs = Vec::with_capacity(n);
    let mut streams = Vec::with_capacity(n);
    for (k, &agent_scale) in scales.iter().enumerate() {
        let dim = topo.block_size(k);
        let r_u = match covariance {
            "identity" => CMatrix::identity(dim, dim) * cr(agent_scale),
            "explicit" => {
                let re = sec
                    .cov_re
                    .as_ref()
                    .ok_or_else(|| CliError::Config("explicit covariance needs cov_re".into()))?;
                let m = complex_matrix(re, sec.cov_im.as_ref(), "covariance")?;
                if m.nrows() != dim {
                    return Err(CliError::Config(format!(
                        "covariance is {}x{}, agent {k} has block size {dim}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                m * cr(agent_scale)
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown covariance kind `{other}` (expected identity|explicit)"
                )))
            }
        };
        let stream_kind = match kind {
            "regression" => {
                let w_ref = match (&sec.w_ref_re, &sec.w_ref_im) {
                    (Some(re), im) => {
                        if re.len() != dim {
                            return Err(CliError::Config(format!(
                                "w_ref has {} entries, agent {k} has block size {dim}",
                                re.len()
                            )));
                        }
                        CVector::from_fn(dim, |i, _| {
                            C64::new(re[i], im.as_ref().map(|v| v[i]).unwrap_or(0.0))
                        })
                    }
                    (None, _) => {
                        // Seeded random reference, reproducible per agent.
                        let mut seq = DrawSeq::for_cell(master_seed ^ 0x5eed, 0, k as u64, 0);
                        CVector::from_fn(dim, |_, _| seq.next_complex_gaussian())
                    }
                };
                StreamKind::MseRegression { r_u: r_u.clone(), w_ref, sigma_v }
            }
            _ => StreamKind::MinimumVariance { r_u: r_u.clone() },
        };
        let stream = SampleStream::new(stream_kind, master_seed, k)?;
        costs.push(stream.induced_cost()?);
        streams.push(stream);
    }
    Ok((costs, streams))
}

/// Assemble the full experiment (structure + combiner + costs + run config).
pub fn build_experiment(
    loaded: &LoadedConfig,
    seed_override: Option<u64>,
) -> CliResult<Experiment> {
    let raw = &loaded.raw;
    let run_sec = raw
        .run
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [run] section".into()))?;
    let master_seed = seed_override.or(run_sec.master_seed).unwrap_or(0);
    let variant = parse_variant(&run_sec.variant)?;
    let gradient = parse_gradient(run_sec.gradient.as_deref().unwrap_or("stochastic"))?;

    let structure = build_structure(raw)?;
    let w_init_kind = run_sec.w_init.as_deref().unwrap_or("zeros");
    if w_init_kind != "zeros" && w_init_kind != "random" {
        return Err(CliError::Config(format!("unknown w_init `{w_init_kind}`")));
    }
    let make_w_init = |m: usize| {
        if w_init_kind == "random" {
            netspan_core::synth::random_vector(master_seed ^ 0x1417, m)
        } else {
            CVector::zeros(m)
        }
    };
    let config_dir = loaded.path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let needs_combiner = matches!(
        variant,
        Variant::Distributed | Variant::DistributedAffine | Variant::LinearProjection
    );
    let combiner = if needs_combiner {
        Some(resolve_combiner(raw, &structure, &config_dir)?)
    } else {
        None
    };

    let (scenario, ula) = if let Some(ula) = structure.ula {
        if variant == Variant::Distributed {
            return Err(CliError::Config(
                "beamformer constraints are affine; use variant = \"distributed-affine\" (or centralized)".into(),
            ));
        }
        let costs = ula.costs()?;
        let stream = ula.stream(master_seed)?;
        let m = structure.topology.total_dim();
        let w_init = make_w_init(m);
        let w_opt = if variant == Variant::LinearProjection {
            let mut t = structure.subspace.project(&w_init);
            if let Some(aff) = &structure.affine {
                t += aff.offset();
            }
            t
        } else {
            netspan_core::beamformer::network_lcmv_optimum(&ula)?
        };
        (
            Scenario {
                topology: structure.topology,
                subspace: structure.subspace,
                combiner,
                costs,
                stochastic: Some(StochasticSource::Ula(stream)),
                affine: structure.affine,
                w_opt,
                w_init,
            },
            Some(ula),
        )
    } else {
        let (costs, streams) = quadratic_costs_and_streams(raw, &structure, master_seed)?;
        let m = structure.topology.total_dim();
        let w_init = make_w_init(m);
        let w_opt = if variant == Variant::LinearProjection {
            let mut t = structure.subspace.project(&w_init);
            if let Some(aff) = &structure.affine {
                t += aff.offset();
            }
            t
        } else {
            network_optimum(&costs, &structure.subspace, structure.affine.as_ref())?
        };
        (
            Scenario {
                topology: structure.topology,
                subspace: structure.subspace,
                combiner,
                costs,
                stochastic: Some(StochasticSource::Streams(streams)),
                affine: structure.affine,
                w_opt,
                w_init,
            },
            None,
        )
    };

    let record_iterates = run_sec.record_iterates.unwrap_or(ula.is_some());
    let mus = match (&run_sec.mus, run_sec.mu) {
        (Some(list), _) if !list.is_empty() => list.clone(),
        (_, Some(mu)) => vec![mu],
        _ => return Err(CliError::Config("[run] needs mu or a nonempty mus list".into())),
    };
    let run_cfg = RunConfig {
        mu: mus[0],
        iterations: run_sec.iterations,
        variant,
        gradient,
        seed: master_seed,
        record_stride: run_sec.record_stride.unwrap_or(1),
        record_iterates,
    };
    run_cfg.validate()?;
    Ok(Experiment {
        scenario,
        ula,
        run_cfg,
        mus,
        runs: run_sec.runs.unwrap_or(1),
        write_trajectories: raw.output.trajectories.unwrap_or(false),
    })
}

/// Verification tolerances: reuse the design margin as the pass threshold.
pub fn verify_config(raw: &RawConfig) -> netspan_core::combiner::VerifyConfig {
    let mut cfg = netspan_core::combiner::VerifyConfig::default();
    if let Some(eps) = raw.combiner.epsilon {
        cfg.epsilon_report = eps;
    }
    if let Some(tol) = raw.combiner.tol {
        // Designed residuals sit at the design tolerance; verify just above it.
        cfg.residual_tol = 10.0 * tol;
    }
    cfg
}
