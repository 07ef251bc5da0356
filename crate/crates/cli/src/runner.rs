//! Pipeline drivers behind the CLI subcommands. Monte Carlo runs execute on
//! a rayon pool; results are collected by run index, so the artifacts are
//! byte-identical for any worker count.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use netspan_core::combiner::{design_pocs, verify_conditions};
use netspan_core::engine::{run as engine_run, RunConfig, Scenario};
use netspan_core::metrics::{
    msd_curve, per_agent_mse, scaling_report_from_points, sinr_curve, ScalingPoint, Trajectory,
};

use crate::config::{
    build_experiment, build_structure, design_config, load, verify_config,
    Experiment, LoadedConfig,
};
use crate::formats::{self, variant_name, OutputMeta};
use crate::{io_err, CliError, CliResult};

pub struct Invocation {
    pub config: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    /// `verify` only: matrix file overriding `[combiner].path`.
    pub matrix: Option<PathBuf>,
}

fn out_dir(loaded: &LoadedConfig, inv: &Invocation) -> CliResult<PathBuf> {
    let dir = inv
        .out_dir
        .clone()
        .or_else(|| loaded.raw.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(io_err(dir.display()))?;
    Ok(dir)
}

/// Design a combination matrix and write it with its verification report.
pub fn cmd_design(inv: &Invocation) -> CliResult<()> {
    let loaded = load(&inv.config)?;
    let dir = out_dir(&loaded, inv)?;
    let structure = build_structure(&loaded.raw)?;
    let cfg = design_config(&loaded.raw);
    let outcome = design_pocs(&structure.topology, &structure.subspace, &cfg)?;
    let report = verify_conditions(&outcome.matrix, &structure.subspace, &verify_config(&loaded.raw))?;

    let matrix_path = dir.join("combiner.toml");
    formats::write_block_matrix(&matrix_path, &outcome.matrix)?;
    formats::write_topology(&dir.join("topology.toml"), &structure.topology)?;
    formats::write_subspace(&dir.join("subspace.toml"), &structure.subspace)?;
    let text = format!(
        "design cycles: {}\nspectral bound ‖A − P_U‖₂: {:.9}\n{}",
        outcome.cycles,
        outcome.spectral_bound,
        formats::render_report(&report)
    );
    std::fs::write(dir.join("verification.txt"), &text).map_err(io_err("verification.txt"))?;
    print!("{text}");
    println!("matrix written to {}", matrix_path.display());
    if report.passes {
        Ok(())
    } else {
        Err(CliError::VerificationFailed)
    }
}

/// Verify a combination matrix file against the configured subspace.
pub fn cmd_verify(inv: &Invocation) -> CliResult<()> {
    let loaded = load(&inv.config)?;
    let structure = build_structure(&loaded.raw)?;
    let matrix_path = inv
        .matrix
        .clone()
        .or_else(|| loaded.raw.combiner.path.clone())
        .ok_or_else(|| CliError::Config("verify needs --matrix or [combiner].path".into()))?;
    let a = formats::read_block_matrix(&matrix_path, &structure.topology)?;
    let report = verify_conditions(&a, &structure.subspace, &verify_config(&loaded.raw))?;
    print!("{}", formats::render_report(&report));
    if report.passes {
        Ok(())
    } else {
        Err(CliError::VerificationFailed)
    }
}

/// Run the Monte Carlo ensemble on a worker pool; order-independent.
pub fn parallel_ensemble(
    cfg: &RunConfig,
    scenario: &Scenario,
    runs: usize,
    jobs: Option<usize>,
) -> CliResult<Vec<Trajectory>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let result: Result<Vec<Trajectory>, netspan_core::Error> = pool.install(|| {
        (0..runs as u64)
            .into_par_iter()
            .map(|r| engine_run(cfg, scenario, r))
            .collect()
    });
    Ok(result?)
}

fn meta_for(exp: &Experiment, hash: u64) -> OutputMeta {
    OutputMeta {
        config_hash: hash,
        master_seed: exp.run_cfg.seed,
        runs: exp.runs,
        mu: exp.run_cfg.mu,
        variant: variant_name(exp.run_cfg.variant),
    }
}

fn write_run_outputs(
    dir: &Path,
    exp: &Experiment,
    trajectories: &[Trajectory],
    hash: u64,
) -> CliResult<()> {
    let meta = meta_for(exp, hash);
    let stats = msd_curve(trajectories)?;
    formats::write_msd_csv(&dir.join("msd.csv"), &stats, &meta)?;
    let table = per_agent_mse(trajectories)?;
    formats::write_per_agent_csv(&dir.join("per_agent.csv"), &table, &meta)?;
    println!(
        "steady-state MSD: {:.6e} ± {:.2e} over {} runs (plateau detected: {})",
        stats.steady_state_msd, stats.steady_state_stderr, stats.num_runs, stats.plateau_detected
    );
    if let Some(ula) = &exp.ula {
        if exp.run_cfg.record_iterates {
            let curve = sinr_curve(trajectories, ula)?;
            formats::write_sinr_csv(&dir.join("sinr.csv"), &curve, &meta)?;
            println!("steady-state output SINR: {:.3} dB", curve.steady_state_db);
        }
    }
    if exp.write_trajectories {
        if let Some(t0) = trajectories.first() {
            formats::write_trajectory_csv(&dir.join("trajectory_run0.csv"), t0, &meta)?;
        }
    }
    if trajectories.iter().any(|t| t.meta.mu_warning) {
        eprintln!(
            "warning: μ = {} is at or above the reduced-recursion stability threshold 2/δ",
            exp.run_cfg.mu
        );
    }
    Ok(())
}

/// Execute the configured ensemble and write `msd.csv` (plus `sinr.csv` for
/// beamformer scenarios).
pub fn cmd_run(inv: &Invocation) -> CliResult<()> {
    let loaded = load(&inv.config)?;
    let dir = out_dir(&loaded, inv)?;
    let exp = build_experiment(&loaded, inv.seed)?;
    let trajectories = parallel_ensemble(&exp.run_cfg, &exp.scenario, exp.runs, inv.jobs)?;
    write_run_outputs(&dir, &exp, &trajectories, loaded.hash)
}

/// Sweep the step-size list and write `scaling.csv` with the fitted slope.
pub fn cmd_sweep(inv: &Invocation) -> CliResult<()> {
    let loaded = load(&inv.config)?;
    let dir = out_dir(&loaded, inv)?;
    let exp = build_experiment(&loaded, inv.seed)?;
    if exp.mus.len() < 2 {
        return Err(CliError::Config("[run].mus needs at least two step-sizes for a sweep".into()));
    }
    // Parallelize the inner ensembles; μ points stay sequential so failures
    // name the offending step-size deterministically.
    let mut points = Vec::with_capacity(exp.mus.len());
    for &mu in &exp.mus {
        let cfg = RunConfig { mu, ..exp.run_cfg.clone() };
        let trajectories = parallel_ensemble(&cfg, &exp.scenario, exp.runs, inv.jobs).map_err(
            |e| match e {
                CliError::Core(netspan_core::Error::Divergence { iteration, detail }) => {
                    CliError::Core(netspan_core::Error::Divergence {
                        iteration,
                        detail: format!("μ = {mu}: {detail}"),
                    })
                }
                other => other,
            },
        )?;
        let stats = msd_curve(&trajectories)?;
        points.push(ScalingPoint {
            mu,
            steady_state_msd: stats.steady_state_msd,
            stderr: stats.steady_state_stderr,
        });
    }
    let report = scaling_report_from_points(points);
    let meta = meta_for(&exp, loaded.hash);
    formats::write_scaling_csv(&dir.join("scaling.csv"), &report, &meta)?;
    for p in &report.points {
        println!("mu = {:<8} steady-state MSD = {:.6e} ± {:.2e}", p.mu, p.steady_state_msd, p.stderr);
    }
    match report.slope {
        Some(slope) => println!("log-log slope: {slope:.4}"),
        None => println!("log-log slope skipped: all plateaus at numerical zero"),
    }
    Ok(())
}
