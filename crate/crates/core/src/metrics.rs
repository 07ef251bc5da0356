//! Performance estimators over recorded trajectories: mean-square-deviation
//! curves, steady-state plateaus, step-size scaling diagnostics, and output
//! SINR for the beamforming scenario.

use alloc::format;
use alloc::vec::Vec;

use crate::beamformer::UlaScenario;
use crate::engine::{ensemble, GradientMode, RunConfig, Scenario, Variant};
use crate::{CVector, Error, Result};

/// One recorded sample: agent `k`'s squared error at an iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    pub iteration: u64,
    pub agent: usize,
    pub sq_error: f64,
}

/// Metadata snapshot of the run that produced a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub variant: Variant,
    pub gradient: GradientMode,
    pub mu: f64,
    pub seed: u64,
    pub run_index: u64,
    pub iterations: u64,
    pub record_stride: u64,
    pub n_agents: usize,
    /// Raised when μ exceeds the classical reduced-recursion threshold 2/δ.
    pub mu_warning: bool,
}

/// Per-iteration, per-agent squared-error records of one run, plus the
/// stacked iterates when the run recorded them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<ErrorRecord>,
    pub iterates: Vec<(u64, CVector)>,
    pub meta: RunMeta,
}

impl Trajectory {
    /// Recorded iterations, ascending.
    pub fn recorded_iterations(&self) -> Vec<u64> {
        let mut out: Vec<u64> = Vec::new();
        for r in &self.records {
            if out.last() != Some(&r.iteration) {
                out.push(r.iteration);
            }
        }
        out
    }

    /// Network curve `(iteration, (1/N)Σ_k ‖w̃_k‖²)`.
    pub fn network_curve(&self) -> Vec<(u64, f64)> {
        let n = self.meta.n_agents as f64;
        let mut out: Vec<(u64, f64)> = Vec::new();
        for r in &self.records {
            match out.last_mut() {
                Some((it, acc)) if *it == r.iteration => *acc += r.sq_error / n,
                _ => out.push((r.iteration, r.sq_error / n)),
            }
        }
        out
    }
}

/// Ensemble-averaged MSD curve and steady-state summary.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub iterations: Vec<u64>,
    /// Pointwise mean over runs of `(1/N)‖W° − W_i‖²`.
    pub msd: Vec<f64>,
    /// Pointwise standard error of that mean (zero for a single run).
    pub stderr: Vec<f64>,
    /// Mean over the final 10% of recorded iterations.
    pub steady_state_msd: f64,
    /// Standard error of the steady-state estimate across runs.
    pub steady_state_stderr: f64,
    pub num_runs: usize,
    /// False for single-run ensembles, where no spread is measurable.
    pub stderr_defined: bool,
    /// True when the trailing log-MSD slope is below 1e-3 per 100 iterations.
    pub plateau_detected: bool,
}

fn check_consistent(trajectories: &[Trajectory]) -> Result<()> {
    let first = &trajectories[0].meta;
    for t in trajectories.iter().skip(1) {
        let m = &t.meta;
        if m.variant != first.variant
            || m.gradient != first.gradient
            || m.mu != first.mu
            || m.iterations != first.iterations
            || m.record_stride != first.record_stride
            || m.n_agents != first.n_agents
        {
            return Err(Error::Ensemble("trajectories come from different configurations".into()));
        }
    }
    for (i, a) in trajectories.iter().enumerate() {
        for b in trajectories.iter().skip(i + 1) {
            if a.meta.seed == b.meta.seed && a.meta.run_index == b.meta.run_index {
                return Err(Error::Ensemble(format!(
                    "duplicate run: seed {} index {}",
                    a.meta.seed, a.meta.run_index
                )));
            }
        }
    }
    Ok(())
}

fn final_window(len: usize) -> usize {
    (len / 10).max(1)
}

fn canonical_order(trajectories: &[Trajectory]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..trajectories.len()).collect();
    order.sort_by_key(|&i| (trajectories[i].meta.seed, trajectories[i].meta.run_index));
    order
}

/// Plateau detector over the trailing 30% of the recording window.
///
/// The averaged log-curve counts as flat when its fitted slope is below
/// 1e-3 per 100 iterations (the hard threshold), or when the per-run drift
/// between the window's two halves is statistically indistinguishable from
/// zero. The hard threshold alone sits under the Monte Carlo noise floor
/// of desk-scale ensembles, and within-run autocorrelation rules out a
/// naive regression error bar.
fn plateau_detected(iterations: &[u64], msd: &[f64], per_run: &[Vec<f64>]) -> bool {
    let n = msd.len();
    if n < 4 {
        return false;
    }
    let start = n - (3 * n / 10).max(3);
    let xs: Vec<f64> = iterations[start..].iter().map(|&i| i as f64).collect();
    let ys: Vec<f64> = msd[start..].iter().map(|&v| libm::log10(v.max(1e-300))).collect();
    let count = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / count;
    let mean_y = ys.iter().sum::<f64>() / count;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    if den == 0.0 {
        return false;
    }
    let slope_per_iter = num / den;
    if (slope_per_iter * 100.0).abs() < 1e-3 {
        return true;
    }
    let runs = per_run.len();
    if runs < 2 {
        return false;
    }
    // Drift between window halves, paired per run (independent samples).
    let half = (n - start) / 2;
    if half == 0 {
        return false;
    }
    let drifts: Vec<f64> = per_run
        .iter()
        .map(|r| {
            let a: f64 = r[start..start + half].iter().sum::<f64>() / half as f64;
            let b: f64 = r[n - half..].iter().sum::<f64>() / half as f64;
            b - a
        })
        .collect();
    let mean_d = drifts.iter().sum::<f64>() / runs as f64;
    let var_d = drifts.iter().map(|d| (d - mean_d) * (d - mean_d)).sum::<f64>()
        / (runs as f64 - 1.0);
    let se_d = libm::sqrt(var_d / runs as f64);
    let level: f64 = msd[start..].iter().sum::<f64>() / count;
    mean_d.abs() <= (3.0 * se_d).max(0.01 * level.abs())
}

/// Average per-run network curves into the ensemble MSD curve.
///
/// All trajectories must share the configuration and differ in
/// `(seed, run_index)`.
pub fn msd_curve(trajectories: &[Trajectory]) -> Result<EnsembleStats> {
    if trajectories.is_empty() {
        return Err(Error::Ensemble("no trajectories".into()));
    }
    check_consistent(trajectories)?;
    let base = trajectories[0].recorded_iterations();
    // Reduce in (seed, run_index) order so the result is bit-identical for
    // any sharding or arrival order of the runs.
    let order = canonical_order(trajectories);
    let mut per_run: Vec<Vec<f64>> = Vec::with_capacity(trajectories.len());
    for &idx in &order {
        let t = &trajectories[idx];
        let curve = t.network_curve();
        if curve.len() != base.len() || curve.iter().zip(base.iter()).any(|((i, _), b)| i != b) {
            return Err(Error::Ensemble("recording grids differ across runs".into()));
        }
        per_run.push(curve.into_iter().map(|(_, v)| v).collect());
    }
    let runs = per_run.len();
    let points = base.len();
    let mut msd = alloc::vec![0.0f64; points];
    for run in &per_run {
        for (acc, v) in msd.iter_mut().zip(run.iter()) {
            *acc += v;
        }
    }
    for v in msd.iter_mut() {
        *v /= runs as f64;
    }
    let stderr_defined = runs > 1;
    let mut stderr = alloc::vec![0.0f64; points];
    if stderr_defined {
        for (j, se) in stderr.iter_mut().enumerate() {
            let mean = msd[j];
            let var: f64 = per_run.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>()
                / (runs as f64 - 1.0);
            *se = libm::sqrt(var / runs as f64);
        }
    }
    // Steady state: per-run mean over the final 10% window, then mean ± se
    // across runs.
    let w = final_window(points);
    let per_run_plateau: Vec<f64> = per_run
        .iter()
        .map(|r| r[points - w..].iter().sum::<f64>() / w as f64)
        .collect();
    let steady_state_msd = per_run_plateau.iter().sum::<f64>() / runs as f64;
    let steady_state_stderr = if stderr_defined {
        let var = per_run_plateau
            .iter()
            .map(|v| (v - steady_state_msd) * (v - steady_state_msd))
            .sum::<f64>()
            / (runs as f64 - 1.0);
        libm::sqrt(var / runs as f64)
    } else {
        0.0
    };
    let plateau = plateau_detected(&base, &msd, &per_run);
    Ok(EnsembleStats {
        iterations: base,
        msd,
        stderr,
        steady_state_msd,
        steady_state_stderr,
        num_runs: runs,
        stderr_defined,
        plateau_detected: plateau,
    })
}

/// Per-agent steady-state table entry.
#[derive(Debug, Clone, Copy)]
pub struct AgentPlateau {
    pub agent: usize,
    pub steady_state_mse: f64,
    pub stderr: f64,
}

/// Per-agent steady-state mean-square errors over the final 10% window.
pub fn per_agent_mse(trajectories: &[Trajectory]) -> Result<Vec<AgentPlateau>> {
    if trajectories.is_empty() {
        return Err(Error::Ensemble("no trajectories".into()));
    }
    check_consistent(trajectories)?;
    let n_agents = trajectories[0].meta.n_agents;
    let iters = trajectories[0].recorded_iterations();
    let w = final_window(iters.len());
    let cutoff = iters[iters.len() - w];
    let runs = trajectories.len();
    let order = canonical_order(trajectories);
    let mut out = Vec::with_capacity(n_agents);
    for agent in 0..n_agents {
        let per_run: Vec<f64> = order
            .iter()
            .map(|&idx| {
                let t = &trajectories[idx];
                let (sum, count) = t
                    .records
                    .iter()
                    .filter(|r| r.agent == agent && r.iteration >= cutoff)
                    .fold((0.0f64, 0usize), |(s, c), r| (s + r.sq_error, c + 1));
                sum / count.max(1) as f64
            })
            .collect();
        let mean = per_run.iter().sum::<f64>() / runs as f64;
        let stderr = if runs > 1 {
            let var = per_run.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (runs as f64 - 1.0);
            libm::sqrt(var / runs as f64)
        } else {
            0.0
        };
        out.push(AgentPlateau { agent, steady_state_mse: mean, stderr });
    }
    Ok(out)
}

/// One step-size sweep point.
#[derive(Debug, Clone, Copy)]
pub struct ScalingPoint {
    pub mu: f64,
    pub steady_state_msd: f64,
    pub stderr: f64,
}

/// Step-size scaling diagnostics: plateaus per μ and the fitted log-log
/// slope (absent when every plateau is at numerical zero).
#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    pub slope: Option<f64>,
    pub zero_noise: bool,
}

/// Run `runs` Monte Carlo runs per step-size and fit the steady-state MSD
/// against μ on a log-log scale.
pub fn mu_scaling(
    scenario: &Scenario,
    base: &RunConfig,
    mus: &[f64],
    runs: usize,
) -> Result<ScalingReport> {
    if mus.len() < 2 {
        return Err(Error::Config("scaling sweep needs at least two step-sizes".into()));
    }
    let mut points = Vec::with_capacity(mus.len());
    for &mu in mus {
        let cfg = RunConfig { mu, ..base.clone() };
        let trajectories = ensemble(&cfg, scenario, runs).map_err(|e| match e {
            Error::Divergence { iteration, detail } => Error::Divergence {
                iteration,
                detail: format!("μ = {mu}: {detail}"),
            },
            other => other,
        })?;
        let stats = msd_curve(&trajectories)?;
        points.push(ScalingPoint {
            mu,
            steady_state_msd: stats.steady_state_msd,
            stderr: stats.steady_state_stderr,
        });
    }
    Ok(scaling_report_from_points(points))
}

/// Fit the log-log slope over measured sweep points (shared by sequential
/// and parallel sweep drivers).
pub fn scaling_report_from_points(points: Vec<ScalingPoint>) -> ScalingReport {
    let zero_noise = points.iter().all(|p| p.steady_state_msd <= 1e-12);
    let slope = if zero_noise {
        None
    } else {
        let xs: Vec<f64> = points.iter().map(|p| libm::log(p.mu)).collect();
        let ys: Vec<f64> = points.iter().map(|p| libm::log(p.steady_state_msd.max(1e-300))).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in xs.iter().zip(ys.iter()) {
            num += (x - mx) * (y - my);
            den += (x - mx) * (x - mx);
        }
        Some(num / den)
    };
    ScalingReport { points, slope, zero_noise }
}

/// Ensemble-averaged output SINR per recorded iteration, in dB.
#[derive(Debug, Clone)]
pub struct SinrCurve {
    pub iterations: Vec<u64>,
    pub sinr_db: Vec<f64>,
    pub stderr_db: Vec<f64>,
    /// Mean of the dB curve over the final 10% of recorded points.
    pub steady_state_db: f64,
}

/// Average the per-run output SINR (linear, then converted to dB) of the
/// extracted beamformer across the ensemble.
///
/// Every trajectory must carry iterates on the same recording grid.
pub fn sinr_curve(trajectories: &[Trajectory], scenario: &UlaScenario) -> Result<SinrCurve> {
    if trajectories.is_empty() {
        return Err(Error::Ensemble("no trajectories".into()));
    }
    check_consistent(trajectories)?;
    let grid: Vec<u64> = trajectories[0].iterates.iter().map(|(i, _)| *i).collect();
    if grid.is_empty() {
        return Err(Error::Ensemble("trajectories carry no recorded iterates".into()));
    }
    for t in trajectories {
        if t.iterates.len() != grid.len()
            || t.iterates.iter().zip(grid.iter()).any(|((i, _), g)| i != g)
        {
            return Err(Error::Ensemble("iterate grids differ across runs".into()));
        }
    }
    let runs = trajectories.len();
    let order = canonical_order(trajectories);
    let mut sinr_db = Vec::with_capacity(grid.len());
    let mut stderr_db = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        let mut linear: Vec<f64> = Vec::with_capacity(runs);
        for &idx in &order {
            let h = scenario.extract_beamformer(&trajectories[idx].iterates[j].1)?;
            linear.push(scenario.output_sinr(&h));
        }
        let mean = linear.iter().sum::<f64>() / runs as f64;
        sinr_db.push(10.0 * libm::log10(mean.max(0.0)));
        if runs > 1 && mean > 0.0 {
            let var = linear.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (runs as f64 - 1.0);
            let se_lin = libm::sqrt(var / runs as f64);
            stderr_db.push(10.0 / core::f64::consts::LN_10 * se_lin / mean);
        } else {
            stderr_db.push(0.0);
        }
    }
    let w = final_window(grid.len());
    let steady_state_db = sinr_db[grid.len() - w..].iter().sum::<f64>() / w as f64;
    Ok(SinrCurve {
        iterations: grid,
        sinr_db,
        stderr_db,
        steady_state_db,
    })
}
