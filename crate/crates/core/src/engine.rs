//! Execution of the adaptation recursions: the centralized
//! gradient-projection step, the distributed adapt-then-combine step, its
//! affine-constrained variant with constant driving terms, and the
//! noise-free linear projection iteration.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::beamformer::UlaStream;
use crate::costs::{curvature_check, QuadraticCost, SampleStream};
use crate::metrics::{ErrorRecord, RunMeta, Trajectory};
use crate::subspace::{AffineConstraint, Subspace};
use crate::topology::{BlockAccess, BlockMatrix, Topology};
use crate::{cr, CVector, Error, Result};

/// Which recursion a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Centralized,
    Distributed,
    DistributedAffine,
    LinearProjection,
}

/// Gradient source for a run: closed-form risk gradients or streaming data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    TrueGradient,
    Stochastic,
}

/// Per-agent gradient evaluation, keyed by `(run, iteration, agent)`.
pub trait GradientField {
    fn gradient(&self, run: u64, iteration: u64, agent: usize, w: &CVector) -> CVector;
}

/// Closed-form gradients of per-agent quadratic risks.
pub struct TrueGradients<'a>(pub &'a [QuadraticCost]);

impl GradientField for TrueGradients<'_> {
    fn gradient(&self, _run: u64, _iteration: u64, agent: usize, w: &CVector) -> CVector {
        self.0[agent].gradient(w)
    }
}

/// Streaming gradient sources a scenario can carry.
#[derive(Debug, Clone)]
pub enum StochasticSource {
    /// Independent per-agent streams.
    Streams(Vec<SampleStream>),
    /// Shared-snapshot array stream.
    Ula(UlaStream),
}

impl GradientField for StochasticSource {
    fn gradient(&self, run: u64, iteration: u64, agent: usize, w: &CVector) -> CVector {
        match self {
            Self::Streams(streams) => streams[agent].gradient(run, iteration, w),
            Self::Ula(stream) => stream.gradient(run, iteration, agent, w),
        }
    }
}

/// Step-size, horizon, and recording parameters of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mu: f64,
    pub iterations: u64,
    pub variant: Variant,
    pub gradient: GradientMode,
    /// Master seed recorded in the trajectory metadata (streams carry their
    /// own copy).
    pub seed: u64,
    /// Record per-agent errors every this many iterations.
    pub record_stride: u64,
    /// Also record the stacked iterate at each record point (needed by the
    /// SINR estimator).
    pub record_iterates: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu < 0.0 || (self.variant != Variant::LinearProjection && self.mu <= 0.0) {
            return Err(Error::Config(format!("step size μ = {} must be positive", self.mu)));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Stacked network iterate and the intermediate (post-gradient) estimate.
#[derive(Debug, Clone)]
pub struct NetworkState {
    pub w: CVector,
    pub psi: CVector,
    pub iteration: u64,
}

impl NetworkState {
    pub fn new(w0: CVector) -> Self {
        let psi = CVector::zeros(w0.len());
        Self { w: w0, psi, iteration: 0 }
    }
}

const DIVERGENCE_NORM: f64 = 1e12;

fn check_finite(state: &NetworkState) -> Result<()> {
    let norm = state.w.norm();
    if !norm.is_finite() || norm > DIVERGENCE_NORM {
        return Err(Error::Divergence {
            iteration: state.iteration,
            detail: format!("iterate norm {norm:.3e}"),
        });
    }
    Ok(())
}

fn block_layout_ranges(topology: &Topology) -> Vec<(usize, usize)> {
    (0..topology.n_agents())
        .map(|k| {
            let r = topology.block_range(k);
            (r.start, r.len())
        })
        .collect()
}

/// One centralized step: `W_i = P_U(W_{i−1} − μ g) (+ d_D)`.
///
/// The gradient stack `g` comes from `grads` at the state's iteration index.
pub fn step_centralized<G: GradientField>(
    state: &mut NetworkState,
    topology: &Topology,
    s: &Subspace,
    affine: Option<&AffineConstraint>,
    mu: f64,
    grads: &G,
    run: u64,
) -> Result<()> {
    let iter = state.iteration;
    for (k, &(start, len)) in block_layout_ranges(topology).iter().enumerate() {
        let wk = state.w.rows(start, len).into_owned();
        let g = grads.gradient(run, iter, k, &wk);
        let mut psi_k = state.psi.rows_mut(start, len);
        psi_k.copy_from(&wk);
        psi_k.axpy(cr(-mu), &g, cr(1.0));
    }
    state.w = s.project(&state.psi);
    if let Some(aff) = affine {
        state.w += aff.offset();
    }
    state.iteration += 1;
    check_finite(state)
}

/// One adapt-then-combine step: per agent,
/// `ψ_k = w_k − μ ĝ_k(w_k)` then `w_k = Σ_{l∈N_k} A_{kl} ψ_l`.
///
/// Only neighborhood blocks of `a` are read.
pub fn step_distributed<G: GradientField, A: BlockAccess>(
    state: &mut NetworkState,
    a: &A,
    mu: f64,
    grads: &G,
    run: u64,
) -> Result<()> {
    step_distributed_inner(state, a, mu, grads, run, None)
}

/// The affine-constrained variant: adds the per-agent constant driving term
/// (the blocks of `(I − A) d_D`) after the combination step.
pub fn step_distributed_affine<G: GradientField, A: BlockAccess>(
    state: &mut NetworkState,
    a: &A,
    mu: f64,
    grads: &G,
    run: u64,
    driving: &CVector,
) -> Result<()> {
    step_distributed_inner(state, a, mu, grads, run, Some(driving))
}

fn step_distributed_inner<G: GradientField, A: BlockAccess>(
    state: &mut NetworkState,
    a: &A,
    mu: f64,
    grads: &G,
    run: u64,
    driving: Option<&CVector>,
) -> Result<()> {
    let topology = a.topology();
    let iter = state.iteration;
    let ranges = block_layout_ranges(topology);
    for (k, &(start, len)) in ranges.iter().enumerate() {
        let wk = state.w.rows(start, len).into_owned();
        let g = grads.gradient(run, iter, k, &wk);
        let mut psi_k = state.psi.rows_mut(start, len);
        psi_k.copy_from(&wk);
        psi_k.axpy(cr(-mu), &g, cr(1.0));
    }
    let mut w_next = match driving {
        Some(d) => d.clone(),
        None => CVector::zeros(state.w.len()),
    };
    for (k, &(start, len)) in ranges.iter().enumerate() {
        let mut wk = w_next.rows_mut(start, len);
        for &l in topology.neighborhood(k) {
            if let Some(block) = a.block(k, l) {
                let (ls, ll) = ranges[l];
                let psi_l = state.psi.rows(ls, ll);
                wk.gemv(cr(1.0), block, &psi_l, cr(1.0));
            }
        }
    }
    state.w = w_next;
    state.iteration += 1;
    check_finite(state)
}

/// The constant per-agent driving vector `(I − A) d_D`, stacked.
pub fn driving_term<A: BlockAccess>(a: &A, affine: &AffineConstraint) -> CVector {
    affine.offset() - a.apply(affine.offset())
}

/// Iterate `W_i = A W_{i−1} + (I − A + P_U) d_D` and track the distance to
/// the limit `P_U W_0 + d_D`.
///
/// Returns the final iterate and the per-iteration residual curve (ending
/// early once the residual reaches `tol`); errors with
/// [`Error::MaxIterations`] if the decay stalls above `tol`.
pub fn linear_projection_iteration<A: BlockAccess>(
    a: &A,
    s: &Subspace,
    affine: Option<&AffineConstraint>,
    w0: &CVector,
    i_max: usize,
    tol: f64,
) -> Result<(CVector, Vec<f64>)> {
    let mut target = s.project(w0);
    let drive = match affine {
        Some(aff) => {
            target += aff.offset();
            driving_term(a, aff)
        }
        None => CVector::zeros(w0.len()),
    };
    let mut w = w0.clone();
    let mut residuals = Vec::new();
    for _ in 0..i_max {
        w = a.apply(&w) + &drive;
        let r = (&w - &target).norm();
        residuals.push(r);
        if r <= tol {
            return Ok((w, residuals));
        }
    }
    let last = residuals.last().copied().unwrap_or_else(|| (&w - &target).norm());
    if last <= tol {
        Ok((w, residuals))
    } else {
        Err(Error::MaxIterations(format!(
            "linear projection stalled at residual {last:.3e} after {i_max} iterations"
        )))
    }
}

/// Everything a run needs: the network, constraint set, costs, streams, the
/// oracle optimum the trajectory is measured against, and the initial state.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: Arc<Topology>,
    pub subspace: Subspace,
    pub combiner: Option<BlockMatrix>,
    pub costs: Vec<QuadraticCost>,
    pub stochastic: Option<StochasticSource>,
    pub affine: Option<AffineConstraint>,
    pub w_opt: CVector,
    pub w_init: CVector,
}

impl Scenario {
    fn validate(&self, cfg: &RunConfig) -> Result<()> {
        let m = self.topology.total_dim();
        if self.subspace.block_sizes() != self.topology.block_sizes() {
            return Err(Error::Shape("subspace layout does not match topology".into()));
        }
        if self.w_opt.len() != m || self.w_init.len() != m {
            return Err(Error::Shape("oracle/initial vectors must have the stacked dimension".into()));
        }
        let needs_combiner = matches!(
            cfg.variant,
            Variant::Distributed | Variant::DistributedAffine | Variant::LinearProjection
        );
        if needs_combiner && self.combiner.is_none() {
            return Err(Error::Config("variant requires a combination matrix".into()));
        }
        if cfg.gradient == GradientMode::Stochastic
            && cfg.variant != Variant::LinearProjection
            && self.stochastic.is_none()
        {
            return Err(Error::Config("stochastic run requires sample streams".into()));
        }
        if cfg.variant == Variant::DistributedAffine && self.affine.is_none() {
            return Err(Error::Config("affine variant requires the affine constraint".into()));
        }
        Ok(())
    }
}

fn record_errors(records: &mut Vec<ErrorRecord>, topology: &Topology, w_opt: &CVector, state: &NetworkState) {
    for k in 0..topology.n_agents() {
        let r = topology.block_range(k);
        let mut sq = 0.0;
        for i in r {
            sq += (w_opt[i] - state.w[i]).norm_sqr();
        }
        records.push(ErrorRecord {
            iteration: state.iteration,
            agent: k,
            sq_error: sq,
        });
    }
}

/// Execute one run of the configured variant, recording per-agent squared
/// errors against the scenario's oracle every `record_stride` iterations
/// (always including iteration 0 and the final iteration). Deterministic
/// given `(cfg.seed, run_index)`.
pub fn run(cfg: &RunConfig, scenario: &Scenario, run_index: u64) -> Result<Trajectory> {
    cfg.validate()?;
    scenario.validate(cfg)?;

    // Classical small-step warning for the reduced recursion: μ ≥ 2/δ.
    let mu_warning = if cfg.variant != Variant::LinearProjection {
        let (_, delta) = curvature_check(&scenario.costs, &scenario.subspace)?;
        cfg.mu >= 2.0 / delta
    } else {
        false
    };

    let mut state = NetworkState::new(scenario.w_init.clone());
    let mut records = Vec::new();
    let mut iterates = Vec::new();
    record_errors(&mut records, &scenario.topology, &scenario.w_opt, &state);
    if cfg.record_iterates {
        iterates.push((0u64, state.w.clone()));
    }

    let driving = match (&scenario.combiner, &scenario.affine) {
        (Some(a), Some(aff)) if cfg.variant != Variant::Distributed => Some(driving_term(a, aff)),
        _ => None,
    };
    let true_grads = TrueGradients(&scenario.costs);

    for i in 1..=cfg.iterations {
        match cfg.variant {
            Variant::Centralized => match (cfg.gradient, &scenario.stochastic) {
                (GradientMode::TrueGradient, _) => step_centralized(
                    &mut state,
                    &scenario.topology,
                    &scenario.subspace,
                    scenario.affine.as_ref(),
                    cfg.mu,
                    &true_grads,
                    run_index,
                )?,
                (GradientMode::Stochastic, Some(src)) => step_centralized(
                    &mut state,
                    &scenario.topology,
                    &scenario.subspace,
                    scenario.affine.as_ref(),
                    cfg.mu,
                    src,
                    run_index,
                )?,
                _ => unreachable!("validated"),
            },
            Variant::Distributed => {
                let a = scenario.combiner.as_ref().unwrap();
                match (cfg.gradient, &scenario.stochastic) {
                    (GradientMode::TrueGradient, _) => {
                        step_distributed(&mut state, a, cfg.mu, &true_grads, run_index)?
                    }
                    (GradientMode::Stochastic, Some(src)) => {
                        step_distributed(&mut state, a, cfg.mu, src, run_index)?
                    }
                    _ => unreachable!("validated"),
                }
            }
            Variant::DistributedAffine => {
                let a = scenario.combiner.as_ref().unwrap();
                let drive = driving.as_ref().expect("validated affine");
                match (cfg.gradient, &scenario.stochastic) {
                    (GradientMode::TrueGradient, _) => step_distributed_affine(
                        &mut state,
                        a,
                        cfg.mu,
                        &true_grads,
                        run_index,
                        drive,
                    )?,
                    (GradientMode::Stochastic, Some(src)) => {
                        step_distributed_affine(&mut state, a, cfg.mu, src, run_index, drive)?
                    }
                    _ => unreachable!("validated"),
                }
            }
            Variant::LinearProjection => {
                let a = scenario.combiner.as_ref().unwrap();
                let mut w_next = a.apply(&state.w);
                if let Some(d) = &driving {
                    w_next += d;
                }
                state.w = w_next;
                state.iteration += 1;
                check_finite(&state)?;
            }
        }
        if i % cfg.record_stride == 0 || i == cfg.iterations {
            record_errors(&mut records, &scenario.topology, &scenario.w_opt, &state);
            if cfg.record_iterates {
                iterates.push((i, state.w.clone()));
            }
        }
    }

    Ok(Trajectory {
        records,
        iterates,
        meta: RunMeta {
            variant: cfg.variant,
            gradient: cfg.gradient,
            mu: cfg.mu,
            seed: cfg.seed,
            run_index,
            iterations: cfg.iterations,
            record_stride: cfg.record_stride,
            n_agents: scenario.topology.n_agents(),
            mu_warning,
        },
    })
}

/// Sequentially execute `runs` Monte Carlo runs (`run_index = 0..runs`).
/// Parallel drivers produce identical trajectories because each run is a
/// pure function of `(seed, run_index)`.
pub fn ensemble(cfg: &RunConfig, scenario: &Scenario, runs: usize) -> Result<Vec<Trajectory>> {
    (0..runs as u64).map(|r| run(cfg, scenario, r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combiner::{consensus_combiner, metropolis_weights};
    use crate::costs::{network_optimum, StreamKind};
    use crate::subspace::{affine_to_subspace, consensus_subspace};
    use crate::synth;
    use crate::{CMatrix, C64};

    fn scalar_cost(r: f64, rv: f64) -> QuadraticCost {
        QuadraticCost::new(
            CMatrix::from_element(1, 1, cr(r)),
            CVector::from_element(1, cr(rv)),
            0.0,
        )
        .unwrap()
    }

    /// Two scalar agents on a connected pair, consensus constraint.
    fn two_agent_scenario() -> Scenario {
        let topology = Arc::new(Topology::fully_connected(2, 1).unwrap());
        let costs = alloc::vec![scalar_cost(1.0, 1.0), scalar_cost(2.0, 0.0)];
        let subspace = consensus_subspace(2, 1).unwrap();
        let w_opt = network_optimum(&costs, &subspace, None).unwrap();
        let a = consensus_combiner(&topology, &metropolis_weights(&topology), 1).unwrap();
        Scenario {
            topology,
            subspace,
            combiner: Some(a),
            costs,
            stochastic: None,
            affine: None,
            w_init: CVector::zeros(2),
            w_opt,
        }
    }

    fn cfg(variant: Variant, mu: f64, iterations: u64) -> RunConfig {
        RunConfig {
            mu,
            iterations,
            variant,
            gradient: GradientMode::TrueGradient,
            seed: 1,
            record_stride: 1,
            record_iterates: false,
        }
    }

    #[test]
    fn centralized_converges_on_scalar_consensus() {
        let sc = two_agent_scenario();
        let traj = run(&cfg(Variant::Centralized, 0.1, 300), &sc, 0).unwrap();
        let last: f64 = traj
            .records
            .iter()
            .rev()
            .take(2)
            .map(|r| r.sq_error)
            .sum();
        assert!(last < 1e-20, "final squared error {last}");
        assert!(!traj.meta.mu_warning);
    }

    #[test]
    fn optimum_is_fixed_point_of_every_variant() {
        let mut sc = two_agent_scenario();
        sc.w_init = sc.w_opt.clone();
        for variant in [Variant::Centralized, Variant::Distributed] {
            let traj = run(&cfg(variant, 0.1, 1), &sc, 0).unwrap();
            let err: f64 = traj.records.iter().rev().take(2).map(|r| r.sq_error).sum();
            assert!(err < 1e-20, "{variant:?} moved from the optimum: {err}");
        }
    }

    #[test]
    fn zero_step_size_is_pure_projection() {
        let sc = two_agent_scenario();
        let w0 = CVector::from_vec(alloc::vec![cr(2.0), cr(0.0)]);
        let mut state = NetworkState::new(w0.clone());
        let grads = TrueGradients(&sc.costs);
        step_centralized(&mut state, &sc.topology, &sc.subspace, None, 0.0, &grads, 0).unwrap();
        assert!((state.w - sc.subspace.project(&w0)).norm() < 1e-15);
    }

    #[test]
    fn repeated_zero_mu_distributed_steps_converge_to_projection() {
        let sc = two_agent_scenario();
        let w0 = synth::random_vector(3, 2);
        let mut state = NetworkState::new(w0.clone());
        let grads = TrueGradients(&sc.costs);
        let a = sc.combiner.as_ref().unwrap();
        for _ in 0..200 {
            step_distributed(&mut state, a, 0.0, &grads, 0).unwrap();
        }
        assert!((state.w - sc.subspace.project(&w0)).norm() < 1e-12);
    }

    #[test]
    fn distributed_matches_centralized_limit() {
        let sc = two_agent_scenario();
        let c = run(&cfg(Variant::Centralized, 0.05, 8000), &sc, 0).unwrap();
        let d = run(&cfg(Variant::Distributed, 0.05, 8000), &sc, 0).unwrap();
        let cerr: f64 = c.records.iter().rev().take(2).map(|r| r.sq_error).sum();
        let derr: f64 = d.records.iter().rev().take(2).map(|r| r.sq_error).sum();
        assert!(cerr.sqrt() < 1e-8 && derr.sqrt() < 1e-8, "{cerr} {derr}");
    }

    #[test]
    fn driving_term_special_cases() {
        // d = 0 gives a zero driving vector; A = P_U leaves d_D intact.
        let d = synth::random_matrix(31, 6, 2);
        let (sub, aff0) = affine_to_subspace(&d, &CVector::zeros(2), alloc::vec![3, 3]).unwrap();
        let topo = Arc::new(Topology::fully_connected(2, 3).unwrap());
        let a = BlockMatrix::from_dense(topo.clone(), &sub.projector()).unwrap();
        assert!(driving_term(&a, &aff0).norm() < 1e-12);
        let dv = synth::random_vector(32, 2);
        let (_, aff) = affine_to_subspace(&d, &dv, alloc::vec![3, 3]).unwrap();
        let drive = driving_term(&a, &aff);
        assert!((&drive - aff.offset()).norm() < 1e-10);
    }

    #[test]
    fn affine_step_with_zero_offset_matches_plain_distributed() {
        let sc = two_agent_scenario();
        let a = sc.combiner.as_ref().unwrap();
        let streams = StochasticSource::Streams(alloc::vec![
            SampleStream::new(
                StreamKind::MseRegression {
                    r_u: CMatrix::identity(1, 1),
                    w_ref: CVector::from_element(1, cr(1.0)),
                    sigma_v: 0.3,
                },
                9,
                0,
            )
            .unwrap(),
            SampleStream::new(
                StreamKind::MseRegression {
                    r_u: CMatrix::identity(1, 1),
                    w_ref: CVector::from_element(1, cr(1.0)),
                    sigma_v: 0.3,
                },
                9,
                1,
            )
            .unwrap(),
        ]);
        let zero_drive = CVector::zeros(2);
        let mut s1 = NetworkState::new(CVector::zeros(2));
        let mut s2 = NetworkState::new(CVector::zeros(2));
        for _ in 0..50 {
            step_distributed(&mut s1, a, 0.05, &streams, 3).unwrap();
            step_distributed_affine(&mut s2, a, 0.05, &streams, 3, &zero_drive).unwrap();
        }
        assert_eq!(s1.w, s2.w, "trajectories must agree bit-for-bit");
    }

    #[test]
    fn affine_fixed_point_holds() {
        // Random affine instance on a fully connected pair of 3-blocks.
        let topo = Arc::new(Topology::fully_connected(2, 3).unwrap());
        let dmat = synth::random_matrix(41, 6, 2);
        let dvec = synth::random_vector(42, 2);
        let (sub, aff) = affine_to_subspace(&dmat, &dvec, topo.block_sizes().to_vec()).unwrap();
        let costs = synth::random_costs(43, topo.block_sizes());
        let w_opt = network_optimum(&costs, &sub, Some(&aff)).unwrap();
        let a = BlockMatrix::from_dense(topo.clone(), &sub.projector()).unwrap();
        let drive = driving_term(&a, &aff);
        let mut state = NetworkState::new(w_opt.clone());
        let grads = TrueGradients(&costs);
        step_distributed_affine(&mut state, &a, 0.05, &grads, 0, &drive).unwrap();
        assert!((state.w - &w_opt).norm() < 1e-10);
    }

    #[test]
    fn linear_projection_iteration_examples() {
        let topo = Arc::new(Topology::fully_connected(2, 1).unwrap());
        let dmat = CMatrix::from_row_slice(2, 1, &[cr(1.0), cr(0.0)]);
        let dvec = CVector::from_element(1, cr(5.0));
        let (sub, aff) = affine_to_subspace(&dmat, &dvec, alloc::vec![1, 1]).unwrap();
        let a = BlockMatrix::from_dense(topo, &sub.projector()).unwrap();
        let w0 = synth::random_vector(51, 2);
        let (w_lim, residuals) =
            linear_projection_iteration(&a, &sub, Some(&aff), &w0, 100, 1e-10).unwrap();
        let target = sub.project(&w0) + aff.offset();
        assert!((w_lim - &target).norm() < 1e-10);
        assert!((target[0] - cr(5.0)).norm() < 1e-10);
        assert!(residuals.len() <= 2, "projector converges immediately");
        // Fixed point: starting at the target gives zero residual at step 1.
        let (_, res2) = linear_projection_iteration(&a, &sub, Some(&aff), &target, 10, 1e-12).unwrap();
        assert!(res2[0] < 1e-12);
    }

    #[test]
    fn linear_projection_reduces_to_vector_power_limit_without_offset() {
        let topo = Arc::new(Topology::from_edges(alloc::vec![1; 3], &[(0, 1), (1, 2)]).unwrap());
        let a = consensus_combiner(&topo, &metropolis_weights(&topo), 1).unwrap();
        let sub = consensus_subspace(3, 1).unwrap();
        let w0 = synth::random_vector(61, 3);
        let (w_lim, residuals) =
            linear_projection_iteration(&a, &sub, None, &w0, 200, 1e-9).unwrap();
        assert!((w_lim - sub.project(&w0)).norm() < 1e-9);
        // Geometric decay at rate 2/3.
        for pair in residuals.windows(2) {
            assert!(pair[1] <= pair[0] * (2.0 / 3.0 + 1e-6));
        }
    }

    #[test]
    fn linear_projection_detects_stalls() {
        // Identity matrix never converges to the consensus projector.
        let topo = Arc::new(Topology::fully_connected(2, 1).unwrap());
        let a = BlockMatrix::from_dense(topo, &CMatrix::identity(2, 2)).unwrap();
        let sub = consensus_subspace(2, 1).unwrap();
        let w0 = CVector::from_vec(alloc::vec![cr(1.0), cr(0.0)]);
        assert!(matches!(
            linear_projection_iteration(&a, &sub, None, &w0, 50, 1e-9),
            Err(Error::MaxIterations(_))
        ));
    }

    /// Fails the test if the engine reads any off-pattern block.
    struct PatternGuard<'a>(&'a BlockMatrix);

    impl BlockAccess for PatternGuard<'_> {
        fn topology(&self) -> &Topology {
            self.0.topology()
        }
        fn block(&self, k: usize, l: usize) -> Option<&CMatrix> {
            assert!(
                self.0.topology().contains_edge(k, l),
                "engine touched off-pattern block ({k},{l})"
            );
            self.0.block(k, l)
        }
    }

    #[test]
    fn distributed_step_only_touches_neighborhood_blocks() {
        let topo = Arc::new(Topology::from_edges(alloc::vec![1; 3], &[(0, 1), (1, 2)]).unwrap());
        // Store an off-pattern block; the engine must never read it.
        let mut dense = consensus_combiner(&topo, &metropolis_weights(&topo), 1).unwrap().to_dense();
        dense[(0, 2)] = C64::new(7.0, 3.0);
        let poisoned = BlockMatrix::from_dense(topo.clone(), &dense).unwrap();
        let clean = consensus_combiner(&topo, &metropolis_weights(&topo), 1).unwrap();
        let costs = synth::random_costs(71, topo.block_sizes());
        let grads = TrueGradients(&costs);
        let w0 = synth::random_vector(72, 3);
        let mut s_guarded = NetworkState::new(w0.clone());
        let mut s_clean = NetworkState::new(w0);
        for _ in 0..5 {
            step_distributed(&mut s_guarded, &PatternGuard(&poisoned), 0.02, &grads, 0).unwrap();
            step_distributed(&mut s_clean, &clean, 0.02, &grads, 0).unwrap();
        }
        assert_eq!(s_guarded.w, s_clean.w, "off-pattern block leaked into the update");
    }

    #[test]
    fn zero_iterations_yields_only_initial_error() {
        let sc = two_agent_scenario();
        let traj = run(&cfg(Variant::Distributed, 0.1, 0), &sc, 0).unwrap();
        assert_eq!(traj.records.len(), 2);
        assert!(traj.records.iter().all(|r| r.iteration == 0));
    }

    #[test]
    fn identical_seeds_reproduce_trajectories() {
        let mut sc = two_agent_scenario();
        sc.stochastic = Some(StochasticSource::Streams(
            (0..2)
                .map(|k| {
                    SampleStream::new(
                        StreamKind::MseRegression {
                            r_u: CMatrix::identity(1, 1),
                            w_ref: CVector::from_element(1, cr(0.5)),
                            sigma_v: 0.5,
                        },
                        99,
                        k,
                    )
                    .unwrap()
                })
                .collect(),
        ));
        let mut c = cfg(Variant::Distributed, 0.02, 400);
        c.gradient = GradientMode::Stochastic;
        let t1 = run(&c, &sc, 5).unwrap();
        let t2 = run(&c, &sc, 5).unwrap();
        assert_eq!(t1.records.len(), t2.records.len());
        for (a, b) in t1.records.iter().zip(t2.records.iter()) {
            assert_eq!(a.sq_error.to_bits(), b.sq_error.to_bits());
        }
        let t3 = run(&c, &sc, 6).unwrap();
        assert!(t1.records.iter().zip(t3.records.iter()).any(|(a, b)| a.sq_error != b.sq_error));
    }

    #[test]
    fn divergence_is_reported_with_iteration() {
        let sc = two_agent_scenario();
        match run(&cfg(Variant::Centralized, 50.0, 500), &sc, 0) {
            Err(Error::Divergence { iteration, .. }) => assert!(iteration > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn mu_warning_flags_large_steps() {
        let sc = two_agent_scenario();
        // δ = 1.5 on the reduced problem: warn from μ = 4/3 on.
        let traj = run(&cfg(Variant::Centralized, 1.4, 1), &sc, 0).unwrap();
        assert!(traj.meta.mu_warning);
    }
}
