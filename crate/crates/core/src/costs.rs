//! Per-agent quadratic risks, streaming sample models, and validators for
//! the curvature and gradient-noise modeling conditions.
//!
//! Risks are `J_k(w) = w*R w − w*r − r*w + c` with complex gradient
//! `∇_{w*} J_k = R w − r`. Streaming models generate the instantaneous
//! gradients used by the stochastic recursions; their draws are pure
//! functions of `(master_seed, run, agent, iteration)`.

use alloc::format;

use crate::linalg::{self, hermitian_eigen};
use crate::rng::DrawSeq;
use crate::subspace::{AffineConstraint, Subspace};
use crate::{cr, C64, CMatrix, CVector, Error, Result};

/// A quadratic risk with Hermitian positive-semidefinite curvature.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    r_mat: CMatrix,
    r_vec: CVector,
    constant: f64,
}

impl QuadraticCost {
    pub fn new(r_mat: CMatrix, r_vec: CVector, constant: f64) -> Result<Self> {
        let n = r_mat.nrows();
        if !r_mat.is_square() || r_vec.len() != n {
            return Err(Error::Shape(format!(
                "cost dimensions: R is {}x{}, r has {}",
                r_mat.nrows(),
                r_mat.ncols(),
                r_vec.len()
            )));
        }
        if !linalg::is_hermitian(&r_mat, 1e-12) {
            return Err(Error::Shape("curvature matrix must be Hermitian".into()));
        }
        let (vals, _) = hermitian_eigen(&r_mat);
        if vals.first().copied().unwrap_or(0.0) < -1e-10 {
            return Err(Error::Curvature(format!(
                "curvature matrix has negative eigenvalue {:.3e}",
                vals[0]
            )));
        }
        Ok(Self { r_mat, r_vec, constant })
    }

    pub fn dim(&self) -> usize {
        self.r_mat.nrows()
    }

    pub fn curvature(&self) -> &CMatrix {
        &self.r_mat
    }

    pub fn linear_term(&self) -> &CVector {
        &self.r_vec
    }

    /// Risk value `w*Rw − w*r − r*w + c` (real by construction).
    pub fn risk(&self, w: &CVector) -> f64 {
        let quad = (w.adjoint() * &self.r_mat * w)[(0, 0)].re;
        let cross = w.dotc(&self.r_vec).re;
        quad - 2.0 * cross + self.constant
    }

    /// Closed-form gradient `∇_{w*} J = R w − r`.
    pub fn gradient(&self, w: &CVector) -> CVector {
        &self.r_mat * w - &self.r_vec
    }
}

/// `∇_{w*} J_k(w) = R w − r` with a shape check.
pub fn true_gradient(cost: &QuadraticCost, w: &CVector) -> Result<CVector> {
    if w.len() != cost.dim() {
        return Err(Error::Shape(format!(
            "iterate has {} entries, cost expects {}",
            w.len(),
            cost.dim()
        )));
    }
    Ok(cost.gradient(w))
}

/// The streaming data model behind a stochastic gradient.
#[derive(Debug, Clone)]
pub enum StreamKind {
    /// Regression: `d(i) = u_i* w_ref + v(i)` with `u ~ CN(0, R_u)` and
    /// `v ~ CN(0, σ_v²)`. Induced risk has `R = R_u`, `r = R_u w_ref`.
    MseRegression {
        r_u: CMatrix,
        w_ref: CVector,
        sigma_v: f64,
    },
    /// Output-power minimization: gradient `u (u* w)` with `u ~ CN(0, R_u)`.
    /// Induced risk has `R = R_u`, `r = 0`.
    MinimumVariance { r_u: CMatrix },
}

/// A seeded per-agent stream of instantaneous gradients.
///
/// Draws for `(run, iteration)` are independent across agents and
/// reproducible; the factor `F` with `F F* = R_u` is precomputed once.
#[derive(Debug, Clone)]
pub struct SampleStream {
    kind: StreamKind,
    factor: CMatrix,
    seed: u64,
    agent: usize,
}

impl SampleStream {
    pub fn new(kind: StreamKind, seed: u64, agent: usize) -> Result<Self> {
        let r_u = match &kind {
            StreamKind::MseRegression { r_u, w_ref, sigma_v } => {
                if w_ref.len() != r_u.nrows() {
                    return Err(Error::Shape("w_ref length must match R_u".into()));
                }
                if *sigma_v < 0.0 {
                    return Err(Error::Config("sigma_v must be nonnegative".into()));
                }
                r_u
            }
            StreamKind::MinimumVariance { r_u } => r_u,
        };
        if !linalg::is_hermitian(r_u, 1e-12) {
            return Err(Error::Shape("regressor covariance must be Hermitian".into()));
        }
        let (vals, vecs) = hermitian_eigen(r_u);
        if vals.first().copied().unwrap_or(0.0) < -1e-10 {
            return Err(Error::Curvature("regressor covariance must be PSD".into()));
        }
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            vals.len(),
            vals.iter().map(|&v| cr(libm::sqrt(v.max(0.0)))),
        ));
        let factor = &vecs * d;
        Ok(Self { kind, factor, seed, agent })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn kind(&self) -> &StreamKind {
        &self.kind
    }

    /// The quadratic risk induced by this stream.
    pub fn induced_cost(&self) -> Result<QuadraticCost> {
        match &self.kind {
            StreamKind::MseRegression { r_u, w_ref, .. } => {
                QuadraticCost::new(r_u.clone(), r_u * w_ref, 0.0)
            }
            StreamKind::MinimumVariance { r_u } => {
                QuadraticCost::new(r_u.clone(), CVector::zeros(r_u.nrows()), 0.0)
            }
        }
    }

    /// Draw the regressor (and desired-sample, when applicable) for one cell.
    fn draw(&self, run: u64, iteration: u64) -> (CVector, Option<C64>) {
        let mut seq = DrawSeq::for_cell(self.seed, run, self.agent as u64, iteration);
        let g = CVector::from_fn(self.dim(), |_, _| seq.next_complex_gaussian());
        let u = &self.factor * g;
        match &self.kind {
            StreamKind::MseRegression { w_ref, sigma_v, .. } => {
                let noise = seq.next_complex_gaussian() * cr(*sigma_v);
                let d = u.dotc(w_ref) + noise;
                (u, Some(d))
            }
            StreamKind::MinimumVariance { .. } => (u, None),
        }
    }

    /// Instantaneous gradient at `w` for `(run, iteration)`.
    ///
    /// Regression: `u (u* w) − d·u`; minimum variance: `u (u* w)`. Both are
    /// unbiased for the induced risk's gradient.
    pub fn gradient(&self, run: u64, iteration: u64, w: &CVector) -> CVector {
        let (u, d) = self.draw(run, iteration);
        let pred = u.dotc(w);
        match d {
            Some(d) => &u * (pred - d),
            None => &u * pred,
        }
    }

    /// Instantaneous loss at `w` (used by the risk-identity checks).
    pub fn loss(&self, run: u64, iteration: u64, w: &CVector) -> f64 {
        let (u, d) = self.draw(run, iteration);
        let pred = u.dotc(w);
        match d {
            Some(d) => (d - pred).norm_sqr(),
            None => pred.norm_sqr(),
        }
    }

    /// Analytic gradient-noise bound parameters for the Gaussian models:
    /// `E‖s‖² ≤ (β²/h²)‖w‖² + σ²`.
    pub fn noise_bounds(&self, h: f64) -> NoiseBounds {
        let (vals, _) = hermitian_eigen(match &self.kind {
            StreamKind::MseRegression { r_u, .. } => r_u,
            StreamKind::MinimumVariance { r_u } => r_u,
        });
        let trace: f64 = vals.iter().sum();
        let lmax = vals.last().copied().unwrap_or(0.0);
        match &self.kind {
            StreamKind::MseRegression { w_ref, sigma_v, .. } => NoiseBounds {
                beta_sq: h * h * 2.0 * trace * lmax,
                sigma_sq: 2.0 * trace * lmax * w_ref.norm_squared() + sigma_v * sigma_v * trace,
            },
            StreamKind::MinimumVariance { .. } => NoiseBounds {
                beta_sq: h * h * trace * lmax,
                sigma_sq: 0.0,
            },
        }
    }
}

/// Gradient-noise bound parameters.
#[derive(Debug, Clone, Copy)]
pub struct NoiseBounds {
    pub beta_sq: f64,
    pub sigma_sq: f64,
}

/// Stack per-agent curvatures into the block-diagonal `ℛ` and linear terms
/// into `𝓇`.
fn stack_costs(costs: &[QuadraticCost]) -> (CMatrix, CVector) {
    let m: usize = costs.iter().map(QuadraticCost::dim).sum();
    let mut r = CMatrix::zeros(m, m);
    let mut rv = CVector::zeros(m);
    let mut off = 0usize;
    for c in costs {
        let d = c.dim();
        r.view_mut((off, off), (d, d)).copy_from(c.curvature());
        rv.rows_mut(off, d).copy_from(c.linear_term());
        off += d;
    }
    (r, rv)
}

/// The unique constrained minimizer of the aggregate quadratic risk.
///
/// Subspace case: `W° = U (U*ℛU)^{-1} U* 𝓇`. Affine case: the same
/// reduction around the offset `d_D`.
pub fn network_optimum(
    costs: &[QuadraticCost],
    s: &Subspace,
    affine: Option<&AffineConstraint>,
) -> Result<CVector> {
    let (r, rv) = stack_costs(costs);
    if r.nrows() != s.dim() {
        return Err(Error::Shape(format!(
            "stacked costs have dimension {}, subspace {}",
            r.nrows(),
            s.dim()
        )));
    }
    let u = s.basis();
    let reduced = u.adjoint() * &r * u;
    let (vals, _) = hermitian_eigen(&reduced);
    if vals.first().copied().unwrap_or(0.0) <= 0.0 {
        return Err(Error::Curvature(format!(
            "reduced Hessian is singular (λ_min = {:.3e})",
            vals.first().copied().unwrap_or(0.0)
        )));
    }
    match affine {
        None => {
            let rhs = u.adjoint() * &rv;
            let sol = linalg::solve_hpd(&reduced, &rhs)?;
            Ok(u * sol)
        }
        Some(aff) => {
            let rhs = u.adjoint() * (&rv - &r * aff.offset());
            let sol = linalg::solve_hpd(&reduced, &rhs)?;
            Ok(aff.offset() + u * sol)
        }
    }
}

/// Stacked gradients at the optimum and the norm of their projection onto
/// the constraint subspace (zero at a true optimum).
pub fn bias_vector(costs: &[QuadraticCost], w_opt: &CVector, s: &Subspace) -> (CVector, f64) {
    let mut b = CVector::zeros(w_opt.len());
    let mut off = 0usize;
    for c in costs {
        let d = c.dim();
        let wk = w_opt.rows(off, d).into_owned();
        b.rows_mut(off, d).copy_from(&c.gradient(&wk));
        off += d;
    }
    let projected = s.basis().adjoint() * &b;
    let norm = projected.norm();
    (b, norm)
}

/// Extreme eigenvalues `(ν, δ)` of the reduced Hessian `U*ℛU`.
pub fn curvature_check(costs: &[QuadraticCost], s: &Subspace) -> Result<(f64, f64)> {
    let (r, _) = stack_costs(costs);
    if r.nrows() != s.dim() {
        return Err(Error::Shape("stacked costs do not match subspace dimension".into()));
    }
    let reduced = s.basis().adjoint() * &r * s.basis();
    let (vals, _) = hermitian_eigen(&reduced);
    let nu = vals.first().copied().unwrap_or(0.0);
    let delta = vals.last().copied().unwrap_or(0.0);
    if nu <= 0.0 {
        return Err(Error::Curvature(format!("ν = {nu:.3e} is not positive")));
    }
    Ok((nu, delta))
}

/// Empirical gradient-noise moments at a fixed iterate.
#[derive(Debug, Clone, Copy)]
pub struct NoiseMoments {
    /// Norm of the empirical mean of the noise (should shrink as 1/√trials).
    pub mean_norm: f64,
    /// Empirical `E‖s‖²` divided by the analytic bound `(β²/h²)‖w‖² + σ²`.
    pub var_ratio: f64,
    /// Empirical second moment `E‖s‖²` itself.
    pub second_moment: f64,
}

/// Estimate the gradient-noise mean and second moment over `trials`
/// iterations at fixed `w`, against the stream's analytic bounds.
pub fn noise_moment_check(
    stream: &SampleStream,
    w: &CVector,
    trials: usize,
    h: f64,
) -> Result<NoiseMoments> {
    if w.len() != stream.dim() {
        return Err(Error::Shape("iterate does not match stream dimension".into()));
    }
    let true_grad = stream.induced_cost()?.gradient(w);
    let mut mean = CVector::zeros(w.len());
    let mut second = 0.0f64;
    for i in 0..trials {
        let g = stream.gradient(0, i as u64, w);
        let noise = &true_grad - g;
        second += noise.norm_squared();
        mean += noise;
    }
    mean /= cr(trials as f64);
    second /= trials as f64;
    let bounds = stream.noise_bounds(h);
    let bound_value = bounds.beta_sq / (h * h) * w.norm_squared() + bounds.sigma_sq;
    let var_ratio = if bound_value > 0.0 {
        second / bound_value
    } else if second <= 1e-20 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(NoiseMoments {
        mean_norm: mean.norm(),
        var_ratio,
        second_moment: second,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subspace::consensus_subspace;
    use crate::synth;

    fn scalar_cost(r: f64, rv: f64) -> QuadraticCost {
        QuadraticCost::new(
            CMatrix::from_element(1, 1, cr(r)),
            CVector::from_element(1, cr(rv)),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn gradient_closed_form() {
        let cost = QuadraticCost::new(
            CMatrix::from_row_slice(2, 2, &[cr(2.0), cr(0.0), cr(0.0), cr(1.0)]),
            CVector::from_vec(alloc::vec![cr(1.0), cr(1.0)]),
            0.0,
        )
        .unwrap();
        let w = CVector::from_vec(alloc::vec![cr(1.0), cr(1.0)]);
        let g = true_gradient(&cost, &w).unwrap();
        assert!((g[0] - cr(1.0)).norm() < 1e-15);
        assert!(g[1].norm() < 1e-15);
        // Identity curvature, zero linear term: gradient is w itself.
        let id = QuadraticCost::new(CMatrix::identity(2, 2), CVector::zeros(2), 0.0).unwrap();
        assert!((id.gradient(&w) - &w).norm() < 1e-15);
        // Stationary point.
        let w_star = CVector::from_vec(alloc::vec![cr(0.5), cr(1.0)]);
        assert!(cost.gradient(&w_star).norm() < 1e-15);
    }

    #[test]
    fn minimum_variance_gradient_vanishes_at_zero() {
        let stream = SampleStream::new(
            StreamKind::MinimumVariance { r_u: CMatrix::identity(3, 3) },
            9,
            0,
        )
        .unwrap();
        let w = CVector::zeros(3);
        for i in 0..32 {
            assert!(stream.gradient(0, i, &w).norm() == 0.0);
        }
    }

    #[test]
    fn regression_gradient_vanishes_at_reference_without_noise() {
        let w_ref = CVector::from_vec(alloc::vec![C64::new(0.3, -0.2), cr(1.0)]);
        let stream = SampleStream::new(
            StreamKind::MseRegression {
                r_u: CMatrix::identity(2, 2),
                w_ref: w_ref.clone(),
                sigma_v: 0.0,
            },
            11,
            0,
        )
        .unwrap();
        for i in 0..32 {
            assert!(stream.gradient(0, i, &w_ref).norm() < 1e-14);
        }
    }

    #[test]
    fn stochastic_gradient_is_unbiased() {
        let r_u = synth::random_psd(21, 3, 0.5);
        let w_ref = synth::random_vector(22, 3);
        let stream = SampleStream::new(
            StreamKind::MseRegression { r_u, w_ref, sigma_v: 0.4 },
            23,
            1,
        )
        .unwrap();
        let w = synth::random_vector(24, 3);
        let truth = stream.induced_cost().unwrap().gradient(&w);
        let trials = 100_000usize;
        let mut mean = CVector::zeros(3);
        for i in 0..trials {
            mean += stream.gradient(0, i as u64, &w);
        }
        mean /= cr(trials as f64);
        let rel = (mean - &truth).norm() / truth.norm().max(1e-12);
        assert!(rel <= 3.0 / libm::sqrt(trials as f64) * 10.0, "rel = {rel}");
    }

    #[test]
    fn optimum_of_two_agent_consensus_scalar() {
        let costs = alloc::vec![scalar_cost(1.0, 1.0), scalar_cost(2.0, 0.0)];
        let s = consensus_subspace(2, 1).unwrap();
        let w = network_optimum(&costs, &s, None).unwrap();
        assert!((w[0] - cr(1.0 / 3.0)).norm() < 1e-12);
        assert!((w[1] - cr(1.0 / 3.0)).norm() < 1e-12);
        let (b, proj) = bias_vector(&costs, &w, &s);
        assert!((b[0] - cr(-2.0 / 3.0)).norm() < 1e-12);
        assert!((b[1] - cr(2.0 / 3.0)).norm() < 1e-12);
        assert!(proj < 1e-12);
        let (nu, delta) = curvature_check(&costs, &s).unwrap();
        assert!((nu - 1.5).abs() < 1e-12 && (delta - 1.5).abs() < 1e-12);
    }

    #[test]
    fn optimum_unconstrained_when_subspace_is_full() {
        let r = synth::random_psd(31, 4, 1.0);
        let rv = synth::random_vector(32, 4);
        let cost = QuadraticCost::new(r.clone(), rv.clone(), 0.0).unwrap();
        let s = crate::subspace::orthonormalize(&CMatrix::identity(4, 4), alloc::vec![4]).unwrap();
        let w = network_optimum(&[cost], &s, None).unwrap();
        let direct = r.lu().solve(&rv).unwrap();
        assert!((w - direct).norm() < 1e-9);
    }

    #[test]
    fn identical_agents_share_unconstrained_optimum() {
        let r = synth::random_psd(41, 2, 1.0);
        let rv = synth::random_vector(42, 2);
        let costs: Vec<QuadraticCost> = (0..3)
            .map(|_| QuadraticCost::new(r.clone(), rv.clone(), 0.0).unwrap())
            .collect();
        let s = consensus_subspace(3, 2).unwrap();
        let w = network_optimum(&costs, &s, None).unwrap();
        let local = r.clone().lu().solve(&rv).unwrap();
        for k in 0..3 {
            assert!((w.rows(2 * k, 2).into_owned() - &local).norm() < 1e-9);
        }
        let (b, proj) = bias_vector(&costs, &w, &s);
        assert!(b.norm() < 1e-9);
        assert!(proj < 1e-9);
    }

    #[test]
    fn curvature_identity_costs() {
        let costs: Vec<QuadraticCost> = (0..3)
            .map(|_| QuadraticCost::new(CMatrix::identity(2, 2), CVector::zeros(2), 0.0).unwrap())
            .collect();
        let s = consensus_subspace(3, 2).unwrap();
        let (nu, delta) = curvature_check(&costs, &s).unwrap();
        assert!((nu - 1.0).abs() < 1e-12 && (delta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn curvature_rejects_singular_reduction() {
        let zero = QuadraticCost::new(CMatrix::zeros(1, 1), CVector::zeros(1), 0.0).unwrap();
        let costs = alloc::vec![zero.clone(), zero];
        let s = consensus_subspace(2, 1).unwrap();
        assert!(matches!(curvature_check(&costs, &s), Err(Error::Curvature(_))));
    }

    #[test]
    fn noise_moments_regression_at_reference() {
        // At w = w_ref the noise is v·u plus the covariance fluctuation term,
        // with E‖s‖² = σ_v²·tr(R_u); the analytic bound must not be exceeded.
        let r_u = synth::random_psd(51, 3, 1.0);
        let trace: f64 = hermitian_eigen(&r_u).0.iter().sum();
        let w_ref = synth::random_vector(52, 3);
        let sigma_v = 0.7;
        let stream = SampleStream::new(
            StreamKind::MseRegression { r_u, w_ref: w_ref.clone(), sigma_v },
            53,
            2,
        )
        .unwrap();
        let m = noise_moment_check(&stream, &w_ref, 60_000, 2.0).unwrap();
        let expected = sigma_v * sigma_v * trace;
        assert!((m.second_moment - expected).abs() / expected < 0.05, "{m:?} vs {expected}");
        assert!(m.var_ratio <= 1.05);
        assert!(m.mean_norm <= 5.0 * libm::sqrt(m.second_moment / 60_000.0));
    }

    #[test]
    fn noise_moments_minimum_variance_at_zero() {
        let stream = SampleStream::new(
            StreamKind::MinimumVariance { r_u: CMatrix::identity(2, 2) },
            61,
            0,
        )
        .unwrap();
        let m = noise_moment_check(&stream, &CVector::zeros(2), 10_000, 2.0).unwrap();
        assert!(m.mean_norm == 0.0 && m.second_moment == 0.0 && m.var_ratio == 0.0);
    }

    #[test]
    fn cross_agent_noise_is_uncorrelated() {
        let r_u = CMatrix::identity(2, 2);
        let mk = |agent| {
            SampleStream::new(
                StreamKind::MseRegression {
                    r_u: r_u.clone(),
                    w_ref: CVector::zeros(2),
                    sigma_v: 1.0,
                },
                77,
                agent,
            )
            .unwrap()
        };
        let s0 = mk(0);
        let s1 = mk(1);
        let w = synth::random_vector(78, 2);
        let g0 = s0.induced_cost().unwrap().gradient(&w);
        let g1 = s1.induced_cost().unwrap().gradient(&w);
        let trials = 40_000usize;
        let mut cross = C64::new(0.0, 0.0);
        let mut pow0 = 0.0;
        let mut pow1 = 0.0;
        for i in 0..trials {
            let n0 = &g0 - s0.gradient(0, i as u64, &w);
            let n1 = &g1 - s1.gradient(0, i as u64, &w);
            cross += n0.dotc(&n1);
            pow0 += n0.norm_squared();
            pow1 += n1.norm_squared();
        }
        let corr = cross.norm() / libm::sqrt(pow0 * pow1);
        assert!(corr <= 5.0 / libm::sqrt(trials as f64) * 2.0, "corr = {corr}");
    }

    #[test]
    fn risk_matches_empirical_loss() {
        let r_u = synth::random_psd(81, 2, 1.0);
        let w_ref = synth::random_vector(82, 2);
        let stream = SampleStream::new(
            StreamKind::MseRegression { r_u: r_u.clone(), w_ref: w_ref.clone(), sigma_v: 0.5 },
            83,
            0,
        )
        .unwrap();
        let w = synth::random_vector(84, 2);
        // Induced risk with the constant term σ_v² + w_ref* R_u w_ref added,
        // so it equals E|d − u*w|².
        let base = stream.induced_cost().unwrap();
        let c = 0.25 + (w_ref.adjoint() * &r_u * &w_ref)[(0, 0)].re;
        let risk = base.risk(&w) + c;
        let trials = 200_000usize;
        let mut acc = 0.0;
        let mut acc_sq = 0.0;
        for i in 0..trials {
            let v = stream.loss(0, i as u64, &w);
            acc += v;
            acc_sq += v * v;
        }
        let mean = acc / trials as f64;
        let var = acc_sq / trials as f64 - mean * mean;
        let stderr = libm::sqrt(var / trials as f64);
        assert!((mean - risk).abs() <= 3.0 * stderr.max(1e-6), "mean {mean} risk {risk}");
    }
}
