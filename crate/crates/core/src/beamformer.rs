//! Distributed minimum-variance beamforming on a uniform linear array.
//!
//! Each antenna is an agent; agent `k` estimates the sub-vector of the
//! global beamformer `h` indexed by its neighborhood, from shared snapshots
//! `x_i = Σ_n a(θ_n) s_n(i) + v_i`. Consensus between copies of each weight
//! and the gain constraints `D*h = b` merge into one affine constraint set
//! on the stacked network vector, which the distributed recursion solves.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::costs::QuadraticCost;
use crate::linalg::{self, solve_hpd_matrix};
use crate::rng::DrawSeq;
use crate::subspace::{affine_to_subspace, AffineConstraint, Subspace};
use crate::topology::Topology;
use crate::{cr, C64, CMatrix, CVector, Error, Result};

/// Default step size used for the distributed run of the default scenario.
pub const DEFAULT_MU: f64 = 0.005;
/// Default step size for the centralized reference run.
pub const DEFAULT_MU_CENTRALIZED: f64 = 0.001;
/// Default contraction margin for the combiner design.
pub const DEFAULT_EPSILON: f64 = 0.01;

/// Array manifold vector `a(θ) = col{1, e^{−jτ}, …, e^{−j(N−1)τ}}` with
/// `τ = 2π (d/λ) sin θ`.
pub fn steering_vector(theta_deg: f64, n: usize, spacing_ratio: f64) -> CVector {
    let tau = core::f64::consts::TAU * spacing_ratio * libm::sin(theta_deg.to_radians());
    CVector::from_fn(n, |m, _| {
        let phase = -(m as f64) * tau;
        C64::new(libm::cos(phase), libm::sin(phase))
    })
}

/// Banded topology of a ULA with neighborhood half-width `nu`:
/// `N_k = {max(1, k−ν), …, min(k+ν, N)}` and `M_k = |N_k|`.
pub fn ula_topology(n: usize, nu: usize) -> Result<Arc<Topology>> {
    if n == 0 || nu == 0 || nu > n - 1 {
        return Err(Error::Config(format!("need 1 ≤ ν ≤ N−1, got ν={nu}, N={n}")));
    }
    let sets: Vec<Vec<usize>> = (0..n)
        .map(|k| (k.saturating_sub(nu)..=(k + nu).min(n - 1)).collect())
        .collect();
    let sizes: Vec<usize> = sets.iter().map(Vec::len).collect();
    let mut edges = Vec::new();
    for (k, set) in sets.iter().enumerate() {
        for &l in set {
            if l > k {
                edges.push((k, l));
            }
        }
    }
    Ok(Arc::new(Topology::from_edges(sizes, &edges)?))
}

/// The uniform-linear-array experiment description.
#[derive(Debug, Clone)]
pub struct UlaScenario {
    pub n_antennas: usize,
    /// Neighborhood half-width (1 ≤ ν ≤ N−1).
    pub nu: usize,
    /// Source directions in degrees; index 0 is the desired signal.
    pub doas_deg: Vec<f64>,
    /// Source powers σ²_{s,n}.
    pub powers: Vec<f64>,
    /// Additive noise variance σ_v².
    pub noise_var: f64,
    /// Element spacing over wavelength, d/λ.
    pub spacing_ratio: f64,
    /// Directions (degrees) constrained by the gain vector.
    pub constraint_doas_deg: Vec<f64>,
    /// Gains `b` enforced toward the constraint directions.
    pub constraint_gains: Vec<C64>,
}

impl Default for UlaScenario {
    /// A 14-element half-wavelength ULA: desired source at 30°, interferers
    /// at ±60°, unit source powers, σ_v = 0.7, ν = 4, and gain constraints
    /// `{1, 0.01, 0.01}` toward {30°, 58.5°, 61.5°}.
    fn default() -> Self {
        Self {
            n_antennas: 14,
            nu: 4,
            doas_deg: alloc::vec![30.0, -60.0, 60.0],
            powers: alloc::vec![1.0, 1.0, 1.0],
            noise_var: 0.49,
            spacing_ratio: 0.5,
            constraint_doas_deg: alloc::vec![30.0, 58.5, 61.5],
            constraint_gains: alloc::vec![cr(1.0), cr(0.01), cr(0.01)],
        }
    }
}

impl UlaScenario {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_antennas;
        if n == 0 || self.nu == 0 || self.nu > n - 1 {
            return Err(Error::Config(format!(
                "need 1 ≤ ν ≤ N−1, got ν={}, N={n}",
                self.nu
            )));
        }
        if self.doas_deg.len() != self.powers.len() || self.doas_deg.is_empty() {
            return Err(Error::Config("source directions and powers must pair up".into()));
        }
        if self.powers.iter().any(|&p| p <= 0.0) || self.noise_var <= 0.0 {
            return Err(Error::Config("source powers and noise variance must be positive".into()));
        }
        if self.spacing_ratio <= 0.0 {
            return Err(Error::Config("spacing ratio must be positive".into()));
        }
        if self.constraint_doas_deg.len() != self.constraint_gains.len()
            || self.constraint_doas_deg.is_empty()
        {
            return Err(Error::Config("constraint directions and gains must pair up".into()));
        }
        Ok(())
    }

    pub fn topology(&self) -> Result<Arc<Topology>> {
        ula_topology(self.n_antennas, self.nu)
    }

    fn steering(&self, theta_deg: f64) -> CVector {
        steering_vector(theta_deg, self.n_antennas, self.spacing_ratio)
    }

    /// Received-signal covariance `R_x = Σ_n σ²_n a(θ_n) a*(θ_n) + σ_v² I`.
    pub fn received_covariance(&self) -> CMatrix {
        let n = self.n_antennas;
        let mut r = CMatrix::identity(n, n) * cr(self.noise_var);
        for (theta, &power) in self.doas_deg.iter().zip(self.powers.iter()) {
            let a = self.steering(*theta);
            r += &a * a.adjoint() * cr(power);
        }
        r
    }

    /// Interference-plus-noise covariance (desired source excluded).
    pub fn interference_covariance(&self) -> CMatrix {
        let n = self.n_antennas;
        let mut r = CMatrix::identity(n, n) * cr(self.noise_var);
        for (idx, (theta, &power)) in self.doas_deg.iter().zip(self.powers.iter()).enumerate() {
            if idx == 0 {
                continue;
            }
            let a = self.steering(*theta);
            r += &a * a.adjoint() * cr(power);
        }
        r
    }

    /// Gain-constraint matrix `D = [a(θ_c1) … a(θ_cP)]`.
    pub fn constraint_matrix(&self) -> CMatrix {
        let n = self.n_antennas;
        let p = self.constraint_doas_deg.len();
        let mut d = CMatrix::zeros(n, p);
        for (j, theta) in self.constraint_doas_deg.iter().enumerate() {
            d.set_column(j, &self.steering(*theta));
        }
        d
    }

    /// Output SINR of a beamformer `h` (linear power ratio).
    pub fn output_sinr(&self, h: &CVector) -> f64 {
        let a0 = self.steering(self.doas_deg[0]);
        let num = self.powers[0] * h.dotc(&a0).norm_sqr();
        let den = (h.adjoint() * self.interference_covariance() * h)[(0, 0)].re;
        if den <= 0.0 {
            return f64::NEG_INFINITY;
        }
        num / den
    }

    /// Quadratic risk of agent `k`: `J_k(w) = w* E[u u*] w`, where the
    /// regressor covariance is the neighborhood sub-block of `R_x` scaled by
    /// `|N_m|^{-1/2} |N_{m'}|^{-1/2}`.
    pub fn agent_cost(&self, k: usize) -> Result<QuadraticCost> {
        let topo = self.topology()?;
        let r_x = self.received_covariance();
        let members: Vec<usize> = topo.neighborhood(k).iter().copied().collect();
        let mk = members.len();
        let mut r = CMatrix::zeros(mk, mk);
        for (i, &m) in members.iter().enumerate() {
            for (j, &mm) in members.iter().enumerate() {
                let scale = 1.0
                    / libm::sqrt(
                        (topo.neighborhood(m).len() * topo.neighborhood(mm).len()) as f64,
                    );
                r[(i, j)] = r_x[(m, mm)] * cr(scale);
            }
        }
        QuadraticCost::new(r, CVector::zeros(mk), 0.0)
    }

    pub fn costs(&self) -> Result<Vec<QuadraticCost>> {
        (0..self.n_antennas).map(|k| self.agent_cost(k)).collect()
    }

    /// Merged affine constraints on the stacked network vector: chained
    /// consensus differences between copies of each antenna weight, plus the
    /// gain constraints lifted onto first occurrences. Returns `(D, d)` for
    /// the set `{W : D* W = d}`.
    pub fn build_constraints(&self) -> Result<(CMatrix, CVector)> {
        self.validate()?;
        let topo = self.topology()?;
        let n = self.n_antennas;
        let m_total = topo.total_dim();
        // Stacked position of antenna weight m inside agent k's block.
        let pos = |k: usize, m: usize| -> usize {
            let members: Vec<usize> = topo.neighborhood(k).iter().copied().collect();
            let idx = members.iter().position(|&x| x == m).expect("m in N_k");
            topo.block_range(k).start + idx
        };
        // Copies of antenna m live at the agents whose neighborhood holds m.
        let copies: Vec<Vec<usize>> = (0..n)
            .map(|m| (0..n).filter(|&k| topo.contains_edge(k, m)).collect())
            .collect();
        let n_consensus: usize = copies.iter().map(|c| c.len() - 1).sum();
        let p_c = self.constraint_gains.len();
        let q = n_consensus + p_c;

        // Rows of D* (q × M), then returned as D = (D*)^adjoint.
        let mut dstar = CMatrix::zeros(q, m_total);
        let mut row = 0usize;
        for m in 0..n {
            for pair in copies[m].windows(2) {
                dstar[(row, pos(pair[0], m))] = cr(1.0);
                dstar[(row, pos(pair[1], m))] = cr(-1.0);
                row += 1;
            }
        }
        let d_small = self.constraint_matrix();
        for c in 0..p_c {
            for m in 0..n {
                dstar[(row, pos(copies[m][0], m))] = d_small[(m, c)].conj();
            }
            row += 1;
        }
        let mut d_vec = CVector::zeros(q);
        for c in 0..p_c {
            d_vec[n_consensus + c] = self.constraint_gains[c];
        }
        let dmat = dstar.adjoint();
        // Full column rank guard (chained differences keep it so).
        let sv = linalg::singular_values(&dmat);
        let smax = sv.first().copied().unwrap_or(0.0);
        if smax == 0.0 || sv.last().copied().unwrap_or(0.0) <= 1e-10 * smax {
            return Err(Error::Rank("merged constraint stack is rank deficient".into()));
        }
        Ok((dmat, d_vec))
    }

    /// The constraint subspace and affine offset of the merged constraints.
    pub fn subspace_and_affine(&self) -> Result<(Subspace, AffineConstraint)> {
        let topo = self.topology()?;
        let (dmat, dvec) = self.build_constraints()?;
        affine_to_subspace(&dmat, &dvec, topo.block_sizes().to_vec())
    }

    /// Collapse a stacked network vector to the global beamformer by
    /// averaging the copies of each antenna weight.
    pub fn extract_beamformer(&self, w: &CVector) -> Result<CVector> {
        let topo = self.topology()?;
        if w.len() != topo.total_dim() {
            return Err(Error::Shape(format!(
                "stacked vector has {} entries, expected {}",
                w.len(),
                topo.total_dim()
            )));
        }
        let n = self.n_antennas;
        let mut h = CVector::zeros(n);
        let mut counts = alloc::vec![0usize; n];
        for k in 0..n {
            let start = topo.block_range(k).start;
            for (idx, &m) in topo.neighborhood(k).iter().enumerate() {
                h[m] += w[start + idx];
                counts[m] += 1;
            }
        }
        for m in 0..n {
            h[m] /= cr(counts[m] as f64);
        }
        Ok(h)
    }

    /// Seeded shared-snapshot gradient stream for the distributed run.
    pub fn stream(&self, seed: u64) -> Result<UlaStream> {
        self.validate()?;
        let topo = self.topology()?;
        let steering: Vec<CVector> = self.doas_deg.iter().map(|&t| self.steering(t)).collect();
        let scales: Vec<f64> = (0..self.n_antennas)
            .map(|m| 1.0 / libm::sqrt(topo.neighborhood(m).len() as f64))
            .collect();
        let members: Vec<Vec<usize>> = (0..self.n_antennas)
            .map(|k| topo.neighborhood(k).iter().copied().collect())
            .collect();
        Ok(UlaStream {
            steering,
            amplitudes: self.powers.iter().map(|&p| libm::sqrt(p)).collect(),
            noise_amp: libm::sqrt(self.noise_var),
            scales,
            members,
            seed,
        })
    }
}

/// Partial covariance available to the network: `F ∘ R_x` with
/// `F[k,l] = [E²]_{kl} / √(|N_k||N_l|)`.
///
/// At any consensus-feasible stacked vector the aggregate cost equals
/// `h* (F ∘ R_x) h`.
pub fn partial_covariance(e: &DMatrix<f64>, r_x: &CMatrix) -> Result<CMatrix> {
    let n = e.nrows();
    if e.ncols() != n || r_x.shape() != (n, n) {
        return Err(Error::Shape("connection matrix and covariance must both be N×N".into()));
    }
    let e2 = e * e;
    let sizes: Vec<f64> = (0..n).map(|k| e.row(k).iter().sum()).collect();
    let mut out = CMatrix::zeros(n, n);
    for k in 0..n {
        for l in 0..n {
            out[(k, l)] = r_x[(k, l)] * cr(e2[(k, l)] / libm::sqrt(sizes[k] * sizes[l]));
        }
    }
    Ok(out)
}

/// Closed-form constrained-minimum-variance beamformer
/// `h° = R_x^{-1} D (D* R_x^{-1} D)^{-1} b`.
pub fn lcmv_optimum(r_x: &CMatrix, d: &CMatrix, b: &CVector) -> Result<CVector> {
    if d.nrows() != r_x.nrows() || b.len() != d.ncols() {
        return Err(Error::Shape("constraint dimensions do not match covariance".into()));
    }
    let x = solve_hpd_matrix(r_x, d)?;
    let t = d.adjoint() * &x;
    let y = t
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Curvature("reduced constraint system is singular".into()))?;
    Ok(x * y)
}

/// Solve the network problem `min Σ_k w_k*(E u_k u_k*) w_k` subject to the
/// merged constraints, by its KKT linear system. Serves as the independent
/// oracle for distributed runs.
pub fn network_lcmv_optimum(scenario: &UlaScenario) -> Result<CVector> {
    let topo = scenario.topology()?;
    let costs = scenario.costs()?;
    let (dmat, dvec) = scenario.build_constraints()?;
    let m = topo.total_dim();
    let q = dvec.len();
    let mut kkt = CMatrix::zeros(m + q, m + q);
    let mut off = 0usize;
    for c in &costs {
        let dk = c.dim();
        kkt.view_mut((off, off), (dk, dk)).copy_from(c.curvature());
        off += dk;
    }
    kkt.view_mut((0, m), (m, q)).copy_from(&dmat);
    kkt.view_mut((m, 0), (q, m)).copy_from(&dmat.adjoint());
    let mut rhs = CVector::zeros(m + q);
    rhs.rows_mut(m, q).copy_from(&dvec);
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Curvature("singular KKT system".into()))?;
    Ok(sol.rows(0, m).into_owned())
}

/// Shared-snapshot stochastic gradients for the ULA scenario.
///
/// All agents observe the same snapshot at iteration `i`; draws are pure
/// functions of `(seed, run, iteration)`.
#[derive(Debug, Clone)]
pub struct UlaStream {
    steering: Vec<CVector>,
    amplitudes: Vec<f64>,
    noise_amp: f64,
    scales: Vec<f64>,
    members: Vec<Vec<usize>>,
    seed: u64,
}

/// Agent tag for the shared snapshot draws (outside the agent index range).
const SNAPSHOT_TAG: u64 = u64::MAX;

impl UlaStream {
    /// The array snapshot `x_i = Σ_n a(θ_n) s_n(i) + v_i`.
    pub fn snapshot(&self, run: u64, iteration: u64) -> CVector {
        let n = self.steering[0].len();
        let mut seq = DrawSeq::for_cell(self.seed, run, SNAPSHOT_TAG, iteration);
        let mut x = CVector::zeros(n);
        for (a, &amp) in self.steering.iter().zip(self.amplitudes.iter()) {
            let s = seq.next_complex_gaussian() * cr(amp);
            x.axpy(s, a, cr(1.0));
        }
        for i in 0..n {
            x[i] += seq.next_complex_gaussian() * cr(self.noise_amp);
        }
        x
    }

    /// Agent `k`'s regressor: scaled neighborhood entries of the snapshot.
    pub fn regressor(&self, run: u64, iteration: u64, agent: usize) -> CVector {
        let x = self.snapshot(run, iteration);
        let members = &self.members[agent];
        CVector::from_fn(members.len(), |i, _| x[members[i]] * cr(self.scales[members[i]]))
    }

    /// Instantaneous output-power gradient `u (u* w)`.
    pub fn gradient(&self, run: u64, iteration: u64, agent: usize, w: &CVector) -> CVector {
        let u = self.regressor(run, iteration, agent);
        let pred = u.dotc(w);
        u * pred
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frob;
    use crate::subspace::Subspace;
    use crate::synth;
    use crate::topology::{connection_matrix, is_connected};

    #[test]
    fn steering_at_broadside_is_all_ones() {
        let a = steering_vector(0.0, 5, 0.5);
        for i in 0..5 {
            assert!((a[i] - cr(1.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn steering_at_thirty_degrees_cycles_quarter_turns() {
        let a = steering_vector(30.0, 6, 0.5);
        let j = C64::new(0.0, 1.0);
        let expected = [cr(1.0), -j, cr(-1.0), j, cr(1.0), -j];
        for (got, want) in a.iter().zip(expected.iter()) {
            assert!((got - want).norm() < 1e-12, "{a:?}");
        }
        // Unit modulus and ‖a‖² = N in general.
        let b = steering_vector(60.0, 14, 0.5);
        for z in b.iter() {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
        assert!((b.norm_squared() - 14.0).abs() < 1e-9);
        let tau = core::f64::consts::TAU * 0.5 * libm::sin(60.0_f64.to_radians());
        for (m, z) in b.iter().enumerate() {
            let want = C64::new(libm::cos(-(m as f64) * tau), libm::sin(-(m as f64) * tau));
            assert!((z - want).norm() < 1e-12);
        }
    }

    #[test]
    fn ula_topology_matches_band_structure() {
        let t = ula_topology(14, 4).unwrap();
        assert_eq!(t.block_size(0), 5); // agents 1..5 in 1-based terms
        assert_eq!(t.block_size(6), 9); // middle agent sees 9 antennas
        assert_eq!(t.neighborhood(0).iter().copied().collect::<Vec<_>>(), alloc::vec![0, 1, 2, 3, 4]);
        assert_eq!(
            t.neighborhood(6).iter().copied().collect::<Vec<_>>(),
            (2..=10).collect::<Vec<_>>()
        );
        assert!(is_connected(&t));
        // Banded connection matrix with bandwidth ν.
        let e = connection_matrix(&t);
        for k in 0..14 {
            for l in 0..14 {
                let expected = if (k as isize - l as isize).unsigned_abs() <= 4 { 1.0 } else { 0.0 };
                assert_eq!(e[(k, l)], expected);
            }
        }
    }

    #[test]
    fn full_band_is_fully_connected() {
        let t = ula_topology(6, 5).unwrap();
        for k in 0..6 {
            assert_eq!(t.block_size(k), 6);
        }
    }

    #[test]
    fn covariance_is_pd_with_noise_floor() {
        let sc = UlaScenario::default();
        let r = sc.received_covariance();
        let (vals, _) = linalg::hermitian_eigen(&r);
        assert!(vals[0] >= sc.noise_var - 1e-9);
    }

    #[test]
    fn partial_covariance_full_band_recovers_rx() {
        let sc = UlaScenario { n_antennas: 6, nu: 5, ..Default::default() };
        let e = connection_matrix(&sc.topology().unwrap());
        let r_x = sc.received_covariance();
        let f_rx = partial_covariance(&e, &r_x).unwrap();
        assert!(frob(&(&f_rx - &r_x)) < 1e-10);
    }

    #[test]
    fn partial_covariance_two_element_full() {
        let e = DMatrix::from_element(2, 2, 1.0);
        let r_x = CMatrix::identity(2, 2);
        let f_rx = partial_covariance(&e, &r_x).unwrap();
        assert!(frob(&(f_rx - CMatrix::identity(2, 2))) < 1e-12);
    }

    #[test]
    fn aggregate_cost_identity_at_consensus() {
        let sc = UlaScenario { n_antennas: 8, nu: 2, ..Default::default() };
        let topo = sc.topology().unwrap();
        let costs = sc.costs().unwrap();
        let h = synth::random_vector(5, 8);
        // Replicate h into the consensus-feasible stacked vector.
        let mut w = CVector::zeros(topo.total_dim());
        for k in 0..8 {
            let start = topo.block_range(k).start;
            for (idx, &m) in topo.neighborhood(k).iter().enumerate() {
                w[start + idx] = h[m];
            }
        }
        let lhs: f64 = (0..8)
            .map(|k| {
                let wk = w.rows(topo.block_range(k).start, topo.block_size(k)).into_owned();
                costs[k].risk(&wk)
            })
            .sum();
        let f_rx = partial_covariance(&connection_matrix(&topo), &sc.received_covariance()).unwrap();
        let rhs = (h.adjoint() * f_rx * &h)[(0, 0)].re;
        assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn regressor_covariance_matches_scaled_subblock() {
        let sc = UlaScenario { n_antennas: 6, nu: 2, ..Default::default() };
        let stream = sc.stream(99).unwrap();
        let k = 2usize;
        let cost = sc.agent_cost(k).unwrap();
        let dim = cost.dim();
        let trials = 60_000usize;
        let mut acc = CMatrix::zeros(dim, dim);
        for i in 0..trials {
            let u = stream.regressor(0, i as u64, k);
            acc += &u * u.adjoint();
        }
        acc /= cr(trials as f64);
        let rel = frob(&(&acc - cost.curvature())) / frob(cost.curvature());
        assert!(rel <= 0.02, "relative covariance error {rel}");
    }

    #[test]
    fn overlapping_agents_share_snapshot_entries() {
        let sc = UlaScenario { n_antennas: 6, nu: 2, ..Default::default() };
        let stream = sc.stream(7).unwrap();
        let topo = sc.topology().unwrap();
        let u1 = stream.regressor(0, 11, 1);
        let u2 = stream.regressor(0, 11, 2);
        let m1: Vec<usize> = topo.neighborhood(1).iter().copied().collect();
        let m2: Vec<usize> = topo.neighborhood(2).iter().copied().collect();
        for (i1, &m) in m1.iter().enumerate() {
            if let Some(i2) = m2.iter().position(|&x| x == m) {
                assert_eq!(u1[i1], u2[i2]);
            }
        }
    }

    #[test]
    fn zero_sources_zero_noise_gives_zero_regressor() {
        let sc = UlaScenario {
            n_antennas: 4,
            nu: 1,
            powers: alloc::vec![0.0; 3],
            noise_var: 0.0,
            ..Default::default()
        };
        // validate() rejects zero powers, so build the stream directly.
        let topo = sc.topology().unwrap();
        let stream = UlaStream {
            steering: sc.doas_deg.iter().map(|&t| steering_vector(t, 4, 0.5)).collect(),
            amplitudes: alloc::vec![0.0; 3],
            noise_amp: 0.0,
            scales: (0..4).map(|m| 1.0 / libm::sqrt(topo.neighborhood(m).len() as f64)).collect(),
            members: (0..4).map(|k| topo.neighborhood(k).iter().copied().collect()).collect(),
            seed: 1,
        };
        assert!(stream.regressor(0, 0, 1).norm() == 0.0);
    }

    #[test]
    fn lcmv_identity_covariance_special_cases() {
        // Minimum-norm solution under identity covariance.
        let d = synth::random_matrix(21, 6, 2);
        let b = synth::random_vector(22, 2);
        let h = lcmv_optimum(&CMatrix::identity(6, 6), &d, &b).unwrap();
        let direct = {
            let gram = d.adjoint() * &d;
            let y = gram.lu().solve(&b).unwrap();
            &d * y
        };
        assert!((&h - direct).norm() < 1e-10);
        // Single steering constraint: h = a/N.
        let a0 = steering_vector(30.0, 8, 0.5);
        let d1 = CMatrix::from_columns(std::slice::from_ref(&a0));
        let b1 = CVector::from_vec(alloc::vec![cr(1.0)]);
        let h1 = lcmv_optimum(&CMatrix::identity(8, 8), &d1, &b1).unwrap();
        assert!((h1 - &a0 / cr(8.0)).norm() < 1e-12);
    }

    #[test]
    fn lcmv_satisfies_constraints_and_stationarity() {
        let sc = UlaScenario::default();
        let r_x = sc.received_covariance();
        let d = sc.constraint_matrix();
        let b = CVector::from_vec(sc.constraint_gains.clone());
        let h = lcmv_optimum(&r_x, &d, &b).unwrap();
        assert!((d.adjoint() * &h - &b).norm() < 1e-10);
        // Gradient R_x h must lie in the span of D (KKT stationarity).
        let grad = &r_x * &h;
        let gram = d.adjoint() * &d;
        let coeff = gram.lu().solve(&(d.adjoint() * &grad)).unwrap();
        let residual = (&grad - &d * coeff).norm();
        assert!(residual < 1e-9, "stationarity residual {residual}");
    }

    #[test]
    fn matched_filter_sinr_against_white_noise() {
        let sc = UlaScenario {
            powers: alloc::vec![1.0, 1e-30, 1e-30],
            ..Default::default()
        };
        let n = sc.n_antennas;
        let a0 = steering_vector(sc.doas_deg[0], n, sc.spacing_ratio);
        let h = &a0 / cr(a0.norm());
        let sinr = sc.output_sinr(&h);
        let expected = sc.powers[0] * n as f64 / sc.noise_var;
        assert!((sinr - expected).abs() / expected < 1e-9, "{sinr} vs {expected}");
        // Pointing at an interferer is far worse.
        let a1 = steering_vector(sc.doas_deg[1], n, sc.spacing_ratio);
        let sc_real = UlaScenario::default();
        assert!(sc_real.output_sinr(&(&a1 / cr(a1.norm()))) < sc_real.output_sinr(&h));
        // Zero beamformer reports the sentinel.
        assert_eq!(sc_real.output_sinr(&CVector::zeros(n)), f64::NEG_INFINITY);
    }

    #[test]
    fn constraint_stack_has_expected_feasible_dimension() {
        let sc = UlaScenario::default();
        let topo = sc.topology().unwrap();
        let (dmat, _) = sc.build_constraints().unwrap();
        let m = topo.total_dim();
        // Consensus rows collapse M − N copies; gain rows remove 3 more.
        assert_eq!(dmat.ncols(), (m - 14) + 3);
        let (sub, _) = sc.subspace_and_affine().unwrap();
        assert_eq!(sub.rank(), 14 - 3);
        assert_eq!(sub.dim(), m);
    }

    #[test]
    fn small_array_constraint_nullity_matches_svd() {
        let sc = UlaScenario {
            n_antennas: 3,
            nu: 1,
            constraint_doas_deg: alloc::vec![30.0],
            constraint_gains: alloc::vec![cr(1.0)],
            ..Default::default()
        };
        let (dmat, _) = sc.build_constraints().unwrap();
        let m = sc.topology().unwrap().total_dim();
        let sv = linalg::singular_values(&dmat);
        let rank = sv.iter().filter(|&&s| s > 1e-10 * sv[0]).count();
        assert_eq!(m - rank, 3 - 1); // global dim N minus gain rows
    }

    #[test]
    fn network_optimum_collapses_to_lcmv_when_fully_connected() {
        let sc = UlaScenario {
            n_antennas: 6,
            nu: 5,
            constraint_doas_deg: alloc::vec![30.0, 58.5],
            constraint_gains: alloc::vec![cr(1.0), cr(0.01)],
            ..Default::default()
        };
        let w = network_lcmv_optimum(&sc).unwrap();
        let h = sc.extract_beamformer(&w).unwrap();
        let href = lcmv_optimum(
            &sc.received_covariance(),
            &sc.constraint_matrix(),
            &CVector::from_vec(sc.constraint_gains.clone()),
        )
        .unwrap();
        assert!((h - href).norm() < 1e-8);
    }

    #[test]
    fn network_optimum_satisfies_constraints_and_stationarity() {
        let sc = UlaScenario::default();
        let w = network_lcmv_optimum(&sc).unwrap();
        let (dmat, dvec) = sc.build_constraints().unwrap();
        assert!((dmat.adjoint() * &w - dvec).norm() < 1e-9);
        // Projected-gradient stationarity on the feasible subspace.
        let (sub, _) = sc.subspace_and_affine().unwrap();
        let costs = sc.costs().unwrap();
        let topo = sc.topology().unwrap();
        let mut grad = CVector::zeros(topo.total_dim());
        for (k, c) in costs.iter().enumerate() {
            let r = topo.block_range(k);
            let wk = w.rows(r.start, r.len()).into_owned();
            grad.rows_mut(r.start, r.len()).copy_from(&c.gradient(&wk));
        }
        assert!(sub.project(&grad).norm() < 1e-8);
        // Homogeneous constraints give the zero solution.
        let sc0 = UlaScenario {
            constraint_gains: alloc::vec![cr(0.0); 3],
            ..Default::default()
        };
        let w0 = network_lcmv_optimum(&sc0).unwrap();
        assert!(w0.norm() < 1e-10);
    }

    #[test]
    fn subspace_layout_matches_topology() {
        let sc = UlaScenario { n_antennas: 5, nu: 2, ..Default::default() };
        let (sub, aff) = sc.subspace_and_affine().unwrap();
        let topo = sc.topology().unwrap();
        assert_eq!(sub.block_sizes(), topo.block_sizes());
        // The offset satisfies D* d_D = d.
        let (dmat, dvec) = sc.build_constraints().unwrap();
        assert!((dmat.adjoint() * aff.offset() - dvec).norm() < 1e-9);
        let _ = Subspace::new(sub.basis().clone(), sub.block_sizes().to_vec()).unwrap();
    }
}
