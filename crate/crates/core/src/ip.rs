//! Barrier formulation of the subdomain-decomposed VTS problem: state,
//! residual, Jacobian, fraction-to-boundary step and initial point.
//!
//! The unknown is `y = (u, lambda_1..N, rho, phi, psi, mu_1..N, lambda_0)`
//! and the residual is signed so that the Jacobian `J` satisfies
//! `J = -dR/dy` exactly; a Newton step solves `J dy = R`.

use crate::error::{Error, Result};
use crate::fem::{assemble_load, LoadVector, Material, StiffnessAssembly};
use crate::mesh::{DofOrdering, GridMesh, Layout, Partition};
use crate::sparse::{CsrMatrix, SparseLu};

#[derive(Debug, Clone, PartialEq)]
pub struct IpConfig {
    pub rho_low: f64,
    pub rho_up: f64,
    /// Fraction of the domain area available as mass.
    pub volume_fraction: f64,
    pub barrier_divisor: f64,
    pub barrier_floor: f64,
    pub krylov_tol: f64,
    pub max_krylov: usize,
    pub step_safety: f64,
    pub max_outer: usize,
    /// `||R||_inf` target once the barrier parameters are below the floor.
    pub terminal_tol: f64,
    pub material: Material,
    /// Computes the dense `||S11 - S_GG|| / ||S_GG||` ratio at every step.
    pub diagnostics: bool,
}

impl Default for IpConfig {
    fn default() -> Self {
        Self {
            rho_low: 1e-2,
            rho_up: 1.0,
            volume_fraction: 0.5,
            barrier_divisor: 4.0,
            barrier_floor: 1e-6,
            krylov_tol: 1e-6,
            max_krylov: 1000,
            step_safety: 0.9,
            max_outer: 60,
            terminal_tol: 1e-8,
            material: Material::default(),
            diagnostics: false,
        }
    }
}

impl IpConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.rho_low
            && self.rho_low < self.volume_fraction
            && self.volume_fraction < self.rho_up
            && self.barrier_divisor > 1.0
            && self.barrier_floor > 0.0
            && self.krylov_tol > 0.0
            && self.krylov_tol < 1.0
            && self.step_safety > 0.0
            && self.step_safety < 1.0
            && self.terminal_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "inconsistent interior-point configuration: {self:?}"
            )))
        }
    }
}

/// Mesh, partition, FEM data and unknown ordering of one problem instance.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mesh: GridMesh,
    pub part: Partition,
    pub asm: StiffnessAssembly,
    pub load: LoadVector,
    pub ordering: DofOrdering,
    pub layout: Layout,
}

impl Problem {
    pub fn new(ny: usize, p: usize, material: Material) -> Result<Self> {
        let mesh = GridMesh::new(ny)?;
        let part = Partition::new(&mesh, p)?;
        let asm = StiffnessAssembly::new(&mesh, material)?;
        let load = assemble_load(&mesh);
        let ordering = DofOrdering::new(&part);
        let layout = ordering.layout;
        Ok(Self {
            mesh,
            part,
            asm,
            load,
            ordering,
            layout,
        })
    }

    pub fn n_sub(&self) -> usize {
        self.part.n_sub()
    }

    pub fn total_mass(&self, config: &IpConfig) -> f64 {
        config.volume_fraction * self.load.q.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpState {
    pub u: Vec<f64>,
    pub lam: Vec<f64>,
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub mu: Vec<f64>,
    pub lam0: f64,
    pub r: f64,
    pub s: f64,
}

impl IpState {
    /// Packs the unknowns in natural ordering.
    pub fn to_vec(&self, layout: &Layout) -> Vec<f64> {
        let mut y = Vec::with_capacity(layout.len());
        y.extend_from_slice(&self.u);
        y.extend_from_slice(&self.lam);
        y.extend_from_slice(&self.rho);
        y.extend_from_slice(&self.phi);
        y.extend_from_slice(&self.psi);
        y.extend_from_slice(&self.mu);
        y.push(self.lam0);
        y
    }

    pub fn from_vec(layout: &Layout, y: &[f64], r: f64, s: f64) -> Self {
        assert_eq!(y.len(), layout.len());
        let (n, nn, m) = (layout.n_u, layout.n_sub, layout.m);
        Self {
            u: y[..n].to_vec(),
            lam: y[layout.lam(0)..layout.lam(0) + nn].to_vec(),
            rho: y[layout.rho(0)..layout.rho(0) + m].to_vec(),
            phi: y[layout.phi(0)..layout.phi(0) + m].to_vec(),
            psi: y[layout.psi(0)..layout.psi(0) + m].to_vec(),
            mu: y[layout.mu(0)..layout.mu(0) + nn].to_vec(),
            lam0: y[layout.lam0()],
            r,
            s,
        }
    }

    /// `self += alpha * delta` on the unknowns; barrier parameters untouched.
    pub fn axpy(&mut self, alpha: f64, delta: &IpState) {
        let upd = |a: &mut Vec<f64>, b: &[f64]| {
            for (x, d) in a.iter_mut().zip(b) {
                *x += alpha * d;
            }
        };
        upd(&mut self.u, &delta.u);
        upd(&mut self.lam, &delta.lam);
        upd(&mut self.rho, &delta.rho);
        upd(&mut self.phi, &delta.phi);
        upd(&mut self.psi, &delta.psi);
        upd(&mut self.mu, &delta.mu);
        self.lam0 += alpha * delta.lam0;
    }

    pub fn check_interior(&self, config: &IpConfig) -> Result<()> {
        if let Some(i) = self
            .rho
            .iter()
            .position(|&r| !(r > config.rho_low && r < config.rho_up))
        {
            return Err(Error::NotInterior(format!("rho[{i}] = {}", self.rho[i])));
        }
        if let Some(i) = self.phi.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NotInterior(format!("phi[{i}] = {}", self.phi[i])));
        }
        if let Some(i) = self.psi.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NotInterior(format!("psi[{i}] = {}", self.psi[i])));
        }
        if !(self.r > 0.0 && self.s > 0.0) {
            return Err(Error::NotInterior(format!(
                "barrier parameters r = {}, s = {}",
                self.r, self.s
            )));
        }
        Ok(())
    }

    /// `1/2 u^T A(rho) u`.
    pub fn compliance(&self, prob: &Problem) -> f64 {
        let au = prob.asm.apply(&self.rho, &self.u);
        0.5 * dot(&self.u, &au)
    }

    /// `q^T rho`.
    pub fn mass(&self, prob: &Problem) -> f64 {
        dot(&prob.load.q, &self.rho)
    }
}

/// Residual in natural ordering with typed block views.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    pub layout: Layout,
    pub data: Vec<f64>,
}

impl ResidualVector {
    pub fn r_u(&self) -> &[f64] {
        &self.data[..self.layout.n_u]
    }
    pub fn r_lam(&self) -> &[f64] {
        &self.data[self.layout.lam(0)..self.layout.rho(0)]
    }
    pub fn r_rho(&self) -> &[f64] {
        &self.data[self.layout.rho(0)..self.layout.phi(0)]
    }
    pub fn r_phi(&self) -> &[f64] {
        &self.data[self.layout.phi(0)..self.layout.psi(0)]
    }
    pub fn r_psi(&self) -> &[f64] {
        &self.data[self.layout.psi(0)..self.layout.mu(0)]
    }
    pub fn r_mu(&self) -> &[f64] {
        &self.data[self.layout.mu(0)..self.layout.lam0()]
    }
    pub fn r_mass(&self) -> f64 {
        self.data[self.layout.lam0()]
    }
    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Barrier KKT residual at `state`.
pub fn residual(prob: &Problem, config: &IpConfig, state: &IpState) -> Result<ResidualVector> {
    state.check_interior(config)?;
    Ok(residual_unchecked(prob, config, state))
}

/// Residual without the strict-interior check; used by finite-difference
/// probes that may step slightly outside.
pub fn residual_unchecked(prob: &Problem, config: &IpConfig, state: &IpState) -> ResidualVector {
    let lay = prob.layout;
    let q = &prob.load.q;
    let sub = &prob.part.element_subdomain;
    let mut out = vec![0.0; lay.len()];

    let au = prob.asm.apply(&state.rho, &state.u);
    for (d, (f, a)) in prob.load.f.iter().zip(&au).enumerate() {
        out[lay.u(d)] = f - a;
    }
    for (k, tau) in prob.part.tau.iter().enumerate() {
        let qk: f64 = tau.iter().map(|&e| q[e] * state.rho[e]).sum();
        out[lay.lam(k)] = state.mu[k] - qk;
        out[lay.mu(k)] = state.lam[k] - state.lam0;
    }
    for e in 0..lay.m {
        let energy = prob.asm.element_energy(e, &state.u);
        out[lay.rho(e)] =
            -0.5 * energy - state.lam[sub[e]] * q[e] - state.phi[e] + state.psi[e];
        out[lay.phi(e)] = state.r - state.phi[e] * (state.rho[e] - config.rho_low);
        out[lay.psi(e)] = state.s - state.psi[e] * (config.rho_up - state.rho[e]);
    }
    out[lay.lam0()] = prob.total_mass(config) - state.mu.iter().sum::<f64>();
    ResidualVector {
        layout: lay,
        data: out,
    }
}

/// Newton Jacobian in natural ordering.
pub fn jacobian(prob: &Problem, config: &IpConfig, state: &IpState) -> CsrMatrix {
    let lay = prob.layout;
    let q = &prob.load.q;
    let sub = &prob.part.element_subdomain;
    let n = lay.len();
    let mut trip = Vec::with_capacity(64 * lay.m + 16 * lay.m + 8 * lay.m + lay.n_u);

    prob.asm
        .push_triplets(&state.rho, |i, j, v| trip.push((lay.u(i), lay.u(j), v)));
    for (d, &clamped) in prob.asm.dirichlet.iter().enumerate() {
        if clamped {
            trip.push((lay.u(d), lay.u(d), 1.0));
        }
    }
    let b = prob.asm.coupling(&state.u);
    for (d, e, v) in b.triplets() {
        trip.push((lay.u(d), lay.rho(e), v));
        trip.push((lay.rho(e), lay.u(d), v));
    }
    for e in 0..lay.m {
        let k = sub[e];
        trip.push((lay.lam(k), lay.rho(e), q[e]));
        trip.push((lay.rho(e), lay.lam(k), q[e]));
        trip.push((lay.rho(e), lay.phi(e), 1.0));
        trip.push((lay.rho(e), lay.psi(e), -1.0));
        trip.push((lay.phi(e), lay.rho(e), state.phi[e]));
        trip.push((lay.phi(e), lay.phi(e), state.rho[e] - config.rho_low));
        trip.push((lay.psi(e), lay.rho(e), -state.psi[e]));
        trip.push((lay.psi(e), lay.psi(e), config.rho_up - state.rho[e]));
    }
    for k in 0..lay.n_sub {
        trip.push((lay.lam(k), lay.mu(k), -1.0));
        trip.push((lay.mu(k), lay.lam(k), -1.0));
        trip.push((lay.mu(k), lay.lam0(), 1.0));
        trip.push((lay.lam0(), lay.mu(k), 1.0));
    }
    CsrMatrix::from_triplets(n, n, trip)
}

fn fraction_to_boundary(safety: f64, values: &[f64], deltas: &[f64], bound: impl Fn(usize) -> f64) -> f64 {
    values
        .iter()
        .zip(deltas)
        .enumerate()
        .filter(|(_, (_, &d))| d < 0.0)
        .map(|(i, (&v, &d))| safety * (bound(i) - v) / d)
        .fold(f64::INFINITY, f64::min)
}

/// Fraction-to-boundary step length for the density bounds, extended to
/// the positivity of `phi` and `psi`, capped at one.
pub fn step_length(state: &IpState, delta: &IpState, config: &IpConfig) -> f64 {
    let safety = config.step_safety;
    let alpha_low = fraction_to_boundary(safety, &state.rho, &delta.rho, |_| config.rho_low);
    // upper bound: rho + a d <= up for d > 0, i.e. (-rho) + a (-d) >= -up
    let neg_rho: Vec<f64> = state.rho.iter().map(|v| -v).collect();
    let neg_drho: Vec<f64> = delta.rho.iter().map(|v| -v).collect();
    let alpha_up = fraction_to_boundary(safety, &neg_rho, &neg_drho, |_| -config.rho_up);
    let alpha_phi = fraction_to_boundary(safety, &state.phi, &delta.phi, |_| 0.0);
    let alpha_psi = fraction_to_boundary(safety, &state.psi, &delta.psi, |_| 0.0);
    alpha_low
        .min(alpha_up)
        .min(alpha_phi)
        .min(alpha_psi)
        .min(1.0)
}

/// Uniform density at the target volume fraction, equilibrium
/// displacement, centred auxiliary variables and `r = s = 1`.
pub fn initial_state(prob: &Problem, config: &IpConfig) -> Result<IpState> {
    config.validate()?;
    let m = prob.mesh.element_count();
    let rho = vec![config.volume_fraction; m];
    let a = prob.asm.assemble(&rho)?;
    let lu = SparseLu::new(&a)?;
    let u = lu.solve(&prob.load.f);
    let (r, s) = (1.0, 1.0);
    let phi = rho.iter().map(|x| r / (x - config.rho_low)).collect();
    let psi = rho.iter().map(|x| s / (config.rho_up - x)).collect();
    let q = &prob.load.q;
    let mu = prob
        .part
        .tau
        .iter()
        .map(|tau| tau.iter().map(|&e| q[e] * rho[e]).sum())
        .collect();
    Ok(IpState {
        u,
        lam: vec![0.0; prob.n_sub()],
        rho,
        phi,
        psi,
        mu,
        lam0: 0.0,
        r,
        s,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(ny: usize, p: usize) -> (Problem, IpConfig, IpState) {
        let prob = Problem::new(ny, p, Material::default()).unwrap();
        let cfg = IpConfig::default();
        let st = initial_state(&prob, &cfg).unwrap();
        (prob, cfg, st)
    }

    #[test]
    fn initial_state_residual_blocks_vanish() {
        let (prob, cfg, st) = small(4, 2);
        let res = residual(&prob, &cfg, &st).unwrap();
        let f_norm = prob.load.f.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ru = res.r_u().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(ru <= 1e-10 * f_norm);
        let tol = 1e-14;
        assert!(res.r_lam().iter().all(|v| v.abs() < tol));
        assert!(res.r_phi().iter().all(|v| v.abs() < tol));
        assert!(res.r_psi().iter().all(|v| v.abs() < tol));
        assert!(res.r_mu().iter().all(|v| v.abs() < tol));
        assert!(res.r_mass().abs() < tol);
        let total: f64 = st.mu.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn centred_phi_zeroes_complementarity() {
        let (prob, cfg, mut st) = small(2, 1);
        st.r = 0.3;
        st.phi = st.rho.iter().map(|x| 0.3 / (x - cfg.rho_low)).collect();
        let res = residual(&prob, &cfg, &st).unwrap();
        assert!(res.r_phi().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn residual_rejects_exterior_state() {
        let (prob, cfg, mut st) = small(2, 1);
        st.rho[0] = 1.5;
        assert!(matches!(residual(&prob, &cfg, &st), Err(Error::NotInterior(_))));
        let (prob, cfg, mut st) = small(2, 1);
        st.psi[2] = -1.0;
        assert!(residual(&prob, &cfg, &st).is_err());
    }

    #[test]
    fn state_vector_roundtrip() {
        let (prob, _, st) = small(4, 2);
        let y = st.to_vec(&prob.layout);
        assert_eq!(y.len(), prob.layout.len());
        assert_eq!(IpState::from_vec(&prob.layout, &y, st.r, st.s), st);
    }

    fn state(rho: Vec<f64>, drho: Vec<f64>) -> (IpState, IpState) {
        let m = rho.len();
        let mk = |rho: Vec<f64>, v: f64| IpState {
            u: vec![],
            lam: vec![],
            rho,
            phi: vec![v; m],
            psi: vec![v; m],
            mu: vec![],
            lam0: 0.0,
            r: 1.0,
            s: 1.0,
        };
        (mk(rho, 1.0), mk(drho, 0.0))
    }

    #[test]
    fn step_length_examples() {
        let cfg = IpConfig::default();
        let (s, d) = state(vec![0.5], vec![-0.7]);
        assert!((step_length(&s, &d, &cfg) - 0.63).abs() < 1e-15);
        let (s, d) = state(vec![0.5, 0.5], vec![0.0, 0.0]);
        assert_eq!(step_length(&s, &d, &cfg), 1.0);
        let (s, d) = state(vec![0.5, 0.5], vec![0.4, -0.4]);
        assert_eq!(step_length(&s, &d, &cfg), 1.0);
        let (s, mut d) = state(vec![0.5], vec![0.0]);
        d.phi = vec![-2.0];
        assert!((step_length(&s, &d, &cfg) - 0.45).abs() < 1e-15);
    }

    #[test]
    fn barrier_floor_reached_after_ten_reductions() {
        let cfg = IpConfig::default();
        let mut r = 1.0;
        let mut count = 0;
        while r >= cfg.barrier_floor {
            r /= cfg.barrier_divisor;
            count += 1;
        }
        assert_eq!(count, 10);
        assert!((r - 4f64.powi(-10)).abs() < 1e-20);
    }

    #[test]
    fn compliance_identity_at_equilibrium() {
        let (prob, _, st) = small(8, 2);
        let c = st.compliance(&prob);
        let fu = dot(&prob.load.f, &st.u);
        assert!((2.0 * c - fu).abs() <= 1e-10 * fu.abs());
    }
}
