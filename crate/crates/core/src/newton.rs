//! Interior-point driver: one preconditioned Newton-Krylov step per barrier
//! level, then fixed-barrier steps until the residual target is met.

use std::cell::RefCell;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fem::InterfacePencil;
use crate::interface::{default_lanczos_k, default_theta, fractional_norm_dense, PrecondKind, SchurApprox};
use crate::ip::{initial_state, jacobian, residual, step_length, IpConfig, IpState, Problem};
use crate::krylov::{fgmres, gmres, KrylovConfig};
use crate::schur::{
    apply_p_inverse, compute_schur_blocks, dense_elastic_schur, dense_s11, dense_schur, factor_interior,
    BlockJacobian, SchurBlocks, SubdomainFactorizations,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub ip: IpConfig,
    pub precond: PrecondKind,
    /// Fractional index; defaults by subdomain count.
    pub theta: Option<f64>,
    /// Lanczos depth per component; defaults to `ceil(sqrt(n_gamma))`.
    pub lanczos_k: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            ip: IpConfig::default(),
            precond: PrecondKind::S2,
            theta: None,
            lanczos_k: None,
        }
    }
}

impl SolverConfig {
    pub fn theta_for(&self, n_sub: usize) -> f64 {
        self.theta.unwrap_or_else(|| default_theta(n_sub))
    }

    pub fn lanczos_k_for(&self, n_gamma: usize) -> usize {
        self.lanczos_k.unwrap_or_else(|| default_lanczos_k(n_gamma))
    }
}

/// One Newton step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based.
    pub newton_step: usize,
    pub gmres_iters: usize,
    /// Barrier parameters used by this step.
    pub r: f64,
    pub s: f64,
    /// `||R||_inf` at the new iterate and the updated barrier parameters.
    pub residual_norm: f64,
    pub compliance: f64,
    pub step_length: f64,
    pub krylov_residual: f64,
    /// Largest eigenvalue of `S22`.
    pub s22_max_eig: f64,
    /// `||S11 - S_GG|| / ||S_GG||`, only with diagnostics enabled.
    pub e_ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct IpResult {
    pub state: IpState,
    pub history: Vec<StepRecord>,
    pub initial_compliance: f64,
    pub final_compliance: f64,
    pub final_residual: f64,
}

impl IpResult {
    pub fn newton_count(&self) -> usize {
        self.history.len()
    }

    pub fn total_gmres(&self) -> usize {
        self.history.iter().map(|h| h.gmres_iters).sum()
    }
}

/// Everything assembled for one Newton system, exposed to observers.
pub struct StepContext<'a> {
    pub newton_step: usize,
    pub state: &'a IpState,
    pub jacobian: &'a BlockJacobian,
    pub factors: &'a SubdomainFactorizations,
    pub blocks: &'a SchurBlocks,
}

/// Builds the interface preconditioner for one Newton system.
pub fn build_approx(
    prob: &Problem,
    config: &SolverConfig,
    pencil: Option<&InterfacePencil>,
    h_block: Option<&DMatrix<f64>>,
    state: &IpState,
    jac: &BlockJacobian,
    fac: &SubdomainFactorizations,
    blocks: &SchurBlocks,
) -> Result<SchurApprox> {
    match config.precond {
        PrecondKind::S0 => {
            let sgg = dense_elastic_schur(&prob.asm, &prob.part, &prob.ordering, &state.rho)?;
            SchurApprox::with_leading_block(blocks, &sgg)
        }
        PrecondKind::S1 => match h_block {
            Some(h) => SchurApprox::with_leading_block(blocks, h),
            None => {
                let p = pencil.ok_or_else(|| Error::InvalidArgument("S1 needs the interface pencil".into()))?;
                SchurApprox::s1(blocks, p, config.theta_for(prob.n_sub()))
            }
        },
        PrecondKind::S2 => {
            let p = pencil.ok_or_else(|| Error::InvalidArgument("S2 needs the interface pencil".into()))?;
            let k = config.lanczos_k_for(prob.part.n_gamma());
            SchurApprox::s2(blocks, p, config.theta_for(prob.n_sub()), k.min(p.n()))
        }
        PrecondKind::Exact => SchurApprox::dense(dense_schur(fac, jac)?),
    }
}

pub fn ip_solve(prob: &Problem, config: &SolverConfig) -> Result<IpResult> {
    ip_solve_observed(prob, config, |_| Ok(()))
}

/// As [`ip_solve`], calling `observe` on every assembled Newton system
/// before it is solved.
pub fn ip_solve_observed(
    prob: &Problem,
    config: &SolverConfig,
    mut observe: impl FnMut(&StepContext<'_>) -> Result<()>,
) -> Result<IpResult> {
    let ip = &config.ip;
    ip.validate()?;
    let mut state = initial_state(prob, ip)?;
    let initial_compliance = state.compliance(prob);

    let pencil = match config.precond {
        PrecondKind::S1 | PrecondKind::S2 => Some(InterfacePencil::new(&prob.part)?),
        _ => None,
    };
    let h_block = match (&pencil, config.precond) {
        (Some(p), PrecondKind::S1) => Some(
            fractional_norm_dense(&p.l.to_dense(), &p.m.to_dense(), config.theta_for(prob.n_sub()))?.block(),
        ),
        _ => None,
    };
    let kcfg = KrylovConfig {
        tol: ip.krylov_tol,
        max_iter: Some(ip.max_krylov),
        flexible: config.precond.is_flexible(),
    };

    let mut history = Vec::new();
    let mut res = residual(prob, ip, &state)?;
    loop {
        if state.r < ip.barrier_floor && res.norm_inf() <= ip.terminal_tol {
            break;
        }
        if history.len() >= ip.max_outer {
            return Err(Error::OuterCapExceeded(ip.max_outer));
        }
        let step = history.len() + 1;
        let jn = jacobian(prob, ip, &state);
        let jac = BlockJacobian::new(&jn, &prob.ordering)?;
        let fac = factor_interior(&jac)?;
        let blocks = compute_schur_blocks(&fac, &jac);
        observe(&StepContext {
            newton_step: step,
            state: &state,
            jacobian: &jac,
            factors: &fac,
            blocks: &blocks,
        })?;
        let s22_max_eig = max_sym_eig(&blocks.s22);
        let e_ratio = if ip.diagnostics {
            let s11 = dense_s11(&fac, &jac)?;
            let sgg = dense_elastic_schur(&prob.asm, &prob.part, &prob.ordering, &state.rho)?;
            Some((s11 - &sgg).norm() / sgg.norm())
        } else {
            None
        };
        let approx = build_approx(prob, config, pencil.as_ref(), h_block.as_ref(), &state, &jac, &fac, &blocks)?;

        let b = prob.ordering.permute(&res.data);
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let apply_a = |x: &[f64]| jac.apply(x);
        let apply_p = |v: &[f64]| match apply_p_inverse(&fac, &jac, &approx, v) {
            Ok(z) => z,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                vec![0.0; v.len()]
            }
        };
        let kres = if kcfg.flexible {
            fgmres(apply_a, apply_p, &b, &kcfg)
        } else {
            gmres(apply_a, apply_p, &b, &kcfg)
        };
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        if !kres.converged {
            return Err(Error::KrylovStagnation {
                iterations: kres.iterations,
                relative_residual: kres.relative_residual,
            });
        }

        let dy = prob.ordering.unpermute(&kres.x);
        let delta = IpState::from_vec(&prob.layout, &dy, 0.0, 0.0);
        let alpha = step_length(&state, &delta, ip);
        let (r_used, s_used) = (state.r, state.s);
        state.axpy(alpha, &delta);
        if state.r >= ip.barrier_floor {
            state.r /= ip.barrier_divisor;
            state.s /= ip.barrier_divisor;
        }
        res = residual(prob, ip, &state)?;
        history.push(StepRecord {
            newton_step: step,
            gmres_iters: kres.iterations,
            r: r_used,
            s: s_used,
            residual_norm: res.norm_inf(),
            compliance: state.compliance(prob),
            step_length: alpha,
            krylov_residual: kres.relative_residual,
            s22_max_eig,
            e_ratio,
        });
    }
    let final_compliance = state.compliance(prob);
    Ok(IpResult {
        state,
        history,
        initial_compliance,
        final_compliance,
        final_residual: res.norm_inf(),
    })
}

fn max_sym_eig(a: &DMatrix<f64>) -> f64 {
    let mut s = a.clone();
    let t = s.transpose();
    s += t;
    s *= 0.5;
    SymmetricEigen::new(s).eigenvalues.max()
}
