use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vtsdd::fem::{InterfacePencil, Material};
use vtsdd::interface::{fractional_norm_dense, SchurApprox};
use vtsdd::ip::{initial_state, jacobian, residual_unchecked, IpConfig, IpState, Problem};
use vtsdd::krylov::{fgmres, gmres, KrylovConfig};
use vtsdd::schur::{
    apply_p_inverse, compute_schur_blocks, dense_elastic_schur, dense_s11, dense_schur, factor_interior,
    BlockJacobian, InterfaceSolve, SchurBlocks, SubdomainFactorizations,
};
use vtsdd::sparse::CsrMatrix;

fn random_state(prob: &Problem, cfg: &IpConfig, seed: u64) -> IpState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = initial_state(prob, cfg).unwrap();
    for (d, u) in st.u.iter_mut().enumerate() {
        if !prob.asm.dirichlet[d] {
            *u += rng.random_range(-0.3..0.3);
        }
    }
    for r in st.rho.iter_mut() {
        *r = rng.random_range(0.05..0.95);
    }
    for v in st.phi.iter_mut().chain(st.psi.iter_mut()) {
        *v = rng.random_range(0.1..3.0);
    }
    for v in st.lam.iter_mut().chain(st.mu.iter_mut()) {
        *v = rng.random_range(-2.0..2.0);
    }
    st.lam0 = rng.random_range(-2.0..2.0);
    st.r = 0.3;
    st.s = 0.7;
    st
}

#[test]
fn jacobian_matches_central_differences() {
    let cfg = IpConfig::default();
    for (ny, p) in [(2, 1), (2, 2), (4, 1), (4, 2)] {
        let prob = Problem::new(ny, p, Material::default()).unwrap();
        for seed in 0..3 {
            let st = random_state(&prob, &cfg, seed);
            let j = jacobian(&prob, &cfg, &st).to_dense();
            let y = st.to_vec(&prob.layout);
            let n = y.len();
            let mut fd = DMatrix::zeros(n, n);
            let h = 1e-6;
            for c in 0..n {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[c] += h;
                ym[c] -= h;
                let rp = residual_unchecked(&prob, &cfg, &IpState::from_vec(&prob.layout, &yp, st.r, st.s));
                let rm = residual_unchecked(&prob, &cfg, &IpState::from_vec(&prob.layout, &ym, st.r, st.s));
                for r in 0..n {
                    fd[(r, c)] = -(rp.data[r] - rm.data[r]) / (2.0 * h);
                }
            }
            let err = (&j - &fd).amax() / fd.amax();
            assert!(err <= 1e-5, "ny={ny} p={p} seed={seed}: {err:e}");
        }
    }
}

struct Setup {
    prob: Problem,
    jac: BlockJacobian,
    fac: SubdomainFactorizations,
    blocks: SchurBlocks,
}

fn setup(ny: usize, p: usize, zero_u: bool) -> Setup {
    let prob = Problem::new(ny, p, Material::default()).unwrap();
    let cfg = IpConfig::default();
    let mut st = initial_state(&prob, &cfg).unwrap();
    if zero_u {
        st.u.iter_mut().for_each(|u| *u = 0.0);
    }
    let jac = BlockJacobian::new(&jacobian(&prob, &cfg, &st), &prob.ordering).unwrap();
    let fac = factor_interior(&jac).unwrap();
    let blocks = compute_schur_blocks(&fac, &jac);
    Setup { prob, jac, fac, blocks }
}

#[test]
fn schur_formula_matches_dense_elimination() {
    let s = setup(8, 2, false);
    let dense = dense_schur(&s.fac, &s.jac).unwrap();
    let full = s.jac.full.to_dense();
    let ni = s.jac.n_interior;
    let ng = s.jac.n_iface();
    let x = full.view((0, 0), (ni, ni)).into_owned().lu().solve(&full.view((0, ni), (ni, ng)).into_owned()).unwrap();
    let reference = full.view((ni, ni), (ng, ng)).into_owned() - full.view((ni, 0), (ng, ni)) * x;
    assert!((&dense - &reference).norm() <= 1e-10 * reference.norm());
    assert!((&dense - dense.transpose()).norm() <= 1e-12 * dense.norm());
    // the assembled blocks agree with the dense complement
    let ngam = s.blocks.n_gamma;
    let n = s.blocks.n_sub;
    assert!((dense.view((0, ngam), (ngam, n)) - &s.blocks.s12).amax() <= 1e-12 * dense.amax());
    assert!((dense.view((ngam, ngam), (n, n)) - &s.blocks.s22).amax() <= 1e-12 * dense.amax());
}

/// Without displacement the coupling vanishes and the (1,1) block is the
/// elasticity Schur complement.
#[test]
fn s11_reduces_to_elastic_schur_without_coupling() {
    let s = setup(8, 2, true);
    let s11 = dense_s11(&s.fac, &s.jac).unwrap();
    let rho = vec![0.5; s.prob.mesh.element_count()];
    let sgg = dense_elastic_schur(&s.prob.asm, &s.prob.part, &s.prob.ordering, &rho).unwrap();
    assert!((&s11 - &sgg).norm() <= 1e-10 * sgg.norm());
}

#[test]
fn s22_negative_definite_and_s11_positive_definite() {
    let s = setup(8, 2, false);
    assert!(SymmetricEigen::new(s.blocks.s22.clone()).eigenvalues.max() < 0.0);
    let s11 = dense_s11(&s.fac, &s.jac).unwrap();
    assert!(((&s11 + s11.transpose()) * 0.5).cholesky().is_some());
}

#[test]
fn exact_schur_preconditioner_converges_in_two_steps() {
    let s = setup(8, 2, false);
    let approx = SchurApprox::dense(dense_schur(&s.fac, &s.jac).unwrap()).unwrap();
    let cfg = IpConfig::default();
    let st = initial_state(&s.prob, &cfg).unwrap();
    let r = residual_unchecked(&s.prob, &cfg, &st);
    let b = s.prob.ordering.permute(&r.data);
    let res = gmres(
        |x| s.jac.apply(x),
        |v| apply_p_inverse(&s.fac, &s.jac, &approx, v).unwrap(),
        &b,
        &KrylovConfig::default(),
    );
    assert!(res.converged);
    assert!(res.iterations <= 3, "{}", res.iterations);
}

#[test]
fn s0_inverse_contract() {
    let s = setup(8, 2, false);
    let rho = vec![0.5; s.prob.mesh.element_count()];
    let sgg = dense_elastic_schur(&s.prob.asm, &s.prob.part, &s.prob.ordering, &rho).unwrap();
    let s0 = SchurApprox::with_leading_block(&s.blocks, &sgg).unwrap();
    let m = s0.matrix().unwrap().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let v: Vec<f64> = (0..m.nrows()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let z = s0.apply_inverse(&v).unwrap();
    let back = &m * nalgebra::DVector::from_vec(z);
    let err = back.iter().zip(&v).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    assert!(err <= 1e-10, "{err:e}");
}

fn full_depth_matches_s1(pencil: &InterfacePencil, s: &Setup) {
    let k = pencil.n();
    let s2 = SchurApprox::s2(&s.blocks, pencil, 0.5, k).unwrap();
    let h = fractional_norm_dense(&pencil.l.to_dense(), &pencil.m.to_dense(), 0.5).unwrap();
    let s1 = SchurApprox::with_leading_block(&s.blocks, &h.block()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let v: Vec<f64> = (0..s.jac.n_iface()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = s1.apply_inverse(&v).unwrap();
        let b = s2.apply_inverse(&v).unwrap();
        let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let err = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale;
        assert!(err <= 1e-6, "{err:e}");
    }
}

#[test]
fn full_depth_lanczos_reproduces_s1_with_identity_mass() {
    let s = setup(8, 2, false);
    let real = InterfacePencil::new(&s.prob.part).unwrap();
    let n = real.n();
    let pencil = InterfacePencil {
        l: real.l.clone(),
        m: CsrMatrix::identity(n),
        shifted: false,
    };
    full_depth_matches_s1(&pencil, &s);
}

#[test]
fn full_depth_lanczos_reproduces_s1_with_interface_mass() {
    let s = setup(8, 2, false);
    let pencil = InterfacePencil::new(&s.prob.part).unwrap();
    full_depth_matches_s1(&pencil, &s);
}

#[test]
fn partial_lanczos_preconditioner_terminates() {
    let s = setup(16, 2, false);
    let pencil = InterfacePencil::new(&s.prob.part).unwrap();
    let k = vtsdd::interface::default_lanczos_k(s.prob.part.n_gamma());
    let s2 = SchurApprox::s2(&s.blocks, &pencil, 0.5, k).unwrap();
    let cfg = IpConfig::default();
    let st = initial_state(&s.prob, &cfg).unwrap();
    let b = s.prob.ordering.permute(&residual_unchecked(&s.prob, &cfg, &st).data);
    let res = fgmres(
        |x| s.jac.apply(x),
        |v| apply_p_inverse(&s.fac, &s.jac, &s2, v).unwrap(),
        &b,
        &KrylovConfig::default(),
    );
    assert!(res.converged);
    assert!(res.iterations <= s.jac.n_iface(), "{}", res.iterations);
}

#[test]
fn preconditioner_is_linear_for_fixed_interface_matrices() {
    let s = setup(8, 2, false);
    let pencil = InterfacePencil::new(&s.prob.part).unwrap();
    let rho = vec![0.5; s.prob.mesh.element_count()];
    let sgg = dense_elastic_schur(&s.prob.asm, &s.prob.part, &s.prob.ordering, &rho).unwrap();
    let approxes = [
        SchurApprox::with_leading_block(&s.blocks, &sgg).unwrap(),
        SchurApprox::s1(&s.blocks, &pencil, 0.5).unwrap(),
        SchurApprox::dense(dense_schur(&s.fac, &s.jac).unwrap()).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = s.jac.n();
    for ap in &approxes {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let comb: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
        let pv = apply_p_inverse(&s.fac, &s.jac, ap, &v).unwrap();
        let pw = apply_p_inverse(&s.fac, &s.jac, ap, &w).unwrap();
        let pc = apply_p_inverse(&s.fac, &s.jac, ap, &comb).unwrap();
        let scale = pc.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..n {
            assert!((pc[i] - (a * pv[i] + b * pw[i])).abs() <= 1e-12 * scale);
        }
    }
}

/// `P P^{-1} v = v` for the block upper-triangular preconditioner.
#[test]
fn preconditioner_inverts_block_triangular_matrix() {
    let s = setup(8, 2, false);
    let pencil = InterfacePencil::new(&s.prob.part).unwrap();
    let s1 = SchurApprox::s1(&s.blocks, &pencil, 0.5).unwrap();
    let st = s1.matrix().unwrap().clone();
    let full = s.jac.full.to_dense();
    let ni = s.jac.n_interior;
    let ng = s.jac.n_iface();
    let mut p = DMatrix::zeros(ni + ng, ni + ng);
    p.view_mut((0, 0), (ni + ng, ni)).copy_from(&full.view((0, 0), (ni + ng, ni)));
    p.view_mut((0, ni), (ni, ng)).copy_from(&full.view((0, ni), (ni, ng)));
    p.view_mut((ni, 0), (ng, ni)).fill(0.0);
    p.view_mut((ni, ni), (ng, ng)).copy_from(&st);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let v: Vec<f64> = (0..ni + ng).map(|_| rng.random_range(-1.0..1.0)).collect();
    let z = apply_p_inverse(&s.fac, &s.jac, &s1, &v).unwrap();
    let back = &p * nalgebra::DVector::from_vec(z);
    let err = back.iter().zip(&v).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(err <= 1e-9, "{err:e}");
}
