use nalgebra::SMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vtsdd::fem::{assemble_load, element_stiffness, Material, StiffnessAssembly};
use vtsdd::mesh::GridMesh;

/// Q1 plane-stress stiffness on `[0, h]^2` integrated with a 3x3 Simpson
/// rule, which is exact for the quadratic integrands.
fn simpson_stiffness(e: f64, nu: f64, h: f64) -> SMatrix<f64, 8, 8> {
    let c = e / (1.0 - nu * nu);
    let d = SMatrix::<f64, 3, 3>::new(c, c * nu, 0.0, c * nu, c, 0.0, 0.0, 0.0, c * (1.0 - nu) / 2.0);
    let corners = [(0.0, 0.0), (h, 0.0), (h, h), (0.0, h)];
    let mut k = SMatrix::<f64, 8, 8>::zeros();
    let pts = [(0.0, 1.0), (0.5 * h, 4.0), (h, 1.0)];
    for &(x, wx) in &pts {
        for &(y, wy) in &pts {
            let w = wx * wy * (h / 6.0) * (h / 6.0);
            let mut b = SMatrix::<f64, 3, 8>::zeros();
            for (a, &(xa, ya)) in corners.iter().enumerate() {
                let sx = if xa == 0.0 { -1.0 } else { 1.0 };
                let sy = if ya == 0.0 { -1.0 } else { 1.0 };
                let fx = if xa == 0.0 { h - x } else { x };
                let fy = if ya == 0.0 { h - y } else { y };
                let dndx = sx * fy / (h * h);
                let dndy = sy * fx / (h * h);
                b[(0, 2 * a)] = dndx;
                b[(1, 2 * a + 1)] = dndy;
                b[(2, 2 * a)] = dndy;
                b[(2, 2 * a + 1)] = dndx;
            }
            k += b.transpose() * d * b * w;
        }
    }
    k
}

#[test]
fn element_stiffness_matches_simpson_oracle() {
    for &(e, nu, h) in &[(1.0, 0.3, 1.0 / 16.0), (2.5, 0.0, 0.5), (1.0, 0.45, 1.0)] {
        let k = element_stiffness(e, nu, h).unwrap().k;
        let o = simpson_stiffness(e, nu, h);
        assert!((k - o).amax() <= 1e-12 * o.amax(), "E={e} nu={nu} h={h}");
    }
}

#[test]
fn element_stiffness_rejects_bad_material() {
    assert!(element_stiffness(0.0, 0.3, 1.0).is_err());
    assert!(element_stiffness(1.0, 0.5, 1.0).is_err());
    assert!(element_stiffness(1.0, 0.3, -1.0).is_err());
}

#[test]
fn load_and_areas() {
    let mesh = GridMesh::new(8).unwrap();
    let load = assemble_load(&mesh);
    let node = mesh.node_id(mesh.nx, mesh.ny / 2);
    assert_eq!(load.f[2 * node + 1], -1.0);
    assert_eq!(load.f.iter().map(|v| v.abs()).sum::<f64>(), 1.0);
    let area: f64 = load.q.iter().sum();
    assert!((area - 2.0).abs() < 1e-14);
}

/// `d(A(rho) u)/d rho_i = A_i u` is the i-th column of `B(u)`.
#[test]
fn coupling_is_derivative_of_stiffness_action() {
    let mesh = GridMesh::new(4).unwrap();
    let asm = StiffnessAssembly::new(&mesh, Material::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u: Vec<f64> = (0..asm.n_u())
        .map(|d| if asm.dirichlet[d] { 0.0 } else { rng.random_range(-1.0..1.0) })
        .collect();
    let rho: Vec<f64> = (0..mesh.element_count()).map(|_| rng.random_range(0.2..0.8)).collect();
    let b = asm.coupling(&u).to_dense();
    let h = 1e-6;
    for e in 0..mesh.element_count() {
        let mut rp = rho.clone();
        let mut rm = rho.clone();
        rp[e] += h;
        rm[e] -= h;
        let ap = asm.apply(&rp, &u);
        let am = asm.apply(&rm, &u);
        for d in 0..asm.n_u() {
            let fd = (ap[d] - am[d]) / (2.0 * h);
            assert!((fd - b[(d, e)]).abs() <= 1e-8, "element {e}, dof {d}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// `B(u) rho = A_free(rho) u` to rounding.
    #[test]
    fn coupling_identity(seed in any::<u64>()) {
        let mesh = GridMesh::new(4).unwrap();
        let asm = StiffnessAssembly::new(&mesh, Material::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..asm.n_u())
            .map(|d| if asm.dirichlet[d] { 0.0 } else { rng.random_range(-1.0..1.0) })
            .collect();
        let rho: Vec<f64> = (0..mesh.element_count()).map(|_| rng.random_range(0.01..1.0)).collect();
        let br = asm.coupling(&u).matvec(&rho);
        let au = asm.apply(&rho, &u);
        let num = br.iter().zip(&au).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den = au.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!(num <= 1e-12 * den);
    }

    /// Assembled and matrix-free stiffness agree and are symmetric.
    #[test]
    fn assembled_matches_matrix_free(seed in any::<u64>()) {
        let mesh = GridMesh::new(4).unwrap();
        let asm = StiffnessAssembly::new(&mesh, Material::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho: Vec<f64> = (0..mesh.element_count()).map(|_| rng.random_range(0.01..1.0)).collect();
        let u: Vec<f64> = (0..asm.n_u()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = asm.assemble(&rho).unwrap();
        let x = a.matvec(&u);
        let y = asm.apply(&rho, &u);
        for (p, q) in x.iter().zip(&y) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
        let d = a.to_dense();
        prop_assert!((&d - d.transpose()).amax() <= 1e-14);
    }
}
