//! Bilinear plane-stress elasticity on the cantilever grid, the
//! density-weighted stiffness `A(rho) = sum_i rho_i A_i`, the coupling
//! matrix `B(u) = [A_1 u, ..., A_m u]` and the 1D mass/Laplacian pencil on
//! the subdomain interface.
//!
//! Clamped DOFs stay in the vector of unknowns. In `A(rho)` their rows and
//! columns are replaced by identity rows and columns; the element matrices
//! `A_i` used everywhere else are projected onto the free DOFs.

use nalgebra::SMatrix;

use crate::error::{Error, Result};
use crate::mesh::{GridMesh, Partition};
use crate::sparse::CsrMatrix;

pub type Mat8 = SMatrix<f64, 8, 8>;

/// Gauss points and unit weights of the 2-point rule on `[-1, 1]`.
const GAUSS2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// Corner coordinates of the reference square, counter-clockwise.
const CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub young: f64,
    pub poisson: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            young: 1.0,
            poisson: 0.3,
        }
    }
}

/// Unit-density stiffness matrix of one square bilinear element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementStiffness {
    pub k: Mat8,
    pub material: Material,
    pub h: f64,
}

/// Plane-stress Q1 element stiffness on a square of side `h`, integrated
/// with the 2x2 Gauss rule.
pub fn element_stiffness(young: f64, poisson: f64, h: f64) -> Result<ElementStiffness> {
    if !(young > 0.0) || !(0.0..0.5).contains(&poisson) || !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "element_stiffness needs E > 0, 0 <= nu < 0.5, h > 0 (got {young}, {poisson}, {h})"
        )));
    }
    let c = young / (1.0 - poisson * poisson);
    let d = SMatrix::<f64, 3, 3>::new(
        c,
        c * poisson,
        0.0,
        c * poisson,
        c,
        0.0,
        0.0,
        0.0,
        c * (1.0 - poisson) / 2.0,
    );
    let jac = h / 2.0;
    let det = jac * jac;
    let mut k = Mat8::zeros();
    for &xi in &GAUSS2 {
        for &eta in &GAUSS2 {
            let mut b = SMatrix::<f64, 3, 8>::zeros();
            for (a, &(xa, ya)) in CORNERS.iter().enumerate() {
                let dx = 0.25 * xa * (1.0 + eta * ya) / jac;
                let dy = 0.25 * ya * (1.0 + xi * xa) / jac;
                b[(0, 2 * a)] = dx;
                b[(1, 2 * a + 1)] = dy;
                b[(2, 2 * a)] = dy;
                b[(2, 2 * a + 1)] = dx;
            }
            k += b.transpose() * d * b * det;
        }
    }
    Ok(ElementStiffness {
        k,
        material: Material { young, poisson },
        h,
    })
}

/// Element data plus the clamp mask needed to assemble `A(rho)` and `B(u)`.
#[derive(Debug, Clone)]
pub struct StiffnessAssembly {
    pub mesh: GridMesh,
    pub element: ElementStiffness,
    pub dirichlet: Vec<bool>,
}

impl StiffnessAssembly {
    pub fn new(mesh: &GridMesh, material: Material) -> Result<Self> {
        Ok(Self {
            mesh: mesh.clone(),
            element: element_stiffness(material.young, material.poisson, mesh.h)?,
            dirichlet: mesh.dirichlet_mask(),
        })
    }

    pub fn n_u(&self) -> usize {
        self.mesh.n_u()
    }

    /// `(A_i u)` restricted to the DOFs of element `e`, with clamped rows and
    /// columns of `A_i` removed.
    pub fn element_apply(&self, e: usize, u: &[f64]) -> [f64; 8] {
        let dofs = self.mesh.element_dofs(e);
        let mut ue = [0.0; 8];
        for (a, &d) in dofs.iter().enumerate() {
            if !self.dirichlet[d] {
                ue[a] = u[d];
            }
        }
        let mut out = [0.0; 8];
        for (a, &d) in dofs.iter().enumerate() {
            if self.dirichlet[d] {
                continue;
            }
            out[a] = (0..8).map(|b| self.element.k[(a, b)] * ue[b]).sum();
        }
        out
    }

    /// Element energy `u^T A_i u` on the free DOFs.
    pub fn element_energy(&self, e: usize, u: &[f64]) -> f64 {
        let dofs = self.mesh.element_dofs(e);
        self.element_apply(e, u)
            .iter()
            .zip(dofs)
            .map(|(a, d)| a * u[d])
            .sum()
    }

    /// Assembled `A(rho)` with identity rows/columns at clamped DOFs.
    pub fn assemble(&self, rho: &[f64]) -> Result<CsrMatrix> {
        let m = self.mesh.element_count();
        if rho.len() != m {
            return Err(Error::InvalidArgument(format!(
                "density vector has length {}, expected {m}",
                rho.len()
            )));
        }
        if let Some(i) = rho.iter().position(|&r| !(r > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "density must be positive, rho[{i}] = {}",
                rho[i]
            )));
        }
        let mut trip = Vec::with_capacity(64 * m + self.n_u());
        self.push_triplets(rho, |i, j, v| trip.push((i, j, v)));
        for (d, &clamped) in self.dirichlet.iter().enumerate() {
            if clamped {
                trip.push((d, d, 1.0));
            }
        }
        Ok(CsrMatrix::from_triplets(self.n_u(), self.n_u(), trip))
    }

    /// Emits the free-DOF entries of `sum_i rho_i A_i`.
    pub fn push_triplets(&self, rho: &[f64], mut push: impl FnMut(usize, usize, f64)) {
        for (e, &r) in rho.iter().enumerate() {
            let dofs = self.mesh.element_dofs(e);
            for (a, &da) in dofs.iter().enumerate() {
                if self.dirichlet[da] {
                    continue;
                }
                for (b, &db) in dofs.iter().enumerate() {
                    if !self.dirichlet[db] {
                        push(da, db, r * self.element.k[(a, b)]);
                    }
                }
            }
        }
    }

    /// `A(rho) u` without forming the matrix.
    pub fn apply(&self, rho: &[f64], u: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_u()];
        for (e, &r) in rho.iter().enumerate() {
            let dofs = self.mesh.element_dofs(e);
            for (a, v) in self.element_apply(e, u).into_iter().enumerate() {
                y[dofs[a]] += r * v;
            }
        }
        for (d, &clamped) in self.dirichlet.iter().enumerate() {
            if clamped {
                y[d] = u[d];
            }
        }
        y
    }

    /// `B(u)`: column `i` is `A_i u` on the free DOFs.
    pub fn coupling(&self, u: &[f64]) -> CsrMatrix {
        let m = self.mesh.element_count();
        let mut trip = Vec::with_capacity(8 * m);
        for e in 0..m {
            let dofs = self.mesh.element_dofs(e);
            for (a, v) in self.element_apply(e, u).into_iter().enumerate() {
                if !self.dirichlet[dofs[a]] {
                    trip.push((dofs[a], e, v));
                }
            }
        }
        CsrMatrix::from_triplets(self.n_u(), m, trip)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadVector {
    pub f: Vec<f64>,
    /// Element areas.
    pub q: Vec<f64>,
}

/// Unit downward point force at the middle of the right edge.
pub fn assemble_load(mesh: &GridMesh) -> LoadVector {
    let mut f = vec![0.0; mesh.n_u()];
    f[2 * mesh.load_node() + 1] = -1.0;
    LoadVector {
        f,
        q: vec![mesh.h * mesh.h; mesh.element_count()],
    }
}

/// Per-component P1 mass and stiffness matrices on the interface skeleton,
/// indexed by position in `Partition::gamma_nodes`.
#[derive(Debug, Clone)]
pub struct InterfacePencil {
    pub l: CsrMatrix,
    pub m: CsrMatrix,
    /// `true` when the clamped-edge crossing set was empty and `L` was
    /// shifted by `M`.
    pub shifted: bool,
}

impl InterfacePencil {
    pub fn new(part: &Partition) -> Result<Self> {
        if part.gamma_nodes.is_empty() {
            return Err(Error::InvalidPartition(
                "interface pencil requires a non-empty interface".into(),
            ));
        }
        let (nodes, l_raw, m_raw) = interface_skeleton(part);
        // keep only non-clamped nodes; gamma_nodes is a sorted subset of nodes
        let mut col_map = vec![None; nodes.len()];
        let mut rows = Vec::with_capacity(part.gamma_nodes.len());
        for (pos, nd) in nodes.iter().enumerate() {
            if let Ok(g) = part.gamma_nodes.binary_search(nd) {
                col_map[pos] = Some(g);
                rows.push(pos);
            }
        }
        let n = part.gamma_nodes.len();
        let l = l_raw.select(&rows, &col_map, n);
        let m = m_raw.select(&rows, &col_map, n);
        let shifted = part.gamma_d.is_empty();
        let l = if shifted {
            CsrMatrix::from_triplets(n, n, l.triplets().chain(m.triplets()).collect())
        } else {
            l
        };
        Ok(Self { l, m, shifted })
    }

    pub fn n(&self) -> usize {
        self.l.nrows()
    }
}

/// Assembles P1 Laplacian and mass matrices over a set of segments joining
/// `n` nodes. Each segment has the given length.
pub fn assemble_1d(n: usize, segments: &[(usize, usize)], length: f64) -> (CsrMatrix, CsrMatrix) {
    let mut lt = Vec::with_capacity(4 * segments.len());
    let mut mt = Vec::with_capacity(4 * segments.len());
    for &(a, b) in segments {
        let s = 1.0 / length;
        lt.extend([(a, a, s), (a, b, -s), (b, a, -s), (b, b, s)]);
        let d = length / 3.0;
        let o = length / 6.0;
        mt.extend([(a, a, d), (a, b, o), (b, a, o), (b, b, d)]);
    }
    (
        CsrMatrix::from_triplets(n, n, lt),
        CsrMatrix::from_triplets(n, n, mt),
    )
}

/// Interface skeleton including the clamped crossings: sorted node list and
/// the raw (non-eliminated) Laplacian and mass matrices.
pub fn interface_skeleton(part: &Partition) -> (Vec<usize>, CsrMatrix, CsrMatrix) {
    let mesh = &part.mesh;
    let mut nodes: Vec<usize> = part
        .gamma_nodes
        .iter()
        .chain(&part.gamma_d)
        .copied()
        .collect();
    nodes.sort_unstable();
    let pos = |nd: usize| nodes.binary_search(&nd).expect("interface node");
    let sx = mesh.nx / part.p;
    let sy = mesh.ny / part.p;
    let mut segs = Vec::new();
    for c in 1..part.p {
        let i = c * sx;
        for j in 0..mesh.ny {
            segs.push((pos(mesh.node_id(i, j)), pos(mesh.node_id(i, j + 1))));
        }
        let j = c * sy;
        for i in 0..mesh.nx {
            segs.push((pos(mesh.node_id(i, j)), pos(mesh.node_id(i + 1, j))));
        }
    }
    let (l, m) = assemble_1d(nodes.len(), &segs, mesh.h);
    (nodes, l, m)
}
