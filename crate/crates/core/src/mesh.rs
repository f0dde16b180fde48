//! Structured cantilever mesh, regular subdomain partitions and the
//! interior/interface ordering of the Newton unknowns.
//!
//! The design domain is `[0, 2] x [0, 1]`, discretized by `nx x ny` square
//! elements with `nx = 2 ny`. The left edge is clamped and a unit point load
//! acts at the middle of the right edge.
//!
//! Nodes are numbered row by row from the bottom-left corner,
//! `id = j (nx + 1) + i`, elements likewise, `id = ej nx + ei`. The two
//! displacement components of node `id` are the DOFs `2 id` (x) and
//! `2 id + 1` (y).

use std::ops::Range;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GridMesh {
    pub ny: usize,
    pub nx: usize,
    pub h: f64,
}

impl GridMesh {
    /// Builds the `2 ny x ny` cantilever mesh. `ny` must be even and at least
    /// two so that the load node sits on a grid point.
    pub fn new(ny: usize) -> Result<Self> {
        if ny < 2 || ny % 2 != 0 {
            return Err(Error::InvalidMesh(format!(
                "ny must be a positive even integer, got {ny}"
            )));
        }
        Ok(Self {
            ny,
            nx: 2 * ny,
            h: 1.0 / ny as f64,
        })
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn element_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Number of displacement unknowns, Dirichlet DOFs included.
    pub fn n_u(&self) -> usize {
        2 * self.node_count()
    }

    #[inline]
    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn node_ij(&self, id: usize) -> (usize, usize) {
        (id % (self.nx + 1), id / (self.nx + 1))
    }

    pub fn node_coords(&self, id: usize) -> (f64, f64) {
        let (i, j) = self.node_ij(id);
        (i as f64 * self.h, j as f64 * self.h)
    }

    #[inline]
    pub fn element_ij(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }

    /// Corner nodes counter-clockwise from the bottom-left one.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (ei, ej) = self.element_ij(e);
        [
            self.node_id(ei, ej),
            self.node_id(ei + 1, ej),
            self.node_id(ei + 1, ej + 1),
            self.node_id(ei, ej + 1),
        ]
    }

    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let n = self.element_nodes(e);
        [
            2 * n[0],
            2 * n[0] + 1,
            2 * n[1],
            2 * n[1] + 1,
            2 * n[2],
            2 * n[2] + 1,
            2 * n[3],
            2 * n[3] + 1,
        ]
    }

    #[inline]
    pub fn is_dirichlet(&self, node: usize) -> bool {
        node % (self.nx + 1) == 0
    }

    /// Clamped nodes: every node with `x = 0`.
    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        (0..=self.ny).map(|j| self.node_id(0, j)).collect()
    }

    /// Per-DOF clamp mask.
    pub fn dirichlet_mask(&self) -> Vec<bool> {
        (0..self.n_u()).map(|d| self.is_dirichlet(d / 2)).collect()
    }

    /// Node at `(2, 1/2)`.
    pub fn load_node(&self) -> usize {
        self.node_id(self.nx, self.ny / 2)
    }

    /// Total area of the design domain.
    pub fn area(&self) -> f64 {
        self.element_count() as f64 * self.h * self.h
    }
}

/// Regular `p x p` subdivision of the mesh into rectangular subdomains.
#[derive(Debug, Clone)]
pub struct Partition {
    pub mesh: GridMesh,
    pub p: usize,
    /// Element index set of each subdomain, ascending.
    pub tau: Vec<Vec<usize>>,
    /// Non-interface, non-clamped nodes of each (closed) subdomain, ascending.
    pub nu: Vec<Vec<usize>>,
    /// Clamped nodes attached to each subdomain. Each clamped node is owned
    /// by exactly one subdomain.
    pub dirichlet_owned: Vec<Vec<usize>>,
    /// Interface nodes not on the clamped edge, ascending.
    pub gamma_nodes: Vec<usize>,
    /// Interface nodes that lie on the clamped edge.
    pub gamma_d: Vec<usize>,
    /// Subdomain of each element.
    pub element_subdomain: Vec<usize>,
}

impl Partition {
    pub fn new(mesh: &GridMesh, p: usize) -> Result<Self> {
        if p == 0 || mesh.ny % p != 0 || mesh.nx % p != 0 {
            return Err(Error::InvalidPartition(format!(
                "p = {p} must be positive and divide ny = {} and nx = {}",
                mesh.ny, mesh.nx
            )));
        }
        let n_sub = p * p;
        let sx = mesh.nx / p;
        let sy = mesh.ny / p;

        let mut tau = vec![Vec::with_capacity(sx * sy); n_sub];
        let mut element_subdomain = Vec::with_capacity(mesh.element_count());
        for e in 0..mesh.element_count() {
            let (ei, ej) = mesh.element_ij(e);
            let k = (ej / sy) * p + ei / sx;
            tau[k].push(e);
            element_subdomain.push(k);
        }

        let on_vline = |i: usize| i % sx == 0 && i > 0 && i < mesh.nx;
        let on_hline = |j: usize| j % sy == 0 && j > 0 && j < mesh.ny;

        let mut nu = vec![Vec::new(); n_sub];
        let mut dirichlet_owned = vec![Vec::new(); n_sub];
        let mut gamma_nodes = Vec::new();
        let mut gamma_d = Vec::new();
        for node in 0..mesh.node_count() {
            let (i, j) = mesh.node_ij(node);
            let interface = on_vline(i) || on_hline(j);
            let owner = (j / sy).min(p - 1) * p + (i / sx).min(p - 1);
            if mesh.is_dirichlet(node) {
                if interface {
                    gamma_d.push(node);
                }
                dirichlet_owned[owner].push(node);
            } else if interface {
                gamma_nodes.push(node);
            } else {
                nu[owner].push(node);
            }
        }

        Ok(Self {
            mesh: mesh.clone(),
            p,
            tau,
            nu,
            dirichlet_owned,
            gamma_nodes,
            gamma_d,
            element_subdomain,
        })
    }

    pub fn n_sub(&self) -> usize {
        self.p * self.p
    }

    /// Interface displacement DOF count.
    pub fn n_gamma(&self) -> usize {
        2 * self.gamma_nodes.len()
    }

    /// Interface block size of the Newton system, `n_gamma + N + 1`.
    pub fn n_iface(&self) -> usize {
        self.n_gamma() + self.n_sub() + 1
    }

    pub fn m_k(&self, k: usize) -> usize {
        self.tau[k].len()
    }

    /// Interface DOF count from the grid dimensions alone.
    pub fn n_gamma_closed_form(ny: usize, p: usize) -> usize {
        let nx = 2 * ny;
        let pm = p - 1;
        let nodes = pm * (ny + 1) + pm * (nx + 1) - pm * pm;
        2 * nodes - 2 * pm
    }
}

/// Total number of Newton unknowns `2 nodes + 3 m + 2 N + 1`.
pub fn total_unknowns(mesh: &GridMesh, n_sub: usize) -> usize {
    mesh.n_u() + 3 * mesh.element_count() + 2 * n_sub + 1
}

/// Offsets of the blocks of `y = (u, lambda_1..N, rho, phi, psi, mu_1..N,
/// lambda_0)` in natural ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_u: usize,
    pub n_sub: usize,
    pub m: usize,
}

impl Layout {
    pub fn new(mesh: &GridMesh, n_sub: usize) -> Self {
        Self {
            n_u: mesh.n_u(),
            n_sub,
            m: mesh.element_count(),
        }
    }

    #[inline]
    pub fn u(&self, d: usize) -> usize {
        d
    }
    #[inline]
    pub fn lam(&self, k: usize) -> usize {
        self.n_u + k
    }
    #[inline]
    pub fn rho(&self, i: usize) -> usize {
        self.n_u + self.n_sub + i
    }
    #[inline]
    pub fn phi(&self, i: usize) -> usize {
        self.n_u + self.n_sub + self.m + i
    }
    #[inline]
    pub fn psi(&self, i: usize) -> usize {
        self.n_u + self.n_sub + 2 * self.m + i
    }
    #[inline]
    pub fn mu(&self, k: usize) -> usize {
        self.n_u + self.n_sub + 3 * self.m + k
    }
    #[inline]
    pub fn lam0(&self) -> usize {
        self.n_u + 2 * self.n_sub + 3 * self.m
    }
    pub fn len(&self) -> usize {
        self.lam0() + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Permutation of the natural unknown ordering into
/// `[interior of subdomain 1 | ... | interior of subdomain N | interface]`.
///
/// Interior group `k` is `(u on nu[k] and its clamped nodes, lambda_k,
/// rho|tau_k, phi|tau_k, psi|tau_k)`; the interface group is
/// `(u_x on gamma, u_y on gamma, mu_1..mu_N, lambda_0)`.
#[derive(Debug, Clone)]
pub struct DofOrdering {
    pub layout: Layout,
    /// `perm[new] = old`.
    pub perm: Vec<usize>,
    /// `inv[old] = new`.
    pub inv: Vec<usize>,
    /// Range of each interior group in permuted numbering.
    pub interior: Vec<Range<usize>>,
    /// Number of displacement unknowns at the start of each interior group.
    pub interior_nu: Vec<usize>,
    pub n_interior: usize,
    pub n_gamma: usize,
    pub n_iface: usize,
}

impl DofOrdering {
    pub fn new(part: &Partition) -> Self {
        let mesh = &part.mesh;
        let n_sub = part.n_sub();
        let layout = Layout::new(mesh, n_sub);
        let mut perm = Vec::with_capacity(layout.len());
        let mut interior = Vec::with_capacity(n_sub);
        let mut interior_nu = Vec::with_capacity(n_sub);

        for k in 0..n_sub {
            let start = perm.len();
            let mut nodes: Vec<usize> = part.nu[k]
                .iter()
                .chain(part.dirichlet_owned[k].iter())
                .copied()
                .collect();
            nodes.sort_unstable();
            for &nd in &nodes {
                perm.push(layout.u(2 * nd));
                perm.push(layout.u(2 * nd + 1));
            }
            interior_nu.push(2 * nodes.len());
            perm.push(layout.lam(k));
            perm.extend(part.tau[k].iter().map(|&e| layout.rho(e)));
            perm.extend(part.tau[k].iter().map(|&e| layout.phi(e)));
            perm.extend(part.tau[k].iter().map(|&e| layout.psi(e)));
            interior.push(start..perm.len());
        }
        let n_interior = perm.len();
        for c in 0..2 {
            perm.extend(part.gamma_nodes.iter().map(|&nd| layout.u(2 * nd + c)));
        }
        perm.extend((0..n_sub).map(|k| layout.mu(k)));
        perm.push(layout.lam0());

        let mut inv = vec![usize::MAX; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        debug_assert!(inv.iter().all(|&i| i != usize::MAX));

        let n_iface = perm.len() - n_interior;
        Self {
            layout,
            perm,
            inv,
            interior,
            interior_nu,
            n_interior,
            n_gamma: part.n_gamma(),
            n_iface,
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Natural to permuted ordering.
    pub fn permute(&self, natural: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&old| natural[old]).collect()
    }

    /// Permuted to natural ordering.
    pub fn unpermute(&self, permuted: &[f64]) -> Vec<f64> {
        self.inv.iter().map(|&new| permuted[new]).collect()
    }

    /// Subdomain owning permuted index `idx`, `None` for interface unknowns.
    pub fn group_of(&self, idx: usize) -> Option<usize> {
        if idx >= self.n_interior {
            return None;
        }
        Some(self.interior.partition_point(|r| r.end <= idx))
    }
}
