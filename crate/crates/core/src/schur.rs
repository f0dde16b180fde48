//! Interior/interface splitting of the Newton Jacobian, independent
//! subdomain factorizations, interface Schur blocks and the block
//! upper-triangular right preconditioner
//!
//! ```text
//! P = [ J_II  J_IG ]      P^-1 = diag(J_II^-1, I) [I  -J_IG] diag(I, S~^-1)
//!     [   0    S~  ]                              [0    I  ]
//! ```

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::StiffnessAssembly;
use crate::mesh::{DofOrdering, Partition};
use crate::sparse::{CsrMatrix, SparseLu};

/// Dense matrices beyond this dimension are refused.
pub const DENSE_LIMIT: usize = 8000;

/// Jacobian in permuted ordering, split into interior and interface blocks.
#[derive(Debug, Clone)]
pub struct BlockJacobian {
    /// Full permuted matrix.
    pub full: CsrMatrix,
    /// Diagonal interior blocks, local numbering.
    pub jii: Vec<CsrMatrix>,
    pub jig: CsrMatrix,
    pub jgi: CsrMatrix,
    pub jgg: CsrMatrix,
    pub interior: Vec<std::ops::Range<usize>>,
    pub n_interior: usize,
    pub n_gamma: usize,
    pub n_sub: usize,
}

impl BlockJacobian {
    /// Permutes the natural-ordering Jacobian and extracts the blocks. Fails
    /// if an entry couples the interiors of two different subdomains.
    pub fn new(natural: &CsrMatrix, ord: &DofOrdering) -> Result<Self> {
        let full = natural.permute_sym(&ord.perm, &ord.inv);
        let ni = ord.n_interior;
        let ng = ord.n_iface;
        let n_sub = ord.interior.len();
        let mut blocks: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n_sub];
        let mut ig = Vec::new();
        let mut gi = Vec::new();
        let mut gg = Vec::new();
        for i in 0..full.nrows() {
            let gi_row = ord.group_of(i);
            for (j, v) in full.row(i) {
                match (gi_row, ord.group_of(j)) {
                    (Some(a), Some(b)) if a == b => {
                        let off = ord.interior[a].start;
                        blocks[a].push((i - off, j - off, v));
                    }
                    (Some(a), Some(b)) => {
                        if v != 0.0 {
                            return Err(Error::InvalidPartition(format!(
                                "entry ({i}, {j}) couples subdomains {a} and {b}"
                            )));
                        }
                    }
                    (Some(_), None) => ig.push((i, j - ni, v)),
                    (None, Some(_)) => gi.push((i - ni, j, v)),
                    (None, None) => gg.push((i - ni, j - ni, v)),
                }
            }
        }
        let jii = blocks
            .into_iter()
            .zip(&ord.interior)
            .map(|(t, r)| CsrMatrix::from_triplets(r.len(), r.len(), t))
            .collect();
        Ok(Self {
            full,
            jii,
            jig: CsrMatrix::from_triplets(ni, ng, ig),
            jgi: CsrMatrix::from_triplets(ng, ni, gi),
            jgg: CsrMatrix::from_triplets(ng, ng, gg),
            interior: ord.interior.clone(),
            n_interior: ni,
            n_gamma: ord.n_gamma,
            n_sub,
        })
    }

    pub fn n(&self) -> usize {
        self.full.nrows()
    }

    pub fn n_iface(&self) -> usize {
        self.jgg.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.full.matvec(x)
    }
}

/// One sparse LU per interior block.
#[derive(Debug)]
pub struct SubdomainFactorizations {
    pub lus: Vec<SparseLu>,
    pub interior: Vec<std::ops::Range<usize>>,
    pub n_interior: usize,
}

/// Factors each `J_II^k` independently.
pub fn factor_interior(j: &BlockJacobian) -> Result<SubdomainFactorizations> {
    let lus = j
        .jii
        .par_iter()
        .enumerate()
        .map(|(k, b)| SparseLu::new(b).map_err(|_| Error::SingularSubdomain { subdomain: k }))
        .collect::<Result<Vec<_>>>()?;
    Ok(SubdomainFactorizations {
        lus,
        interior: j.interior.clone(),
        n_interior: j.n_interior,
    })
}

impl SubdomainFactorizations {
    /// `J_II^{-1} v`, one independent solve per subdomain.
    pub fn apply_interior_inverse(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_interior);
        let mut out = v.to_vec();
        let mut chunks: Vec<&mut [f64]> = Vec::with_capacity(self.lus.len());
        let mut rest: &mut [f64] = &mut out;
        for r in &self.interior {
            let (head, tail) = rest.split_at_mut(r.len());
            chunks.push(head);
            rest = tail;
        }
        chunks
            .into_par_iter()
            .zip(self.lus.par_iter())
            .for_each(|(c, lu)| lu.solve_in_place(c));
        out
    }
}

/// Constraint blocks of the interface Schur complement
///
/// ```text
/// S = [ S11    S12  0 ]
///     [ S12^T  S22  1 ]
///     [ 0      1^T  0 ]
/// ```
///
/// `S11` stays implicit.
#[derive(Debug, Clone)]
pub struct SchurBlocks {
    pub s12: DMatrix<f64>,
    pub s22: DMatrix<f64>,
    pub n_gamma: usize,
    pub n_sub: usize,
}

impl SchurBlocks {
    /// `[[S22, 1], [1^T, 0]]`.
    pub fn constraint_block(&self) -> DMatrix<f64> {
        let n = self.n_sub;
        let mut f = DMatrix::zeros(n + 1, n + 1);
        f.view_mut((0, 0), (n, n)).copy_from(&self.s22);
        for k in 0..n {
            f[(k, n)] = 1.0;
            f[(n, k)] = 1.0;
        }
        f
    }

    /// Assembles the dense 3x3 block matrix with the given `(1,1)` block.
    pub fn bordered(&self, s11: &DMatrix<f64>) -> DMatrix<f64> {
        let (ng, n) = (self.n_gamma, self.n_sub);
        let mut s = DMatrix::zeros(ng + n + 1, ng + n + 1);
        s.view_mut((0, 0), (ng, ng)).copy_from(s11);
        s.view_mut((0, ng), (ng, n)).copy_from(&self.s12);
        s.view_mut((ng, 0), (n, ng)).copy_from(&self.s12.transpose());
        s.view_mut((ng, ng), (n + 1, n + 1))
            .copy_from(&self.constraint_block());
        s
    }
}

/// `S v = J_GG v - J_GI J_II^{-1} J_IG v` on a full interface vector.
pub fn schur_apply(fac: &SubdomainFactorizations, j: &BlockJacobian, v: &[f64]) -> Vec<f64> {
    let t = j.jig.matvec(v);
    let t = fac.apply_interior_inverse(&t);
    let c = j.jgi.matvec(&t);
    let mut out = j.jgg.matvec(v);
    for (o, ci) in out.iter_mut().zip(c) {
        *o -= ci;
    }
    out
}

/// `S11 v` for a displacement-only interface vector.
pub fn s11_apply(fac: &SubdomainFactorizations, j: &BlockJacobian, v: &[f64]) -> Vec<f64> {
    assert_eq!(v.len(), j.n_gamma);
    let mut full = v.to_vec();
    full.resize(j.n_iface(), 0.0);
    let mut out = schur_apply(fac, j, &full);
    out.truncate(j.n_gamma);
    out
}

/// Forms `S12` and `S22` from the `N` interface columns belonging to the
/// subdomain masses.
pub fn compute_schur_blocks(fac: &SubdomainFactorizations, j: &BlockJacobian) -> SchurBlocks {
    let (ng, n) = (j.n_gamma, j.n_sub);
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut e = vec![0.0; j.n_iface()];
            e[ng + k] = 1.0;
            schur_apply(fac, j, &e)
        })
        .collect();
    let s12 = DMatrix::from_fn(ng, n, |i, k| cols[k][i]);
    let s22 = DMatrix::from_fn(n, n, |i, k| cols[k][ng + i]);
    SchurBlocks {
        s12,
        s22,
        n_gamma: ng,
        n_sub: n,
    }
}

/// Dense Schur complement from `n_iface` applications; desk scale only.
pub fn dense_schur(fac: &SubdomainFactorizations, j: &BlockJacobian) -> Result<DMatrix<f64>> {
    let n = j.n_iface();
    guard("dense Schur complement", n)?;
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            schur_apply(fac, j, &e)
        })
        .collect();
    Ok(DMatrix::from_fn(n, n, |i, c| cols[c][i]))
}

/// Dense `S11`; desk scale only.
pub fn dense_s11(fac: &SubdomainFactorizations, j: &BlockJacobian) -> Result<DMatrix<f64>> {
    let n = j.n_gamma;
    guard("dense S11", n)?;
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            s11_apply(fac, j, &e)
        })
        .collect();
    Ok(DMatrix::from_fn(n, n, |i, c| cols[c][i]))
}

fn guard(what: &'static str, size: usize) -> Result<()> {
    if size > DENSE_LIMIT {
        Err(Error::TooLarge {
            what,
            size,
            limit: DENSE_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Elasticity-only Schur complement `S_GG = A_GG - A_GI A_II^{-1} A_IG` on
/// the interface displacement DOFs at density `rho`, in the same
/// component-blocked ordering as the Newton interface.
pub fn dense_elastic_schur(
    asm: &StiffnessAssembly,
    part: &Partition,
    ord: &DofOrdering,
    rho: &[f64],
) -> Result<DMatrix<f64>> {
    let ng = part.n_gamma();
    guard("elastic Schur complement", ng)?;
    let a = asm.assemble(rho)?;
    let n_u = asm.n_u();

    // interior displacement DOFs per subdomain, in Newton interior order
    let mut local = vec![None; n_u];
    let mut owner = vec![usize::MAX; n_u];
    let mut sub_dofs: Vec<Vec<usize>> = Vec::with_capacity(part.n_sub());
    for (k, r) in ord.interior.iter().enumerate() {
        let dofs: Vec<usize> = ord.perm[r.start..r.start + ord.interior_nu[k]].to_vec();
        for (l, &d) in dofs.iter().enumerate() {
            local[d] = Some(l);
            owner[d] = k;
        }
        sub_dofs.push(dofs);
    }
    let gamma: Vec<usize> = ord.perm[ord.n_interior..ord.n_interior + ng].to_vec();
    let mut gpos = vec![None; n_u];
    for (l, &d) in gamma.iter().enumerate() {
        gpos[d] = Some(l);
    }

    let lus = sub_dofs
        .par_iter()
        .enumerate()
        .map(|(k, dofs)| {
            let col_map: Vec<Option<usize>> =
                (0..n_u).map(|d| if owner[d] == k { local[d] } else { None }).collect();
            SparseLu::new(&a.select(dofs, &col_map, dofs.len()))
                .map_err(|_| Error::SingularSubdomain { subdomain: k })
        })
        .collect::<Result<Vec<_>>>()?;

    let agg = a.select(&gamma, &gpos, ng).to_dense();
    let cols: Vec<Vec<f64>> = (0..ng)
        .into_par_iter()
        .map(|c| {
            // A_IG e_c, split by subdomain
            let dc = gamma[c];
            let mut rhs: Vec<Vec<f64>> = sub_dofs.iter().map(|d| vec![0.0; d.len()]).collect();
            let mut touched = vec![false; sub_dofs.len()];
            for (i, v) in a.row(dc) {
                // A is symmetric, so row dc gives column dc
                if let Some(l) = local[i] {
                    rhs[owner[i]][l] += v;
                    touched[owner[i]] = true;
                }
            }
            let mut col = vec![0.0; ng];
            for k in 0..sub_dofs.len() {
                if !touched[k] {
                    continue;
                }
                let x = lus[k].solve(&rhs[k]);
                for (l, &d) in sub_dofs[k].iter().enumerate() {
                    for (gcol, v) in a.row(d) {
                        if let Some(g) = gpos[gcol] {
                            col[g] -= v * x[l];
                        }
                    }
                }
            }
            col
        })
        .collect();
    let mut s = agg;
    for (c, col) in cols.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            s[(r, c)] += v;
        }
    }
    Ok(s)
}

/// Inverse application of an interface Schur approximation.
pub trait InterfaceSolve {
    fn apply_inverse(&self, v: &[f64]) -> Result<Vec<f64>>;
}

/// `P^{-1} v`: interface solve, boundary-to-domain update, interior solves.
pub fn apply_p_inverse(
    fac: &SubdomainFactorizations,
    j: &BlockJacobian,
    approx: &(impl InterfaceSolve + ?Sized),
    v: &[f64],
) -> Result<Vec<f64>> {
    let ni = j.n_interior;
    let zg = approx.apply_inverse(&v[ni..])?;
    let t = j.jig.matvec(&zg);
    let w: Vec<f64> = v[..ni].iter().zip(&t).map(|(a, b)| a - b).collect();
    let mut z = fac.apply_interior_inverse(&w);
    z.extend(zg);
    Ok(z)
}
