//! Interface Schur approximations: the discrete fractional norm `H_theta`,
//! generalized Lanczos on the interface pencil `(L, M)`, the constraint
//! preconditioners `S0`, `S1`, `S2`, and a spectral check for constraint
//! preconditioned pencils.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fem::InterfacePencil;
use crate::schur::{InterfaceSolve, SchurBlocks};
use crate::sparse::{CsrMatrix, SparseLu};

/// Default fractional index for a subdomain count.
pub fn default_theta(n_sub: usize) -> f64 {
    match n_sub {
        16 => 0.6,
        64 => 0.7,
        _ => 0.5,
    }
}

/// Default Lanczos depth per displacement component, `ceil(sqrt(n_gamma))`.
pub fn default_lanczos_k(n_gamma: usize) -> usize {
    let mut k = (n_gamma as f64).sqrt().ceil() as usize;
    while k * k < n_gamma {
        k += 1;
    }
    while k > 0 && (k - 1) * (k - 1) >= n_gamma {
        k -= 1;
    }
    k
}

fn check_theta(theta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("theta = {theta} outside [0, 1]")))
    }
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let t = a.transpose();
    *a += t;
    *a *= 0.5;
}

/// Dense `H_theta = M (M^{-1} L)^{1-theta}` for one displacement component.
#[derive(Debug, Clone)]
pub struct FractionalNorm {
    pub theta: f64,
    pub h: DMatrix<f64>,
}

impl FractionalNorm {
    /// Block-diagonal `H_theta (+) H_theta` over both components.
    pub fn block(&self) -> DMatrix<f64> {
        let n = self.h.nrows();
        let mut b = DMatrix::zeros(2 * n, 2 * n);
        b.view_mut((0, 0), (n, n)).copy_from(&self.h);
        b.view_mut((n, n), (n, n)).copy_from(&self.h);
        b
    }
}

/// Computes `H_theta` from the symmetric reduction
/// `C = M_c^{-1} L M_c^{-T}` with `M = M_c M_c^T`, so that
/// `H_theta = M_c C^{1-theta} M_c^T`.
pub fn fractional_norm_dense(l: &DMatrix<f64>, m: &DMatrix<f64>, theta: f64) -> Result<FractionalNorm> {
    check_theta(theta)?;
    let n = l.nrows();
    if l.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidArgument("pencil matrices must be square and equal size".into()));
    }
    let mc = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("mass matrix is not positive definite".into()))?
        .l();
    let mut c = l.clone();
    mc.solve_lower_triangular_mut(&mut c);
    let mut c = c.transpose();
    mc.solve_lower_triangular_mut(&mut c);
    symmetrize(&mut c);
    let eig = SymmetricEigen::new(c);
    if eig.eigenvalues.iter().any(|&e| e <= 0.0) {
        return Err(Error::Singular("stiffness matrix is not positive definite".into()));
    }
    let p = 1.0 - theta;
    let f = DVector::from_iterator(n, eig.eigenvalues.iter().map(|&e| e.powf(p)));
    let q = &eig.eigenvectors;
    let cp = q * DMatrix::from_diagonal(&f) * q.transpose();
    let mut h = &mc * cp * mc.transpose();
    symmetrize(&mut h);
    Ok(FractionalNorm { theta, h })
}

/// `V^T L V = T`, `V^T M V = I` with `T` symmetric tridiagonal.
#[derive(Debug, Clone)]
pub struct PencilFactorization {
    /// `n x k`, columns M-orthonormal.
    pub v: DMatrix<f64>,
    pub alpha: Vec<f64>,
    /// Off-diagonal of `T`, length `k - 1`.
    pub beta: Vec<f64>,
}

impl PencilFactorization {
    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn t(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = self.alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = self.beta[i];
                t[(i + 1, i)] = self.beta[i];
            }
        }
        t
    }

    /// `T^p` via the eigendecomposition of `T`.
    pub fn t_power(&self, p: f64) -> Result<DMatrix<f64>> {
        let eig = SymmetricEigen::new(self.t());
        if eig.eigenvalues.iter().any(|&e| e <= 0.0) {
            return Err(Error::Singular("Lanczos tridiagonal is not positive definite".into()));
        }
        let f = DVector::from_iterator(self.k(), eig.eigenvalues.iter().map(|&e| e.powf(p)));
        let q = &eig.eigenvectors;
        let mut r = q * DMatrix::from_diagonal(&f) * q.transpose();
        symmetrize(&mut r);
        Ok(r)
    }
}

/// Breakdown threshold for the Lanczos recurrence, relative to the size of
/// the entries of `T` seen so far.
const LANCZOS_BREAKDOWN: f64 = 1e-14;

/// Generalized Lanczos on `M^{-1} L` in the M-inner product with full
/// reorthogonalization. Stops early, returning the truncated factorization,
/// when the recurrence breaks down. A zero start vector yields `k = 0`.
pub fn generalized_lanczos(
    l: &CsrMatrix,
    m: &CsrMatrix,
    m_lu: &SparseLu,
    k: usize,
    start: &[f64],
) -> Result<PencilFactorization> {
    let n = l.nrows();
    if start.len() != n || m.nrows() != n || m_lu.n() != n {
        return Err(Error::InvalidArgument("Lanczos dimensions disagree".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("Lanczos depth {k} exceeds dimension {n}")));
    }
    let m_norm = |x: &[f64]| dot(x, &m.matvec(x)).max(0.0).sqrt();
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut mvs: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut alpha = Vec::with_capacity(k);
    let mut beta = Vec::with_capacity(k);

    let s = m_norm(start);
    if s == 0.0 || k == 0 {
        return Ok(PencilFactorization {
            v: DMatrix::zeros(n, 0),
            alpha,
            beta,
        });
    }
    let mut v: Vec<f64> = start.iter().map(|x| x / s).collect();
    let mut scale = 0.0f64;
    loop {
        let mv = m.matvec(&v);
        let lv = l.matvec(&v);
        let a = dot(&v, &lv);
        alpha.push(a);
        scale = scale.max(a.abs());
        vs.push(v);
        mvs.push(mv);
        if vs.len() == k {
            break;
        }
        let mut w = m_lu.solve(&lv);
        // two passes of M-orthogonalization against every previous vector
        for _ in 0..2 {
            for (q, mq) in vs.iter().zip(&mvs) {
                let c = dot(mq, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let b = m_norm(&w);
        if b <= LANCZOS_BREAKDOWN * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        beta.push(b);
        scale = scale.max(b);
        v = w.iter().map(|x| x / b).collect();
    }
    let kk = vs.len();
    let v = DMatrix::from_fn(n, kk, |i, j| vs[j][i]);
    Ok(PencilFactorization { v, alpha, beta })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Interface preconditioner variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondKind {
    /// Elastic Schur complement `S_GG` in the leading block.
    S0,
    /// Dense fractional norm `H_theta (+) H_theta` in the leading block.
    S1,
    /// Partial constrained Lanczos factorization of `S1`.
    S2,
    /// The exact interface Schur complement.
    Exact,
}

impl PrecondKind {
    /// `S2` changes from one application to the next.
    pub fn is_flexible(self) -> bool {
        self == PrecondKind::S2
    }
}

impl std::str::FromStr for PrecondKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s0" => Ok(Self::S0),
            "s1" => Ok(Self::S1),
            "s2" => Ok(Self::S2),
            "exact" => Ok(Self::Exact),
            _ => Err(Error::InvalidArgument(format!("unknown preconditioner '{s}'"))),
        }
    }
}

impl std::fmt::Display for PrecondKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::S0 => "s0",
            Self::S1 => "s1",
            Self::S2 => "s2",
            Self::Exact => "exact",
        })
    }
}

/// A dense factorized interface matrix.
#[derive(Debug, Clone)]
pub struct DenseInterface {
    pub matrix: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DenseInterface {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let lu = matrix.clone().lu();
        if !lu.is_invertible() {
            return Err(Error::Singular("interface preconditioner matrix".into()));
        }
        Ok(Self { matrix, lu })
    }
}

impl InterfaceSolve for DenseInterface {
    fn apply_inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        let x = self
            .lu
            .solve(&DVector::from_column_slice(v))
            .ok_or_else(|| Error::Singular("interface preconditioner matrix".into()))?;
        Ok(x.as_slice().to_vec())
    }
}

/// Inputs of the partial Lanczos preconditioner.
///
/// Each application runs a fresh `k`-step Lanczos per displacement
/// component, started from `M^{-1} v_x` and `M^{-1} v_y`, and solves
/// `z = W T^{-1} W^T v` with
///
/// ```text
/// W = diag(V_x, V_y, U),   T = [ T_x^{1-theta} (+) T_y^{1-theta}   R^T ]
///                              [ R                                 D   ]
/// ```
///
/// where `U R` is a QR factorization of `[S12, 0]^T (V_x (+) V_y)` and
/// `D = U^T [[S22, 1], [1^T, 0]] U`.
#[derive(Debug)]
pub struct PartialLanczos {
    l: CsrMatrix,
    m: CsrMatrix,
    m_lu: SparseLu,
    pub k: usize,
    pub theta: f64,
    /// `[S12, 0]^T`, `(N+1) x n_gamma`.
    c: DMatrix<f64>,
    fhat: DMatrix<f64>,
}

impl PartialLanczos {
    pub fn new(pencil: &InterfacePencil, blocks: &SchurBlocks, theta: f64, k: usize) -> Result<Self> {
        check_theta(theta)?;
        let n = pencil.n();
        if blocks.n_gamma != 2 * n {
            return Err(Error::InvalidArgument("pencil and Schur blocks disagree".into()));
        }
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!("Lanczos depth {k} outside 1..={n}")));
        }
        let nc = blocks.n_sub + 1;
        let mut c = DMatrix::zeros(nc, 2 * n);
        c.view_mut((0, 0), (blocks.n_sub, 2 * n))
            .copy_from(&blocks.s12.transpose());
        Ok(Self {
            l: pencil.l.clone(),
            m: pencil.m.clone(),
            m_lu: SparseLu::new(&pencil.m)?,
            k,
            theta,
            c,
            fhat: blocks.constraint_block(),
        })
    }

    fn n(&self) -> usize {
        self.l.nrows()
    }
}

impl InterfaceSolve for PartialLanczos {
    fn apply_inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let nc = self.c.nrows();
        assert_eq!(v.len(), 2 * n + nc);
        let mut facs = Vec::with_capacity(2);
        for comp in 0..2 {
            let start = self.m_lu.solve(&v[comp * n..(comp + 1) * n]);
            facs.push(generalized_lanczos(&self.l, &self.m, &self.m_lu, self.k, &start)?);
        }
        let (kx, ky) = (facs[0].k(), facs[1].k());
        let kt = kx + ky;

        // V = V_x (+) V_y, n_gamma x kt
        let mut vb = DMatrix::zeros(2 * n, kt);
        vb.view_mut((0, 0), (n, kx)).copy_from(&facs[0].v);
        vb.view_mut((n, kx), (n, ky)).copy_from(&facs[1].v);

        let cv = &self.c * &vb;
        let mut padded = DMatrix::zeros(nc, kt.max(nc));
        padded.view_mut((0, 0), (nc, kt)).copy_from(&cv);
        let u = padded.qr().q();
        let r = u.transpose() * &cv;
        let d = u.transpose() * &self.fhat * &u;

        let dim = kt + nc;
        let mut tm = DMatrix::zeros(dim, dim);
        if kx > 0 {
            tm.view_mut((0, 0), (kx, kx))
                .copy_from(&facs[0].t_power(1.0 - self.theta)?);
        }
        if ky > 0 {
            tm.view_mut((kx, kx), (ky, ky))
                .copy_from(&facs[1].t_power(1.0 - self.theta)?);
        }
        tm.view_mut((kt, 0), (nc, kt)).copy_from(&r);
        tm.view_mut((0, kt), (kt, nc)).copy_from(&r.transpose());
        tm.view_mut((kt, kt), (nc, nc)).copy_from(&d);

        let vg = DVector::from_column_slice(&v[..2 * n]);
        let vc = DVector::from_column_slice(&v[2 * n..]);
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, kt).copy_from(&(vb.transpose() * vg));
        rhs.rows_mut(kt, nc).copy_from(&(u.transpose() * vc));
        let sol = tm.lu().solve(&rhs).ok_or_else(|| {
            Error::Singular("bordered Lanczos system is singular; increase lanczos_k".into())
        })?;
        if sol.iter().any(|x| !x.is_finite()) {
            return Err(Error::Singular("bordered Lanczos system is singular".into()));
        }
        let zg = &vb * sol.rows(0, kt);
        let zc = &u * sol.rows(kt, nc);
        let mut z = zg.as_slice().to_vec();
        z.extend_from_slice(zc.as_slice());
        Ok(z)
    }
}

/// An interface Schur approximation ready for inverse applications.
#[derive(Debug)]
pub enum SchurApprox {
    Dense(DenseInterface),
    Lanczos(PartialLanczos),
}

impl SchurApprox {
    /// Replaces the leading block of the bordered Schur structure and
    /// factors the result.
    pub fn with_leading_block(blocks: &SchurBlocks, s11: &DMatrix<f64>) -> Result<Self> {
        Ok(Self::Dense(DenseInterface::new(blocks.bordered(s11))?))
    }

    /// `S1` with the dense fractional norm of the pencil.
    pub fn s1(blocks: &SchurBlocks, pencil: &InterfacePencil, theta: f64) -> Result<Self> {
        let h = fractional_norm_dense(&pencil.l.to_dense(), &pencil.m.to_dense(), theta)?;
        Self::with_leading_block(blocks, &h.block())
    }

    pub fn s2(blocks: &SchurBlocks, pencil: &InterfacePencil, theta: f64, k: usize) -> Result<Self> {
        Ok(Self::Lanczos(PartialLanczos::new(pencil, blocks, theta, k)?))
    }

    /// Wraps an explicitly given interface matrix.
    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        Ok(Self::Dense(DenseInterface::new(matrix)?))
    }

    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            Self::Dense(d) => Some(&d.matrix),
            Self::Lanczos(_) => None,
        }
    }
}

impl InterfaceSolve for SchurApprox {
    fn apply_inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Dense(d) => d.apply_inverse(v),
            Self::Lanczos(p) => p.apply_inverse(v),
        }
    }
}

/// Spectrum of `G^{-1} K` for the constraint-bordered pair
///
/// ```text
/// K = [ K    D    0 ]      G = [ G    D    0 ]
///     [ D^T  F    1 ]          [ D^T  F    1 ]
///     [ 0    1^T  0 ]          [ 0    1^T  0 ]
/// ```
#[derive(Debug, Clone)]
pub struct EigPropReport {
    pub eigenvalues: Vec<Complex<f64>>,
    /// Eigenvalues within `tol` of 1.
    pub unit_count: usize,
    /// Eigenvalues of `(G - Q)^{-1} (K - Q)`, `Q = D Z (Z^T F Z)^{-1} (D Z)^T`.
    pub reduced: Vec<Complex<f64>>,
    /// Largest distance, after greedy matching, between the reduced spectrum
    /// and the non-unit part of the full spectrum, relative to `max(1, |x|)`.
    pub match_error: f64,
}

pub fn eigprop_check(
    k: &DMatrix<f64>,
    g: &DMatrix<f64>,
    d: &DMatrix<f64>,
    f: &DMatrix<f64>,
    tol: f64,
) -> Result<EigPropReport> {
    let ng = k.nrows();
    let n = f.nrows();
    if n < 1 || d.nrows() != ng || d.ncols() != n || g.nrows() != ng {
        return Err(Error::InvalidArgument("inconsistent block sizes".into()));
    }
    let border = |lead: &DMatrix<f64>| {
        let dim = ng + n + 1;
        let mut b = DMatrix::zeros(dim, dim);
        b.view_mut((0, 0), (ng, ng)).copy_from(lead);
        b.view_mut((0, ng), (ng, n)).copy_from(d);
        b.view_mut((ng, 0), (n, ng)).copy_from(&d.transpose());
        b.view_mut((ng, ng), (n, n)).copy_from(f);
        for i in 0..n {
            b[(ng + i, ng + n)] = 1.0;
            b[(ng + n, ng + i)] = 1.0;
        }
        b
    };
    let gb = border(g);
    let glu = gb.clone().lu();
    // G^{-1} K = I + G^{-1} (K - G) keeps the unit eigenvalues sharp
    let mut diff = DMatrix::zeros(ng + n + 1, ng + n + 1);
    diff.view_mut((0, 0), (ng, ng)).copy_from(&(k - g));
    let x = glu
        .solve(&diff)
        .ok_or_else(|| Error::Singular("bordered G is singular".into()))?;
    let a = DMatrix::identity(ng + n + 1, ng + n + 1) + x;
    let eigenvalues = eigenvalues_of(&a)?;
    let unit_count = eigenvalues
        .iter()
        .filter(|e| (*e - Complex::new(1.0, 0.0)).norm() <= tol)
        .count();

    // null-space basis of 1^T: columns e_i - e_n
    let mut z = DMatrix::zeros(n, n - 1);
    for i in 0..n - 1 {
        z[(i, i)] = 1.0;
        z[(n - 1, i)] = -1.0;
    }
    let q = if n > 1 {
        let dz = d * &z;
        let ztfz = z.transpose() * f * &z;
        let inv = ztfz
            .try_inverse()
            .ok_or_else(|| Error::Singular("Z^T F Z is singular".into()))?;
        &dz * inv * dz.transpose()
    } else {
        DMatrix::zeros(ng, ng)
    };
    let red = (g - &q)
        .lu()
        .solve(&(k - &q))
        .ok_or_else(|| Error::Singular("G - Q is singular".into()))?;
    let reduced = eigenvalues_of(&red)?;

    // drop the N+1 eigenvalues closest to 1, then match the rest greedily
    let mut rest = eigenvalues.clone();
    rest.sort_by(|a, b| {
        (b - Complex::new(1.0, 0.0))
            .norm()
            .total_cmp(&(a - Complex::new(1.0, 0.0)).norm())
    });
    rest.truncate(rest.len().saturating_sub(n + 1));
    let match_error = greedy_match(&reduced, &rest);
    Ok(EigPropReport {
        eigenvalues,
        unit_count,
        reduced,
        match_error,
    })
}

/// Eigenvalues of a general real matrix.
pub fn eigenvalues_of(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let m = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let ev = m
        .eigenvalues()
        .map_err(|e| Error::Singular(format!("eigenvalue iteration failed: {e:?}")))?;
    Ok(ev.into_iter().map(|z| Complex::new(z.re, z.im)).collect())
}

/// Largest relative distance when each `a` is matched to its nearest
/// unused `b`; infinite if the sizes differ.
pub fn greedy_match(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let (j, dist) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("equal sizes");
        used[j] = true;
        worst = worst.max(dist / x.norm().max(1.0));
    }
    worst
}
