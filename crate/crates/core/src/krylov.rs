//! Unrestarted right-preconditioned GMRES and flexible GMRES.
//!
//! Both solve `A x = b` from `x0 = 0` and stop once the true residual
//! satisfies `||b - A x|| <= tol ||b||`. The Arnoldi basis is built with
//! modified Gram-Schmidt plus one corrective pass whenever the new vector
//! keeps a component above `1e-8` along the basis.

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovConfig {
    pub tol: f64,
    /// Iteration cap; `None` means the system dimension.
    pub max_iter: Option<usize>,
    pub flexible: bool,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: None,
            flexible: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KrylovResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual estimates, starting with 1 at iteration 0.
    pub residual_history: Vec<f64>,
    /// Recomputed `||b - A x|| / ||b||`.
    pub relative_residual: f64,
    pub converged: bool,
}

const REORTH_THRESHOLD: f64 = 1e-8;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthogonalizes `w` against `basis`, writing coefficients into `h`.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64], h: &mut [f64]) {
    for (j, v) in basis.iter().enumerate() {
        let c = dot(v, w);
        h[j] = c;
        axpy(-c, v, w);
    }
    let nw = norm(w);
    if nw == 0.0 {
        return;
    }
    let corr: Vec<f64> = basis.iter().map(|v| dot(v, w)).collect();
    if corr.iter().any(|c| c.abs() > REORTH_THRESHOLD * nw) {
        for (j, (v, c)) in basis.iter().zip(corr).enumerate() {
            h[j] += c;
            axpy(-c, v, w);
        }
    }
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Solves the small least-squares problem from the rotated Hessenberg
/// factor `r` (column-major upper triangular, `k x k`) and rotated rhs `g`.
fn back_substitute(r: &[Vec<f64>], g: &[f64], k: usize) -> Vec<f64> {
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in i + 1..k {
            s -= r[j][i] * y[j];
        }
        y[i] = s / r[i][i];
    }
    y
}

fn run(
    mut apply_a: impl FnMut(&[f64]) -> Vec<f64>,
    mut apply_p: impl FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    config: &KrylovConfig,
) -> KrylovResult {
    let n = b.len();
    let max_iter = config.max_iter.unwrap_or(n).min(n.max(1));
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return KrylovResult {
            x: vec![0.0; n],
            iterations: 0,
            residual_history: vec![0.0],
            relative_residual: 0.0,
            converged: true,
        };
    }

    let mut basis: Vec<Vec<f64>> = vec![b.iter().map(|v| v / bnorm).collect()];
    let mut zs: Vec<Vec<f64>> = Vec::new();
    // rotated Hessenberg columns
    let mut rcols: Vec<Vec<f64>> = Vec::new();
    let mut rots: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![bnorm];
    let mut history = vec![1.0];

    let form_x = |k: usize, rcols: &[Vec<f64>], g: &[f64], basis: &[Vec<f64>], zs: &[Vec<f64>], apply_p: &mut dyn FnMut(&[f64]) -> Vec<f64>| -> Vec<f64> {
        let y = back_substitute(rcols, g, k);
        if config.flexible {
            let mut x = vec![0.0; n];
            for (z, c) in zs.iter().zip(&y) {
                axpy(*c, z, &mut x);
            }
            x
        } else {
            let mut t = vec![0.0; n];
            for (v, c) in basis.iter().zip(&y) {
                axpy(*c, v, &mut t);
            }
            apply_p(&t)
        }
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    for k in 0..max_iter {
        let z = apply_p(&basis[k]);
        let mut w = apply_a(&z);
        if config.flexible {
            zs.push(z);
        }
        let mut h = vec![0.0; k + 2];
        orthogonalize(&basis, &mut w, &mut h[..k + 1]);
        let hnext = norm(&w);
        h[k + 1] = hnext;

        for (i, &(c, s)) in rots.iter().enumerate() {
            let (a, bb) = (h[i], h[i + 1]);
            h[i] = c * a + s * bb;
            h[i + 1] = -s * a + c * bb;
        }
        let (c, s) = givens(h[k], h[k + 1]);
        h[k] = c * h[k] + s * h[k + 1];
        h[k + 1] = 0.0;
        rots.push((c, s));
        let gk = g[k];
        g[k] = c * gk;
        g.push(-s * gk);
        h.truncate(k + 1);
        rcols.push(h);

        let est = g[k + 1].abs() / bnorm;
        history.push(est.min(*history.last().unwrap()));
        let breakdown = hnext <= 1e-14 * bnorm || rcols[k][k] == 0.0;

        if est <= config.tol || breakdown || k + 1 == max_iter {
            if rcols[k][k] == 0.0 {
                break;
            }
            let x = form_x(k + 1, &rcols, &g, &basis, &zs, &mut apply_p);
            let ax = apply_a(&x);
            let true_res = norm(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>()) / bnorm;
            if true_res <= config.tol {
                return KrylovResult {
                    x,
                    iterations: k + 1,
                    residual_history: history,
                    relative_residual: true_res,
                    converged: true,
                };
            }
            if best.as_ref().map_or(true, |(_, r)| true_res < *r) {
                best = Some((x, true_res));
            }
            if breakdown {
                break;
            }
        }
        if k + 1 < max_iter {
            basis.push(w.iter().map(|v| v / hnext).collect());
        }
    }

    let iterations = rcols.len();
    let (x, relative_residual) = best.unwrap_or_else(|| (vec![0.0; n], 1.0));
    KrylovResult {
        x,
        iterations,
        residual_history: history,
        relative_residual,
        converged: false,
    }
}

/// Right-preconditioned GMRES with a fixed linear preconditioner.
pub fn gmres(
    apply_a: impl FnMut(&[f64]) -> Vec<f64>,
    apply_p_inv: impl FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    config: &KrylovConfig,
) -> KrylovResult {
    let cfg = KrylovConfig {
        flexible: false,
        ..config.clone()
    };
    run(apply_a, apply_p_inv, b, &cfg)
}

/// Flexible GMRES; the preconditioner may change from one iteration to the
/// next.
pub fn fgmres(
    apply_a: impl FnMut(&[f64]) -> Vec<f64>,
    apply_p_inv: impl FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    config: &KrylovConfig,
) -> KrylovResult {
    let cfg = KrylovConfig {
        flexible: true,
        ..config.clone()
    };
    run(apply_a, apply_p_inv, b, &cfg)
}
