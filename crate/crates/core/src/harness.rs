//! Experiment configuration, orchestration and report files.
//!
//! Configuration is plain `key = value` text, one entry per line, with `#`
//! starting a comment. Recognised keys:
//!
//! | key | default |
//! |-----|---------|
//! | `ny` | 32 |
//! | `N` | 4 (perfect square, at least 4) |
//! | `precond` | `s2` (`s0`, `s1`, `s2`, `exact`) |
//! | `theta` | 0.5, 0.6, 0.7 for N = 4, 16, 64; else 0.5 |
//! | `lanczos_k` | `ceil(sqrt(n_gamma))` |
//! | `rho_low`, `rho_up` | 0.01, 1 |
//! | `volume_fraction` | 0.5 |
//! | `barrier_divisor`, `barrier_floor` | 4, 1e-6 |
//! | `krylov_tol`, `max_krylov` | 1e-6, 1000 |
//! | `step_safety` | 0.9 |
//! | `max_outer`, `terminal_tol` | 60, 1e-8 |
//! | `young`, `poisson` | 1, 0.3 |
//! | `diagnostics` | false |
//! | `out` | `out` |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::interface::PrecondKind;
use crate::ip::{IpConfig, Problem};
use crate::mesh::{GridMesh, Partition};
use crate::newton::{ip_solve, IpResult, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub ny: usize,
    pub n_sub: usize,
    pub solver: SolverConfig,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            ny: 32,
            n_sub: 4,
            solver: SolverConfig::default(),
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Subdomains per side.
    pub fn p(&self) -> usize {
        self.n_sub.isqrt()
    }

    pub fn theta(&self) -> f64 {
        self.solver.theta_for(self.n_sub)
    }

    pub fn problem(&self) -> Result<Problem> {
        Problem::new(self.ny, self.p(), self.solver.ip.material)
    }
}

fn config_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| config_err(key, format!("cannot parse '{value}': {e}")))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let ip = &mut cfg.solver.ip;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(line, format!("line {}: expected key=value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "ny" => cfg.ny = parse_num(key, value)?,
            "N" => cfg.n_sub = parse_num(key, value)?,
            "precond" => {
                cfg.solver.precond = value
                    .parse::<PrecondKind>()
                    .map_err(|e| config_err(key, e.to_string()))?
            }
            "theta" => cfg.solver.theta = Some(parse_num(key, value)?),
            "lanczos_k" => cfg.solver.lanczos_k = Some(parse_num(key, value)?),
            "rho_low" => ip.rho_low = parse_num(key, value)?,
            "rho_up" => ip.rho_up = parse_num(key, value)?,
            "volume_fraction" => ip.volume_fraction = parse_num(key, value)?,
            "barrier_divisor" => ip.barrier_divisor = parse_num(key, value)?,
            "barrier_floor" => ip.barrier_floor = parse_num(key, value)?,
            "krylov_tol" => ip.krylov_tol = parse_num(key, value)?,
            "max_krylov" => ip.max_krylov = parse_num(key, value)?,
            "step_safety" => ip.step_safety = parse_num(key, value)?,
            "max_outer" => ip.max_outer = parse_num(key, value)?,
            "terminal_tol" => ip.terminal_tol = parse_num(key, value)?,
            "young" => ip.material.young = parse_num(key, value)?,
            "poisson" => ip.material.poisson = parse_num(key, value)?,
            "diagnostics" => ip.diagnostics = parse_num(key, value)?,
            "out" => cfg.out = PathBuf::from(value),
            _ => return Err(config_err(key, "unknown key")),
        }
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    let mesh = GridMesh::new(cfg.ny).map_err(|e| config_err("ny", e.to_string()))?;
    let p = cfg.n_sub.isqrt();
    if p * p != cfg.n_sub {
        return Err(config_err("N", format!("{} is not a perfect square", cfg.n_sub)));
    }
    if cfg.n_sub < 4 {
        return Err(config_err("N", "at least 4 subdomains are needed for a non-empty interface"));
    }
    Partition::new(&mesh, p).map_err(|e| config_err("N", e.to_string()))?;
    if let Some(t) = cfg.solver.theta {
        if !(t > 0.0 && t < 1.0) {
            return Err(config_err("theta", format!("{t} outside (0, 1)")));
        }
    }
    if let Some(k) = cfg.solver.lanczos_k {
        let per_component = Partition::new(&mesh, p)?.gamma_nodes.len();
        if k == 0 || k > per_component {
            return Err(config_err(
                "lanczos_k",
                format!("{k} outside 1..={per_component}"),
            ));
        }
    }
    let ip = &cfg.solver.ip;
    let checks: [(&str, bool, &str); 10] = [
        ("rho_low", ip.rho_low > 0.0, "must be positive"),
        ("rho_up", ip.rho_up > ip.rho_low, "must exceed rho_low"),
        (
            "volume_fraction",
            ip.volume_fraction > ip.rho_low && ip.volume_fraction < ip.rho_up,
            "must lie strictly between rho_low and rho_up",
        ),
        ("barrier_divisor", ip.barrier_divisor > 1.0, "must exceed 1"),
        ("barrier_floor", ip.barrier_floor > 0.0, "must be positive"),
        ("krylov_tol", ip.krylov_tol > 0.0 && ip.krylov_tol < 1.0, "must lie in (0, 1)"),
        ("max_krylov", ip.max_krylov > 0, "must be positive"),
        ("step_safety", ip.step_safety > 0.0 && ip.step_safety < 1.0, "must lie in (0, 1)"),
        ("terminal_tol", ip.terminal_tol > 0.0, "must be positive"),
        (
            "poisson",
            ip.material.poisson > -1.0 && ip.material.poisson < 0.5 && ip.material.young > 0.0,
            "need young > 0 and -1 < poisson < 0.5",
        ),
    ];
    for (key, ok, msg) in checks {
        if !ok {
            return Err(config_err(key, msg));
        }
    }
    Ok(())
}

/// Totals in the layout `avg (newton)` / `total`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub total_gmres: usize,
    pub newton_count: usize,
}

impl Summary {
    pub fn from_result(res: &IpResult) -> Self {
        Self {
            total_gmres: res.total_gmres(),
            newton_count: res.newton_count(),
        }
    }

    /// `total / newton` rounded half up to two decimals, in integer
    /// arithmetic.
    pub fn avg_gmres_str(&self) -> String {
        if self.newton_count == 0 {
            return "0.00".into();
        }
        let cents = (200 * self.total_gmres + self.newton_count) / (2 * self.newton_count);
        format!("{}.{:02}", cents / 100, cents % 100)
    }

    pub fn avg_gmres(&self) -> f64 {
        if self.newton_count == 0 {
            0.0
        } else {
            self.total_gmres as f64 / self.newton_count as f64
        }
    }
}

/// Paths written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct Report {
    pub iterations: PathBuf,
    pub summary: PathBuf,
    pub density: PathBuf,
    pub density_pgm: PathBuf,
    pub result: IpResult,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    validate(cfg)?;
    let prob = cfg.problem()?;
    let result = ip_solve(&prob, &cfg.solver)?;
    fs::create_dir_all(&cfg.out)?;

    let iterations = cfg.out.join("iterations.csv");
    fs::write(&iterations, iterations_csv(&result))?;

    let summary = cfg.out.join("summary.txt");
    fs::write(&summary, summary_text(cfg, &prob, &result))?;

    let density = cfg.out.join("density.txt");
    let density_pgm = cfg.out.join("density.pgm");
    write_density_field(&result.state.rho, &prob.mesh, &cfg.solver.ip, &density, &density_pgm)?;
    Ok(Report {
        iterations,
        summary,
        density,
        density_pgm,
        result,
    })
}

pub fn iterations_csv(res: &IpResult) -> String {
    let mut s = String::from("newton_step,gmres_iters,r,s,residual_norm,compliance\n");
    for h in &res.history {
        let _ = writeln!(
            s,
            "{},{},{:.6e},{:.6e},{:.6e},{:.12e}",
            h.newton_step, h.gmres_iters, h.r, h.s, h.residual_norm, h.compliance
        );
    }
    s
}

pub fn summary_text(cfg: &ExperimentConfig, prob: &Problem, res: &IpResult) -> String {
    let sm = Summary::from_result(res);
    let mut s = String::new();
    let _ = writeln!(s, "precond = {}", cfg.solver.precond);
    let _ = writeln!(s, "ny = {}", cfg.ny);
    let _ = writeln!(s, "N = {}", cfg.n_sub);
    let _ = writeln!(s, "theta = {}", cfg.theta());
    let _ = writeln!(s, "n = {}", prob.layout.len());
    let _ = writeln!(s, "n_gamma = {}", prob.part.n_gamma());
    let _ = writeln!(s, "avg_gmres = {} ({})", sm.avg_gmres_str(), sm.newton_count);
    let _ = writeln!(s, "total_gmres = {}", sm.total_gmres);
    let _ = writeln!(s, "newton_count = {}", sm.newton_count);
    let _ = writeln!(s, "initial_compliance = {:.12e}", res.initial_compliance);
    let _ = writeln!(s, "final_compliance = {:.12e}", res.final_compliance);
    let _ = writeln!(s, "final_residual = {:.6e}", res.final_residual);
    s
}

/// Writes the element densities as an ASCII grid (`ny` rows of `nx`
/// values, top row first, 9 significant digits) and as a P2 PGM where
/// `rho_up` maps to 0 (black) and `rho_low` to 255.
pub fn write_density_field(
    rho: &[f64],
    mesh: &GridMesh,
    ip: &IpConfig,
    grid_path: &Path,
    pgm_path: &Path,
) -> Result<()> {
    if rho.len() != mesh.element_count() {
        return Err(Error::InvalidArgument(format!(
            "density has {} entries, mesh has {} elements",
            rho.len(),
            mesh.element_count()
        )));
    }
    fs::write(grid_path, density_grid(rho, mesh))?;
    fs::write(pgm_path, density_pgm(rho, mesh, ip.rho_low, ip.rho_up))?;
    Ok(())
}

fn element_at(mesh: &GridMesh, row: usize, col: usize) -> usize {
    (mesh.ny - 1 - row) * mesh.nx + col
}

pub fn density_grid(rho: &[f64], mesh: &GridMesh) -> String {
    let mut s = String::with_capacity(rho.len() * 16);
    for row in 0..mesh.ny {
        for col in 0..mesh.nx {
            if col > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:.8e}", rho[element_at(mesh, row, col)]);
        }
        s.push('\n');
    }
    s
}

/// Parses a grid written by [`density_grid`] back into element order.
pub fn read_density_grid(text: &str, mesh: &GridMesh) -> Result<Vec<f64>> {
    let mut rho = vec![0.0; mesh.element_count()];
    let rows: Vec<&str> = text.lines().collect();
    if rows.len() != mesh.ny {
        return Err(Error::InvalidArgument(format!("expected {} rows, found {}", mesh.ny, rows.len())));
    }
    for (row, line) in rows.iter().enumerate() {
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != mesh.nx {
            return Err(Error::InvalidArgument(format!("row {row}: expected {} values", mesh.nx)));
        }
        for (col, v) in vals.iter().enumerate() {
            rho[element_at(mesh, row, col)] = v
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("row {row}, column {col}: {e}")))?;
        }
    }
    Ok(rho)
}

pub fn density_pgm(rho: &[f64], mesh: &GridMesh, rho_low: f64, rho_up: f64) -> String {
    let mut s = format!("P2\n{} {}\n255\n", mesh.nx, mesh.ny);
    for row in 0..mesh.ny {
        for col in 0..mesh.nx {
            if col > 0 {
                s.push(' ');
            }
            let t = ((rho_up - rho[element_at(mesh, row, col)]) / (rho_up - rho_low)).clamp(0.0, 1.0);
            let _ = write!(s, "{}", (255.0 * t).round() as u8);
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_input() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg.ny, 32);
        assert_eq!(cfg.n_sub, 4);
        assert_eq!(cfg.solver.precond, PrecondKind::S2);
        assert_eq!(cfg.theta(), 0.5);
    }

    #[test]
    fn table_style_config() {
        let cfg = parse_config("ny=64\nN=4\nprecond=s0").unwrap();
        assert_eq!(cfg.ny, 64);
        assert_eq!(cfg.solver.precond, PrecondKind::S0);
        assert_eq!(cfg.theta(), 0.5);
        let cfg = parse_config("# grid\nny = 64 # fine\nN = 16\n").unwrap();
        assert_eq!(cfg.theta(), 0.6);
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            ("N=5", "N"),
            ("N=1", "N"),
            ("ny=7", "ny"),
            ("N=9\nny=8", "N"),
            ("precond=s3", "precond"),
            ("theta=1.5", "theta"),
            ("bogus=1", "bogus"),
            ("krylov_tol=abc", "krylov_tol"),
            ("volume_fraction=2", "volume_fraction"),
        ];
        for (text, key) in cases {
            match parse_config(text) {
                Err(Error::Config { key: k, .. }) => assert_eq!(k, key, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn average_rounding() {
        let s = Summary {
            total_gmres: 102,
            newton_count: 14,
        };
        assert_eq!(s.avg_gmres_str(), "7.29");
        let s = Summary {
            total_gmres: 1,
            newton_count: 8,
        };
        // 0.125 rounds half up
        assert_eq!(s.avg_gmres_str(), "0.13");
    }

    #[test]
    fn constant_density_grid() {
        let mesh = GridMesh::new(4).unwrap();
        let rho = vec![0.5; mesh.element_count()];
        let g = density_grid(&rho, &mesh);
        assert_eq!(g.lines().count(), 4);
        assert!(g.split_whitespace().all(|v| v == "5.00000000e-1"));
        let pgm = density_pgm(&rho, &mesh, 0.01, 1.0);
        assert!(pgm.starts_with("P2\n8 4\n255\n"));
    }

    #[test]
    fn grid_orientation_is_top_left() {
        let mesh = GridMesh::new(2).unwrap();
        let rho: Vec<f64> = (0..mesh.element_count()).map(|e| e as f64).collect();
        let g = density_grid(&rho, &mesh);
        let first: f64 = g.split_whitespace().next().unwrap().parse().unwrap();
        // top-left element is (i = 0, j = ny - 1)
        assert_eq!(first, ((mesh.ny - 1) * mesh.nx) as f64);
        assert_eq!(read_density_grid(&g, &mesh).unwrap(), rho);
    }
}
